// Copyright 2026 The compsearch Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Application configuration: one JSON document mirroring every module
// config, plus command-line overrides.
#ifndef COMPSEARCH_CONFIG_H_
#define COMPSEARCH_CONFIG_H_

#include <cstdint>
#include <string>
#include <vector>

#include "compsearch/corpus.h"
#include "compsearch/evaluation.h"
#include "compsearch/models.h"
#include "compsearch/retrieval.h"
#include "compsearch/sampling.h"
#include "compsearch/training.h"
#include "json.hpp"

namespace compsearch {

struct ServeConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  int max_top_k = 50;
  int threads = 4;
};

// Environment variable that overrides ServeConfig::port.
inline constexpr char kPortEnv[] = "COMPSEARCH_PORT";

struct AppConfig {
  std::string workdir = "work";
  // Every stage seed derives from this one value.
  uint64_t seed = 1;
  int workers = 1;
  CorpusConfig corpus;
  FilterConfig filter;
  MiningConfig mining;
  TrainConfig teacher;
  TrainConfig student;
  ModelGeometry geometry;
  InteractionMode mode = InteractionMode::kMapConcatLocal;
  std::vector<InteractionMode> ablation_modes = {std::begin(kAllModes), std::end(kAllModes)};
  RankOptions rank;
  BenchConfig bench;
  ServeConfig serve;

  // Propagates the top-level seed and worker count into the stage configs
  // and validates them.
  void Finalize();
};

nlohmann::json ToJson(const AppConfig& c);
AppConfig AppConfigFromJson(const nlohmann::json& j);

// Applies "a.b.c=value" to a JSON document. The value is parsed as JSON
// when possible and taken as a string otherwise.
void ApplyOverride(nlohmann::json& doc, const std::string& assignment);

// Reads `path` (empty for defaults), applies the overrides in order and
// finalizes the result.
AppConfig LoadAppConfig(const std::string& path, const std::vector<std::string>& overrides);

// Artifact locations under the work directory.
struct Paths {
  std::string root;

  std::string corpus() const;
  std::string filter() const;
  std::string triplets() const;
  std::string teacher(TeacherInput input) const;
  std::string student(InteractionMode mode) const;
  std::string index(InteractionMode mode, const std::string& category) const;
  std::string metrics() const;
  std::string ablation() const;
  std::string bench() const;
  std::string report(const std::string& stage) const;
};

}  // namespace compsearch

#endif  // COMPSEARCH_CONFIG_H_
