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

#include "compsearch/config.h"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "compsearch/common.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;

json GeometryJson(const ModelGeometry& g) {
  return {{"input_size", g.input_size}, {"channels", g.channels}};
}

ModelGeometry GeometryFromJson(const json& j) {
  ModelGeometry g;
  g.input_size = j.value("input_size", g.input_size);
  g.channels = j.value("channels", g.channels);
  return g;
}

std::string Join(const std::string& root, const std::string& leaf) {
  return (std::filesystem::path(root) / leaf).string();
}

}  // namespace

void AppConfig::Finalize() {
  Check(workers >= 1, ErrorCode::kInvalidArgument, "workers must be at least 1");
  Check(!workdir.empty(), ErrorCode::kInvalidArgument, "workdir must not be empty");
  Check(!ablation_modes.empty(), ErrorCode::kInvalidArgument, "ablation needs a mode");
  Check(serve.max_top_k >= 1 && serve.max_top_k <= 50, ErrorCode::kInvalidArgument,
        "serve.max_top_k must lie in [1, 50]");
  Check(geometry.input_size == corpus.scene.size, ErrorCode::kInvalidArgument,
        "geometry.input_size must equal corpus.scene.size");
  corpus.seed = seed;
  filter.seed = MixSeed(seed, 1);
  mining.seed = MixSeed(seed, 2);
  teacher.seed = MixSeed(seed, 3);
  student.seed = MixSeed(seed, 4);
  bench.seed = MixSeed(seed, 5);
  corpus.workers = mining.workers = teacher.workers = student.workers = workers;
  rank.image_size = corpus.scene.size;
  corpus.Validate();
  mining.Validate();
  teacher.Validate();
  student.Validate();
}

json ToJson(const AppConfig& c) {
  std::vector<std::string> modes;
  for (InteractionMode m : c.ablation_modes) modes.emplace_back(ModeName(m));
  return {{"workdir", c.workdir},
          {"seed", c.seed},
          {"workers", c.workers},
          {"corpus", ToJson(c.corpus)},
          {"filter", ToJson(c.filter)},
          {"mining", ToJson(c.mining)},
          {"teacher", ToJson(c.teacher)},
          {"student", ToJson(c.student)},
          {"geometry", GeometryJson(c.geometry)},
          {"mode", ModeName(c.mode)},
          {"ablation_modes", modes},
          {"rank", {{"ar_threshold", c.rank.ar_threshold}}},
          {"bench",
           {{"sizes", c.bench.sizes},
            {"repeats", c.bench.repeats},
            {"teacher_repeats", c.bench.teacher_repeats}}},
          {"serve",
           {{"host", c.serve.host},
            {"port", c.serve.port},
            {"max_top_k", c.serve.max_top_k},
            {"threads", c.serve.threads}}}};
}

AppConfig AppConfigFromJson(const json& j) {
  Check(j.is_object(), ErrorCode::kInvalidArgument, "config must be a JSON object");
  static const char* kKnown[] = {"workdir", "seed",    "workers",  "corpus",
                                 "filter",  "mining",  "teacher",  "student",
                                 "geometry", "mode",   "ablation_modes", "rank",
                                 "bench",   "serve"};
  for (const auto& [key, value] : j.items()) {
    Check(std::find(std::begin(kKnown), std::end(kKnown), key) != std::end(kKnown),
          ErrorCode::kInvalidArgument, "unknown config key: " + key);
  }
  AppConfig c;
  try {
    c.workdir = j.value("workdir", c.workdir);
    c.seed = j.value("seed", c.seed);
    c.workers = j.value("workers", c.workers);
    if (j.contains("corpus")) c.corpus = CorpusConfigFromJson(j.at("corpus"));
    if (j.contains("filter")) c.filter = FilterConfigFromJson(j.at("filter"));
    if (j.contains("mining")) c.mining = MiningConfigFromJson(j.at("mining"));
    if (j.contains("teacher")) c.teacher = TrainConfigFromJson(j.at("teacher"));
    if (j.contains("student")) c.student = TrainConfigFromJson(j.at("student"));
    if (j.contains("geometry")) c.geometry = GeometryFromJson(j.at("geometry"));
    if (j.contains("mode")) c.mode = ParseMode(j.at("mode").get<std::string>());
    if (j.contains("ablation_modes")) {
      c.ablation_modes.clear();
      for (const auto& m : j.at("ablation_modes")) {
        c.ablation_modes.push_back(ParseMode(m.get<std::string>()));
      }
    }
    if (j.contains("rank")) {
      c.rank.ar_threshold = j.at("rank").value("ar_threshold", c.rank.ar_threshold);
    }
    if (j.contains("bench")) {
      const json& b = j.at("bench");
      c.bench.sizes = b.value("sizes", c.bench.sizes);
      c.bench.repeats = b.value("repeats", c.bench.repeats);
      c.bench.teacher_repeats = b.value("teacher_repeats", c.bench.teacher_repeats);
    }
    if (j.contains("serve")) {
      const json& s = j.at("serve");
      c.serve.host = s.value("host", c.serve.host);
      c.serve.port = s.value("port", c.serve.port);
      c.serve.max_top_k = s.value("max_top_k", c.serve.max_top_k);
      c.serve.threads = s.value("threads", c.serve.threads);
    }
  } catch (const json::exception& e) {
    Fail(ErrorCode::kInvalidArgument, std::string("bad config value: ") + e.what());
  }
  return c;
}

void ApplyOverride(json& doc, const std::string& assignment) {
  const size_t eq = assignment.find('=');
  Check(eq != std::string::npos && eq > 0, ErrorCode::kInvalidArgument,
        "override must look like key.path=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json* node = &doc;
  size_t begin = 0;
  while (true) {
    const size_t dot = key.find('.', begin);
    const std::string part = key.substr(begin, dot - begin);
    Check(!part.empty(), ErrorCode::kInvalidArgument, "empty component in key '" + key + "'");
    if (!node->is_object()) *node = json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    begin = dot + 1;
  }
  *node = std::move(value);
}

AppConfig LoadAppConfig(const std::string& path, const std::vector<std::string>& overrides) {
  json doc = json::object();
  if (!path.empty()) {
    std::ifstream in(path);
    Check(in.good(), ErrorCode::kNotFound, "cannot open config " + path);
    doc = json::parse(in, nullptr, false);
    Check(!doc.is_discarded(), ErrorCode::kInvalidArgument, "config " + path + " is not JSON");
  }
  for (const std::string& o : overrides) ApplyOverride(doc, o);
  AppConfig c = AppConfigFromJson(doc);
  c.Finalize();
  return c;
}

std::string Paths::corpus() const { return Join(root, "corpus"); }
std::string Paths::filter() const { return Join(root, "filter.ckpt"); }
std::string Paths::triplets() const { return Join(root, "triplets.json"); }
std::string Paths::teacher(TeacherInput input) const {
  return Join(root, input == TeacherInput::kCroppedComposite ? "teacher.ckpt"
                                                             : "teacher_whole.ckpt");
}
std::string Paths::student(InteractionMode mode) const {
  return Join(root, "student_" + std::string(ModeName(mode)) + ".ckpt");
}
std::string Paths::index(InteractionMode mode, const std::string& category) const {
  return Join(Join(Join(root, "index"), std::string(ModeName(mode))), category + ".idx");
}
std::string Paths::metrics() const { return Join(root, "metrics.json"); }
std::string Paths::ablation() const { return Join(root, "ablation.json"); }
std::string Paths::bench() const { return Join(root, "bench.json"); }
std::string Paths::report(const std::string& stage) const {
  return Join(Join(root, "reports"), stage + ".json");
}

}  // namespace compsearch
