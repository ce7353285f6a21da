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

// Pipeline stages behind the command-line tool. Each stage reads its inputs
// from the work directory and writes its artifacts back there.
#ifndef COMPSEARCH_PIPELINE_H_
#define COMPSEARCH_PIPELINE_H_

#include <map>
#include <string>

#include "compsearch/config.h"
#include "json.hpp"

namespace compsearch {

// One JSON object per line on stderr.
void LogEvent(const std::string& stage, const std::string& event, nlohmann::json fields = {});

// Writes JSON with sorted keys and a trailing newline.
void WriteJsonFile(const std::string& path, const nlohmann::json& j);
nlohmann::json ReadJsonFile(const std::string& path);

// Initialization seed of a model. `role` is 1 for teachers, 2 for students
// and 3 for ablation models; `variant` separates models within a role.
uint64_t ModelSeed(const AppConfig& cfg, uint64_t role, uint64_t variant);

void BuildCorpusStage(const AppConfig& cfg);
void PretrainFilterStage(const AppConfig& cfg);
void MineStage(const AppConfig& cfg);
void TrainTeacherStage(const AppConfig& cfg, TeacherInput input);
void TrainStudentStage(const AppConfig& cfg, InteractionMode mode);
void BuildIndexStage(const AppConfig& cfg, InteractionMode mode);

// Rankers evaluated by EvalStage.
enum class EvalModel { kStudent, kTeacher, kTeacherWhole, kRandom, kOracle };
std::string_view EvalModelName(EvalModel model);
EvalModel ParseEvalModel(std::string_view name);

// Evaluates one model on one split and records the report in metrics.json
// under metrics[split][model]. Returns the report.
MetricReport EvalStage(const AppConfig& cfg, Split split, EvalModel model,
                       InteractionMode mode);
void AblationStage(const AppConfig& cfg);
void BenchStage(const AppConfig& cfg);

// corpus, filter, mining, teacher, student, index, then evaluation of the
// student, the teacher and the random ranker on both test splits.
void PipelineStage(const AppConfig& cfg);

// Hex FNV-1a of a file's bytes.
std::string FileHash(const std::string& path);

}  // namespace compsearch

#endif  // COMPSEARCH_PIPELINE_H_
