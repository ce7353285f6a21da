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

// Retrieval metrics, split evaluation and the interaction-mode ablation.

#ifndef COMPSEARCH_EVALUATION_H_
#define COMPSEARCH_EVALUATION_H_

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "compsearch/corpus.h"
#include "compsearch/models.h"
#include "compsearch/retrieval.h"
#include "compsearch/training.h"
#include "json.hpp"

namespace compsearch {

// Percentage of queries whose ground truth sits at a 1-based position
// <= k. Position 0 marks a ground truth missing from the ranking.
double RecallAtK(const std::vector<int>& positions, int k);

// Mean over queries of the percentage of positives among the top k.
double PrecisionAtK(const std::vector<std::vector<int>>& ranked_labels, int k);

// Mean of the precision at each positive rank. `total_positives` counts
// positives missing from the list too (0 uses the positives present).
double AveragePrecision(const std::vector<int>& ranked_labels, int total_positives = 0);

// AP of the top `cutoff` items normalized by min(total positives, cutoff).
double TruncatedAveragePrecision(const std::vector<int>& ranked_labels, int cutoff,
                                 int total_positives = 0);

inline constexpr int kCutoffs[] = {1, 5, 10, 20};

struct MetricReport {
  Split split = Split::kTestS;
  std::vector<std::string> categories;
  // Metric name -> value per category, in percent.
  std::map<std::string, std::vector<double>> per_category;
  // Unweighted mean over categories.
  std::map<std::string, double> mean;
  nlohmann::json config;

  double Get(const std::string& metric) const;
  nlohmann::json ToJson() const;
};

// Metric names for a split: R@k for test_s; mAP, mAP@20 and P@k for test_r.
std::vector<std::string> MetricNames(Split split);

// Ranking outcome of one query.
struct QueryOutcome {
  int bg_id = 0;
  RankedResult result;
  int gt_position = 0;         // 1-based, 0 when absent
  std::vector<int> labels;     // oracle labels in ranked order
  int total_positives = 0;     // oracle positives among all candidates
};

QueryOutcome MakeOutcome(const ManifestEntry& entry, RankedResult result);

// Per-category metrics of one split from query outcomes.
std::vector<double> CategoryMetrics(Split split, const std::vector<QueryOutcome>& outcomes);

using QueryRanker =
    std::function<RankedResult(const ManifestEntry& entry, const Raster& background)>;
// Builds the ranker for one category: `queries` holds the split's
// backgrounds, `candidates` the foreground catalog.
using RankerFactory =
    std::function<QueryRanker(const CategoryData& queries, const CategoryData& candidates)>;

RankerFactory StudentRankers(const StudentModel& model, const RankOptions& options);
RankerFactory TeacherRankers(const TeacherModel& teacher, TeacherInput input,
                             const RankOptions& options);
// Seeded uniform scores; no aspect-ratio filter unless enabled in options.
RankerFactory RandomRankers(uint64_t seed, const RankOptions& options);
// Scores each candidate by its oracle label (ground truth for test_s).
RankerFactory OracleRankers(const RankOptions& options);

struct EvalOptions {
  int workers = 1;
};

struct EvalResult {
  MetricReport report;
  std::vector<std::vector<QueryOutcome>> outcomes;  // per category
};

EvalResult Evaluate(const Corpus& corpus, Split split, const RankerFactory& factory,
                    const EvalOptions& options = {});

// Plain-text table: one column per metric, one row per category plus mean.
std::string RenderTable(const MetricReport& report, const std::string& title);

struct AblationRow {
  int row = 0;
  std::string name;
  MetricReport s;
  MetricReport r;
  double train_seconds = 0;
};

struct AblationConfig {
  std::vector<InteractionMode> modes = {std::begin(kAllModes), std::end(kAllModes)};
  bool teachers = true;
  TrainConfig train;
  RankOptions rank;
  EvalOptions eval;
  uint64_t model_seed = 1;
};

// Trains one student per mode against the cropped-composite teacher and
// evaluates it; teacher rows evaluate the given discriminators.
std::vector<AblationRow> RunAblation(
    const Corpus& corpus, const TrainingSet& set, const TeacherModel& cropped_teacher,
    const TeacherModel* whole_teacher, const ModelGeometry& geometry, const AblationConfig& cfg,
    const std::function<void(const AblationRow&)>& on_row = {});

nlohmann::json ToJson(const std::vector<AblationRow>& rows);
std::string RenderAblation(const std::vector<AblationRow>& rows);

}  // namespace compsearch

#endif  // COMPSEARCH_EVALUATION_H_
