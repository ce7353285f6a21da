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

#include "compsearch/evaluation.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <memory>
#include <numeric>
#include <set>

#include "compsearch/common.h"
#include "compsearch/imaging.h"
#include "compsearch/rng.h"

namespace compsearch {
namespace {

using nlohmann::json;

constexpr int kTruncation = 20;

int CountPositives(const std::vector<int>& labels) {
  return static_cast<int>(std::count(labels.begin(), labels.end(), 1));
}

// Splits a manifest entry's candidates by the aspect-ratio filter.
std::pair<std::vector<int>, std::vector<int>> FilterCandidates(const ManifestEntry& entry,
                                                               const CategoryData& candidates,
                                                               const RankOptions& options) {
  std::vector<int> kept;
  std::vector<int> excluded;
  const double box_aspect = entry.query_box.AspectRatio(options.image_size, options.image_size);
  for (int id : entry.candidates) {
    const auto it = candidates.foregrounds.find(id);
    Check(it != candidates.foregrounds.end(), ErrorCode::kNotFound,
          "candidate foreground " + std::to_string(id) + " is missing");
    if (options.ar_threshold > 0 &&
        !ArCompatible(box_aspect, imaging::GlyphAspectRatio(it->second), options.ar_threshold)) {
      excluded.push_back(id);
    } else {
      kept.push_back(id);
    }
  }
  std::sort(excluded.begin(), excluded.end());
  return {kept, excluded};
}

template <typename ScoreFn>
QueryRanker ScoringRanker(const CategoryData& candidates, const RankOptions& options,
                          ScoreFn score) {
  return [&candidates, options, score](const ManifestEntry& entry, const Raster&) {
    auto [kept, excluded] = FilterCandidates(entry, candidates, options);
    RankedResult result;
    result.excluded = std::move(excluded);
    if (kept.empty()) result.note = "no foreground passes the aspect-ratio filter";
    for (int id : kept) result.ranked.push_back({id, score(entry, id)});
    SortRanking(result.ranked);
    return result;
  };
}

}  // namespace

double RecallAtK(const std::vector<int>& positions, int k) {
  Check(!positions.empty(), ErrorCode::kInvalidArgument, "recall needs at least one query");
  Check(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  int hits = 0;
  for (int p : positions) {
    Check(p >= 0, ErrorCode::kInvalidArgument, "ranked positions are 1-based, 0 for missing");
    if (p >= 1 && p <= k) ++hits;
  }
  return 100.0 * hits / static_cast<double>(positions.size());
}

double PrecisionAtK(const std::vector<std::vector<int>>& ranked_labels, int k) {
  Check(!ranked_labels.empty(), ErrorCode::kInvalidArgument, "precision needs at least one query");
  Check(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  double total = 0;
  for (const auto& labels : ranked_labels) {
    Check(static_cast<int>(labels.size()) >= k, ErrorCode::kInvalidArgument,
          "k = " + std::to_string(k) + " exceeds a ranking of length " +
              std::to_string(labels.size()));
    total += 100.0 * CountPositives({labels.begin(), labels.begin() + k}) / k;
  }
  return total / static_cast<double>(ranked_labels.size());
}

namespace {

// Sum of precision at each positive rank within the first `n` items, and
// the positive count used for normalization.
std::pair<double, int> PrecisionSum(const std::vector<int>& ranked_labels, int n,
                                    int total_positives) {
  const int present = CountPositives(ranked_labels);
  const int positives = total_positives > 0 ? total_positives : present;
  Check(positives >= 1, ErrorCode::kInvalidArgument, "average precision needs a positive");
  Check(present <= positives, ErrorCode::kInvalidArgument,
        "ranking holds more positives than total_positives");
  n = std::min(n, static_cast<int>(ranked_labels.size()));
  double sum = 0;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    if (ranked_labels[i] == 1) sum += static_cast<double>(++hits) / (i + 1);
  }
  return {sum, positives};
}

}  // namespace

double AveragePrecision(const std::vector<int>& ranked_labels, int total_positives) {
  const auto [sum, positives] =
      PrecisionSum(ranked_labels, static_cast<int>(ranked_labels.size()), total_positives);
  return sum / positives;
}

double TruncatedAveragePrecision(const std::vector<int>& ranked_labels, int cutoff,
                                 int total_positives) {
  Check(cutoff >= 1, ErrorCode::kInvalidArgument, "cutoff must be positive");
  const auto [sum, positives] = PrecisionSum(ranked_labels, cutoff, total_positives);
  return sum / std::min(positives, cutoff);
}

double MetricReport::Get(const std::string& metric) const {
  const auto it = mean.find(metric);
  Check(it != mean.end(), ErrorCode::kNotFound,
        "metric " + metric + " is not part of the " + std::string(SplitName(split)) + " report");
  return it->second;
}

json MetricReport::ToJson() const {
  return {{"split", SplitName(split)},
          {"categories", categories},
          {"per_category", per_category},
          {"mean", mean},
          {"config", config}};
}

std::vector<std::string> MetricNames(Split split) {
  std::vector<std::string> names;
  if (split == Split::kTestS) {
    for (int k : kCutoffs) names.push_back("R@" + std::to_string(k));
  } else {
    names = {"mAP", "mAP@20"};
    for (int k : kCutoffs) names.push_back("P@" + std::to_string(k));
  }
  return names;
}

QueryOutcome MakeOutcome(const ManifestEntry& entry, RankedResult result) {
  std::map<int, int> label_of;
  for (size_t i = 0; i < entry.candidates.size(); ++i) {
    label_of[entry.candidates[i]] = entry.labels[i];
  }
  QueryOutcome out;
  out.bg_id = entry.bg_id;
  out.total_positives = CountPositives(entry.labels);
  for (size_t i = 0; i < result.ranked.size(); ++i) {
    const int id = result.ranked[i].fg_id;
    const auto it = label_of.find(id);
    Check(it != label_of.end(), ErrorCode::kInvalidArgument,
          "ranking for background " + std::to_string(entry.bg_id) + " holds non-candidate " +
              std::to_string(id));
    out.labels.push_back(it->second);
    if (id == entry.gt_fg_id) out.gt_position = static_cast<int>(i) + 1;
  }
  out.result = std::move(result);
  return out;
}

std::vector<double> CategoryMetrics(Split split, const std::vector<QueryOutcome>& outcomes) {
  Check(!outcomes.empty(), ErrorCode::kInvalidArgument, "no queries to evaluate");
  std::vector<double> values;
  if (split == Split::kTestS) {
    std::vector<int> positions;
    for (const QueryOutcome& o : outcomes) positions.push_back(o.gt_position);
    for (int k : kCutoffs) values.push_back(RecallAtK(positions, k));
    return values;
  }
  double ap = 0;
  double ap20 = 0;
  std::vector<std::vector<int>> padded;
  for (const QueryOutcome& o : outcomes) {
    ap += 100.0 * AveragePrecision(o.labels, o.total_positives);
    ap20 += 100.0 * TruncatedAveragePrecision(o.labels, kTruncation, o.total_positives);
    std::vector<int> labels = o.labels;
    // Items removed by the aspect-ratio filter count as non-matches.
    if (labels.size() < static_cast<size_t>(kTruncation)) labels.resize(kTruncation, 0);
    padded.push_back(std::move(labels));
  }
  values.push_back(ap / outcomes.size());
  values.push_back(ap20 / outcomes.size());
  for (int k : kCutoffs) values.push_back(PrecisionAtK(padded, k));
  return values;
}

RankerFactory StudentRankers(const StudentModel& model, const RankOptions& options) {
  return [&model, options](const CategoryData& queries, const CategoryData& candidates) {
    struct State {
      ForegroundIndex index;
      std::unique_ptr<StudentRanker> ranker;
    };
    auto state = std::make_shared<State>();
    state->index = BuildIndex(candidates.foregrounds, model,
                              std::string(CategoryName(queries.manifest.category)), 0);
    state->ranker = std::make_unique<StudentRanker>(model, state->index);
    return QueryRanker([state, options](const ManifestEntry& entry, const Raster& background) {
      return state->ranker->Rank(background, entry.query_box, options);
    });
  };
}

RankerFactory TeacherRankers(const TeacherModel& teacher, TeacherInput input,
                             const RankOptions& options) {
  return [&teacher, input, options](const CategoryData&, const CategoryData& candidates) {
    return QueryRanker([&teacher, input, options, &candidates](const ManifestEntry& entry,
                                                               const Raster& background) {
      return RankTeacher(background, entry.query_box, candidates.foregrounds, teacher, input,
                         options);
    });
  };
}

RankerFactory RandomRankers(uint64_t seed, const RankOptions& options) {
  return [seed, options](const CategoryData&, const CategoryData& candidates) {
    return ScoringRanker(candidates, options, [seed](const ManifestEntry& entry, int id) {
      return Rng(MixSeed(seed, entry.bg_id, id)).Uniform();
    });
  };
}

RankerFactory OracleRankers(const RankOptions& options) {
  return [options](const CategoryData& queries, const CategoryData& candidates) {
    const Split split = queries.manifest.split;
    return ScoringRanker(candidates, options, [split](const ManifestEntry& entry, int id) {
      if (split == Split::kTestS) return id == entry.gt_fg_id ? 1.0 : 0.0;
      const auto it = std::find(entry.candidates.begin(), entry.candidates.end(), id);
      return static_cast<double>(entry.labels[it - entry.candidates.begin()]);
    });
  };
}

EvalResult Evaluate(const Corpus& corpus, Split split, const RankerFactory& factory,
                    const EvalOptions& options) {
  Check(split != Split::kTrain, ErrorCode::kInvalidArgument, "evaluation needs a test split");
  const std::vector<CategoryData>& data = corpus.split(split);
  Check(!data.empty(), ErrorCode::kInvalidArgument, "corpus has no categories");
  const std::vector<std::string> names = MetricNames(split);
  EvalResult out;
  out.report.split = split;
  for (const std::string& n : names) out.report.per_category[n] = {};
  for (size_t c = 0; c < data.size(); ++c) {
    const CategoryData& queries = data[c];
    const QueryRanker rank = factory(queries, corpus.ForegroundSource(split, c));
    const auto& entries = queries.manifest.entries;
    std::vector<QueryOutcome> outcomes(entries.size());
    ParallelFor(static_cast<int>(entries.size()), options.workers, [&](int i) {
      const ManifestEntry& e = entries[i];
      const auto bg = queries.backgrounds.find(e.bg_id);
      Check(bg != queries.backgrounds.end(), ErrorCode::kNotFound,
            "background " + std::to_string(e.bg_id) + " is missing");
      outcomes[i] = MakeOutcome(e, rank(e, bg->second));
    });
    const std::vector<double> values = CategoryMetrics(split, outcomes);
    out.report.categories.emplace_back(CategoryName(queries.manifest.category));
    for (size_t m = 0; m < names.size(); ++m) out.report.per_category[names[m]].push_back(values[m]);
    out.outcomes.push_back(std::move(outcomes));
  }
  for (const std::string& n : names) {
    const auto& v = out.report.per_category[n];
    out.report.mean[n] = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  }
  return out;
}

std::string RenderTable(const MetricReport& report, const std::string& title) {
  const std::vector<std::string> names = MetricNames(report.split);
  std::string out = title + "\n";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-10s", "category");
  out += buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof(buf), " %8s", n.c_str());
    out += buf;
  }
  out += "\n";
  auto row = [&](const std::string& label, auto value) {
    std::snprintf(buf, sizeof(buf), "%-10s", label.c_str());
    out += buf;
    for (const auto& n : names) {
      std::snprintf(buf, sizeof(buf), " %8.2f", value(n));
      out += buf;
    }
    out += "\n";
  };
  for (size_t c = 0; c < report.categories.size(); ++c) {
    row(report.categories[c], [&](const std::string& n) { return report.per_category.at(n)[c]; });
  }
  row("mean", [&](const std::string& n) { return report.mean.at(n); });
  return out;
}

std::vector<AblationRow> RunAblation(const Corpus& corpus, const TrainingSet& set,
                                     const TeacherModel& cropped_teacher,
                                     const TeacherModel* whole_teacher,
                                     const ModelGeometry& geometry, const AblationConfig& cfg,
                                     const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  auto finish = [&](AblationRow row, const RankerFactory& factory) {
    row.s = Evaluate(corpus, Split::kTestS, factory, cfg.eval).report;
    row.r = Evaluate(corpus, Split::kTestR, factory, cfg.eval).report;
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  };
  for (InteractionMode mode : cfg.modes) {
    StudentModel student(geometry, mode, cfg.model_seed);
    const TrainReport report = TrainStudent(student, cropped_teacher,
                                            TeacherInput::kCroppedComposite, set, cfg.train);
    AblationRow row;
    row.row = ModeRow(mode);
    row.name = std::string(ModeName(mode));
    row.train_seconds = report.wall_seconds;
    finish(std::move(row), StudentRankers(student, cfg.rank));
  }
  if (cfg.teachers) {
    if (whole_teacher != nullptr) {
      finish({9, "teacher_whole", {}, {}, 0},
             TeacherRankers(*whole_teacher, TeacherInput::kWholeComposite, cfg.rank));
    }
    finish({10, "teacher_cropped", {}, {}, 0},
           TeacherRankers(cropped_teacher, TeacherInput::kCroppedComposite, cfg.rank));
  }
  return rows;
}

json ToJson(const std::vector<AblationRow>& rows) {
  json out = json::array();
  for (const AblationRow& r : rows) {
    out.push_back({{"row", r.row},
                   {"name", r.name},
                   {"test_s", r.s.mean},
                   {"test_r", r.r.mean},
                   {"train_seconds", r.train_seconds}});
  }
  return out;
}

std::string RenderAblation(const std::vector<AblationRow>& rows) {
  std::vector<std::string> names = MetricNames(Split::kTestS);
  for (const auto& n : MetricNames(Split::kTestR)) names.push_back(n);
  std::string out;
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%-4s %-20s", "row", "model");
  out += buf;
  for (const auto& n : names) {
    std::snprintf(buf, sizeof(buf), " %7s", n.c_str());
    out += buf;
  }
  out += "\n";
  for (const AblationRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-4d %-20s", r.row, r.name.c_str());
    out += buf;
    for (const auto& n : names) {
      const bool s = n.rfind("R@", 0) == 0;
      std::snprintf(buf, sizeof(buf), " %7.2f", s ? r.s.Get(n) : r.r.Get(n));
      out += buf;
    }
    out += "\n";
  }
  return out;
}

}  // namespace compsearch
