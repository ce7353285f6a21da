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

#include "compsearch/sampling.h"

#include <algorithm>
#include <fstream>
#include <set>

#include "compsearch/common.h"
#include "compsearch/rng.h"
#include "compsearch/training.h"

namespace compsearch {
namespace {

using nlohmann::json;

std::string_view AugmentationName(Augmentation a) {
  switch (a) {
    case Augmentation::kNone: return "none";
    case Augmentation::kPositive: return "positive";
    case Augmentation::kNegative: return "negative";
  }
  return "unknown";
}

Augmentation ParseAugmentation(std::string_view name) {
  if (name == "none") return Augmentation::kNone;
  if (name == "positive") return Augmentation::kPositive;
  if (name == "negative") return Augmentation::kNegative;
  Fail(ErrorCode::kInvalidArgument, "unknown augmentation '" + std::string(name) + "'");
}

json ItemJson(const TripletItem& item) {
  return {{"fg_id", item.fg_id},
          {"source", SourceName(item.source)},
          {"augmentation", AugmentationName(item.augmentation)},
          {"seed", item.seed}};
}

TripletItem ItemFromJson(const json& j) {
  return {j.at("fg_id").get<int>(), ParseSource(j.at("source").get<std::string>()),
          ParseAugmentation(j.at("augmentation").get<std::string>()),
          j.at("seed").get<uint64_t>()};
}

// Descending score, ascending id on ties.
void SortByScore(std::vector<ScoredCandidate>& v) {
  std::sort(v.begin(), v.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.score != b.score ? a.score > b.score : a.fg_id < b.fg_id;
  });
}

}  // namespace

void TrainTriplet::Validate() const {
  const std::string where = "triplet for background " + std::to_string(bg_id);
  Check(!positives.empty(), ErrorCode::kInvalidArgument, where + " has no positives");
  const TripletItem& gt = positives.front();
  Check(gt.fg_id == bg_id && gt.source == SampleSource::kSameImageGt &&
            gt.augmentation == Augmentation::kNone,
        ErrorCode::kInvalidArgument, where + " does not lead with its ground truth");
  std::set<std::tuple<int, Augmentation, uint64_t>> pos;
  for (const TripletItem& p : positives) pos.insert(p.Key());
  Check(pos.size() == positives.size(), ErrorCode::kInvalidArgument,
        where + " repeats a positive");
  for (const TripletItem& n : negatives) {
    Check(!pos.count(n.Key()), ErrorCode::kInvalidArgument,
          where + " lists foreground " + std::to_string(n.fg_id) +
              " as both positive and negative");
  }
}

json ToJson(const TrainTriplet& t) {
  json pos = json::array(), neg = json::array();
  for (const auto& p : t.positives) pos.push_back(ItemJson(p));
  for (const auto& n : t.negatives) neg.push_back(ItemJson(n));
  return {{"category", t.category},
          {"bg_id", t.bg_id},
          {"query_box", ToJson(t.query_box)},
          {"positives", std::move(pos)},
          {"negatives", std::move(neg)}};
}

TrainTriplet TripletFromJson(const json& j) {
  TrainTriplet t;
  t.category = j.at("category").get<int>();
  t.bg_id = j.at("bg_id").get<int>();
  t.query_box = BoxFromJson(j.at("query_box"));
  for (const json& p : j.at("positives")) t.positives.push_back(ItemFromJson(p));
  for (const json& n : j.at("negatives")) t.negatives.push_back(ItemFromJson(n));
  t.Validate();
  return t;
}

void SaveTriplets(const std::vector<TrainTriplet>& triplets, const std::string& path) {
  json arr = json::array();
  for (const auto& t : triplets) arr.push_back(ToJson(t));
  std::ofstream f(path);
  Check(static_cast<bool>(f), ErrorCode::kIo, "cannot write " + path);
  f << json{{"format_version", 1}, {"triplets", std::move(arr)}}.dump(1) << "\n";
}

std::vector<TrainTriplet> LoadTriplets(const std::string& path) {
  std::ifstream f(path);
  Check(static_cast<bool>(f), ErrorCode::kNotFound, "triplets not found: " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::exception& e) {
    Fail(ErrorCode::kCorrupt, path + " is not valid JSON: " + e.what());
  }
  Check(j.value("format_version", 0) == 1, ErrorCode::kVersionMismatch,
        "unsupported triplet format in " + path);
  std::vector<TrainTriplet> out;
  for (const json& t : j.at("triplets")) out.push_back(TripletFromJson(t));
  return out;
}

std::string_view PositiveSourceName(PositiveSource source) {
  switch (source) {
    case PositiveSource::kGroundTruth: return "ground_truth";
    case PositiveSource::kClassifierThreshold: return "classifier_threshold";
    case PositiveSource::kTeacherTopK: return "teacher_top_k";
  }
  return "unknown";
}

PositiveSource ParsePositiveSource(std::string_view name) {
  for (PositiveSource s : {PositiveSource::kGroundTruth, PositiveSource::kClassifierThreshold,
                           PositiveSource::kTeacherTopK}) {
    if (PositiveSourceName(s) == name) return s;
  }
  Fail(ErrorCode::kInvalidArgument, "unknown positive source '" + std::string(name) + "'");
}

void MiningConfig::Validate() const {
  Check(0.0 < neg_threshold && neg_threshold < pos_threshold && pos_threshold < 1.0,
        ErrorCode::kInvalidArgument, "mining thresholds must satisfy 0 < neg < pos < 1");
  Check(negatives >= 1 && max_positives >= 1 && top_k_teacher >= 1,
        ErrorCode::kInvalidArgument, "mining counts must be positive");
  Check(augmented_positives >= 0 && augmented_negatives >= 0, ErrorCode::kInvalidArgument,
        "augmentation counts must be non-negative");
  Check(pool_size >= negatives, ErrorCode::kInvalidArgument,
        "pool_size must be at least the number of negatives");
}

json ToJson(const MiningConfig& c) {
  return {{"neg_threshold", c.neg_threshold},
          {"pos_threshold", c.pos_threshold},
          {"negatives", c.negatives},
          {"max_positives", c.max_positives},
          {"top_k_teacher", c.top_k_teacher},
          {"augmented_positives", c.augmented_positives},
          {"augmented_negatives", c.augmented_negatives},
          {"pool_size", c.pool_size},
          {"positives", PositiveSourceName(c.positives)},
          {"augment", c.augment},
          {"seed", c.seed}};
}

MiningConfig MiningConfigFromJson(const json& j, MiningConfig c) {
  c.neg_threshold = j.value("neg_threshold", c.neg_threshold);
  c.pos_threshold = j.value("pos_threshold", c.pos_threshold);
  c.negatives = j.value("negatives", c.negatives);
  c.max_positives = j.value("max_positives", c.max_positives);
  c.top_k_teacher = j.value("top_k_teacher", c.top_k_teacher);
  c.augmented_positives = j.value("augmented_positives", c.augmented_positives);
  c.augmented_negatives = j.value("augmented_negatives", c.augmented_negatives);
  c.pool_size = j.value("pool_size", c.pool_size);
  if (j.contains("positives")) c.positives = ParsePositiveSource(j.at("positives").get<std::string>());
  c.augment = j.value("augment", c.augment);
  c.seed = j.value("seed", c.seed);
  c.workers = j.value("workers", c.workers);
  return c;
}

std::vector<int> MineNegatives(int gt_id, const std::vector<ScoredCandidate>& scored,
                               const MiningConfig& cfg, uint64_t seed,
                               const std::vector<int>& exclude) {
  std::vector<ScoredCandidate> below, rest;
  std::set<int> seen(exclude.begin(), exclude.end());
  seen.insert(gt_id);
  for (const ScoredCandidate& c : scored) {
    if (!seen.insert(c.fg_id).second) continue;
    (c.score < cfg.neg_threshold ? below : rest).push_back(c);
  }
  std::sort(below.begin(), below.end(),
            [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.fg_id < b.fg_id; });
  std::vector<int> out;
  if (static_cast<int>(below.size()) > cfg.negatives) {
    Rng rng(seed);
    rng.Shuffle(below.begin(), below.end());
    below.resize(cfg.negatives);
    std::sort(below.begin(), below.end(),
              [](const ScoredCandidate& a, const ScoredCandidate& b) { return a.fg_id < b.fg_id; });
  }
  for (const auto& c : below) out.push_back(c.fg_id);
  // Too few confident negatives: fill with the lowest-scoring others.
  std::sort(rest.begin(), rest.end(), [](const ScoredCandidate& a, const ScoredCandidate& b) {
    return a.score != b.score ? a.score < b.score : a.fg_id < b.fg_id;
  });
  for (size_t i = 0; i < rest.size() && static_cast<int>(out.size()) < cfg.negatives; ++i) {
    out.push_back(rest[i].fg_id);
  }
  return out;
}

std::vector<int> ExtendPositives(int gt_id, const std::vector<ScoredCandidate>& scored,
                                 const MiningConfig& cfg) {
  std::vector<ScoredCandidate> above;
  for (const ScoredCandidate& c : scored) {
    if (c.fg_id != gt_id && c.score > cfg.pos_threshold) above.push_back(c);
  }
  SortByScore(above);
  std::vector<int> out = {gt_id};
  for (const auto& c : above) {
    if (static_cast<int>(out.size()) >= cfg.max_positives) break;
    if (std::find(out.begin(), out.end(), c.fg_id) == out.end()) out.push_back(c.fg_id);
  }
  return out;
}

std::vector<int> TeacherTopPositives(int gt_id, const std::vector<ScoredCandidate>& scored,
                                     int k) {
  Check(k >= 1, ErrorCode::kInvalidArgument, "k must be positive");
  std::vector<ScoredCandidate> ranked = scored;
  SortByScore(ranked);
  std::vector<int> out = {gt_id};
  for (const auto& c : ranked) {
    if (static_cast<int>(out.size()) >= k) break;
    if (c.fg_id != gt_id && std::find(out.begin(), out.end(), c.fg_id) == out.end()) {
      out.push_back(c.fg_id);
    }
  }
  return out;
}

TrainTriplet ApplyAugmentation(const TrainTriplet& triplet, const MiningConfig& cfg,
                               uint64_t seed) {
  TrainTriplet out = triplet;
  const int gt = triplet.positives.front().fg_id;
  for (int i = 0; i < cfg.augmented_positives; ++i) {
    out.positives.push_back({gt, SampleSource::kAugmented, Augmentation::kPositive,
                             MixSeed(seed, 0x2b, i)});
  }
  for (int i = 0; i < cfg.augmented_negatives; ++i) {
    out.negatives.push_back({gt, SampleSource::kAugmented, Augmentation::kNegative,
                             MixSeed(seed, 0x2d, i)});
  }
  out.Validate();
  return out;
}

Raster MaterializeForeground(const TripletItem& item, const Raster& source, double tau_geo) {
  switch (item.augmentation) {
    case Augmentation::kNone: return source;
    case Augmentation::kPositive: {
      Raster r = imaging::AugmentPositive(source, item.seed);
      r.Quantize();
      return r;
    }
    case Augmentation::kNegative: {
      Raster r = imaging::AugmentNegative(source, item.seed, tau_geo);
      r.Quantize();
      return r;
    }
  }
  return source;
}

std::vector<double> ScoreComposites(const TeacherModel& model, TeacherInput input,
                                    const Raster& background, const Box& query_box,
                                    const std::vector<const Raster*>& foregrounds, int batch) {
  const int size = model.geometry().input_size;
  std::vector<double> scores;
  for (size_t start = 0; start < foregrounds.size(); start += batch) {
    const size_t end = std::min(foregrounds.size(), start + batch);
    std::vector<Raster> crops;
    for (size_t i = start; i < end; ++i) {
      crops.push_back(TeacherCrop(background, query_box, *foregrounds[i], input, size));
    }
    for (const auto& o : model.ForwardBatch(crops)) scores.push_back(o.score);
  }
  return scores;
}

json ToJson(const FilterConfig& c) {
  return {{"epochs", c.epochs},
          {"batch", c.batch},
          {"lr", c.lr},
          {"negatives_per_positive", c.negatives_per_positive},
          {"seed", c.seed}};
}

FilterConfig FilterConfigFromJson(const json& j, FilterConfig c) {
  c.epochs = j.value("epochs", c.epochs);
  c.batch = j.value("batch", c.batch);
  c.lr = j.value("lr", c.lr);
  c.negatives_per_positive = j.value("negatives_per_positive", c.negatives_per_positive);
  c.seed = j.value("seed", c.seed);
  return c;
}

TeacherModel PretrainFilterClassifier(const Corpus& corpus, const FilterConfig& cfg,
                                      TrainReport* report) {
  size_t total = 0;
  for (const auto& cat : corpus.train) total += cat.manifest.entries.size();
  Check(total > 0, ErrorCode::kInvalidArgument, "training manifest is empty");

  auto examples = [&](int epoch) {
    std::vector<CompositeExample> out;
    Rng rng(MixSeed(cfg.seed, 0x66696c74, epoch));
    for (const CategoryData& cat : corpus.train) {
      const auto& entries = cat.manifest.entries;
      const int n = static_cast<int>(entries.size());
      for (int i = 0; i < n; ++i) {
        const ManifestEntry& e = entries[i];
        const Raster* bg = &cat.backgrounds.at(e.bg_id);
        out.push_back({bg, e.query_box, &cat.foregrounds.at(e.gt_fg_id), 1});
        for (int k = 0; k < cfg.negatives_per_positive && n > 1; ++k) {
          int j = rng.UniformInt(n - 1);
          if (j >= i) ++j;
          out.push_back({bg, e.query_box, &cat.foregrounds.at(entries[j].gt_fg_id), 0});
        }
      }
    }
    return out;
  };
  TrainConfig tc;
  tc.epochs = cfg.epochs;
  tc.batch = cfg.batch;
  tc.adam.lr = cfg.lr;
  tc.seed = cfg.seed;
  TeacherModel model(ModelGeometry{corpus.config.scene.size}, MixSeed(cfg.seed, 0x66));
  TrainReport r = TrainCompositeClassifier(model, TeacherInput::kCroppedComposite, examples,
                                           tc, "filter");
  if (report) *report = std::move(r);
  return model;
}

std::vector<TrainTriplet> MineTriplets(const Corpus& corpus, const TeacherModel& filter,
                                       const TeacherModel* teacher, const MiningConfig& cfg) {
  cfg.Validate();
  Check(cfg.positives != PositiveSource::kTeacherTopK || teacher != nullptr,
        ErrorCode::kInvalidArgument, "teacher top-k positives need a teacher checkpoint");
  struct Job {
    int category;
    int entry;
  };
  std::vector<Job> jobs;
  for (size_t c = 0; c < corpus.train.size(); ++c) {
    for (size_t e = 0; e < corpus.train[c].manifest.entries.size(); ++e) {
      jobs.push_back({static_cast<int>(c), static_cast<int>(e)});
    }
  }
  std::vector<TrainTriplet> out(jobs.size());
  ParallelFor(static_cast<int>(jobs.size()), cfg.workers, [&](int j) {
    const CategoryData& cat = corpus.train[jobs[j].category];
    const auto& entries = cat.manifest.entries;
    const ManifestEntry& e = entries[jobs[j].entry];
    const uint64_t seed = MixSeed(cfg.seed, jobs[j].category, e.bg_id);

    std::vector<int> pool;
    for (const auto& other : entries) {
      if (other.gt_fg_id != e.gt_fg_id) pool.push_back(other.gt_fg_id);
    }
    Rng rng(MixSeed(seed, 0x706f6f6c));
    rng.Shuffle(pool.begin(), pool.end());
    if (static_cast<int>(pool.size()) > cfg.pool_size) pool.resize(cfg.pool_size);
    std::sort(pool.begin(), pool.end());

    std::vector<const Raster*> fgs;
    for (int id : pool) fgs.push_back(&cat.foregrounds.at(id));
    const Raster& bg = cat.backgrounds.at(e.bg_id);
    const std::vector<double> filter_scores =
        ScoreComposites(filter, TeacherInput::kCroppedComposite, bg, e.query_box, fgs);
    std::vector<ScoredCandidate> scored;
    for (size_t i = 0; i < pool.size(); ++i) scored.push_back({pool[i], filter_scores[i]});

    std::vector<int> positives = {e.gt_fg_id};
    if (cfg.positives == PositiveSource::kClassifierThreshold) {
      positives = ExtendPositives(e.gt_fg_id, scored, cfg);
    } else if (cfg.positives == PositiveSource::kTeacherTopK) {
      fgs.push_back(&cat.foregrounds.at(e.gt_fg_id));
      const std::vector<double> ts =
          ScoreComposites(*teacher, TeacherInput::kCroppedComposite, bg, e.query_box, fgs);
      std::vector<ScoredCandidate> teacher_scored;
      for (size_t i = 0; i < pool.size(); ++i) teacher_scored.push_back({pool[i], ts[i]});
      teacher_scored.push_back({e.gt_fg_id, ts.back()});
      positives = TeacherTopPositives(e.gt_fg_id, teacher_scored, cfg.top_k_teacher);
    }
    const std::vector<int> negatives =
        MineNegatives(e.gt_fg_id, scored, cfg, MixSeed(seed, 0x6e6567), positives);

    TrainTriplet t;
    t.category = jobs[j].category;
    t.bg_id = e.bg_id;
    t.query_box = e.query_box;
    for (int id : positives) {
      t.positives.push_back({id, id == e.gt_fg_id ? SampleSource::kSameImageGt
                                                  : SampleSource::kExtendedPositive});
    }
    for (int id : negatives) t.negatives.push_back({id, SampleSource::kMinedNegative});
    if (cfg.augment) t = ApplyAugmentation(t, cfg, MixSeed(seed, 0x617567));
    t.Validate();
    out[j] = std::move(t);
  });
  return out;
}

TrainingSet::TrainingSet(const Corpus& corpus, std::vector<TrainTriplet> triplets)
    : corpus_(&corpus), triplets_(std::move(triplets)), input_size_(corpus.config.scene.size) {
  const Box full{0, 0, 1, 1};
  for (const TrainTriplet& t : triplets_) {
    Check(t.category >= 0 && t.category < static_cast<int>(corpus.train.size()),
          ErrorCode::kNotFound, "triplet refers to unknown category " + std::to_string(t.category));
    Check(corpus.train[t.category].backgrounds.count(t.bg_id), ErrorCode::kNotFound,
          "triplet refers to unknown background " + std::to_string(t.bg_id));
    for (const auto* list : {&t.positives, &t.negatives}) {
      for (const TripletItem& item : *list) {
        const Key key{t.category, item.fg_id, item.augmentation, item.seed};
        if (inputs_.count(key)) continue;
        const auto& fgs = corpus.train[t.category].foregrounds;
        auto it = fgs.find(item.fg_id);
        Check(it != fgs.end(), ErrorCode::kNotFound,
              "triplet refers to unknown foreground " + std::to_string(item.fg_id));
        if (item.augmentation != Augmentation::kNone) {
          rendered_[key] =
              MaterializeForeground(item, it->second, corpus.config.oracle.tau_geo);
        }
        const Raster& src = item.augmentation == Augmentation::kNone ? it->second : rendered_[key];
        inputs_[key] = imaging::CropAndResize(src, full, input_size_, input_size_);
      }
    }
  }
}

const Raster& TrainingSet::Background(const TrainTriplet& t) const {
  return corpus_->train[t.category].backgrounds.at(t.bg_id);
}

const Raster& TrainingSet::Foreground(const TrainTriplet& t, const TripletItem& item) const {
  if (item.augmentation == Augmentation::kNone) {
    return corpus_->train[t.category].foregrounds.at(item.fg_id);
  }
  return rendered_.at({t.category, item.fg_id, item.augmentation, item.seed});
}

const Raster& TrainingSet::ForegroundInput(const TrainTriplet& t, const TripletItem& item) const {
  return inputs_.at({t.category, item.fg_id, item.augmentation, item.seed});
}

}  // namespace compsearch
