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

#ifndef COMPSEARCH_SAMPLING_H_
#define COMPSEARCH_SAMPLING_H_

#include <cstdint>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "compsearch/corpus.h"
#include "compsearch/models.h"
#include "json.hpp"

namespace compsearch {

enum class Augmentation { kNone, kPositive, kNegative };

struct TripletItem {
  int fg_id = 0;
  SampleSource source = SampleSource::kSameImageGt;
  Augmentation augmentation = Augmentation::kNone;
  uint64_t seed = 0;  // augmentation seed

  auto Key() const { return std::tuple(fg_id, augmentation, seed); }
  friend bool operator==(const TripletItem&, const TripletItem&) = default;
};

struct TrainTriplet {
  int category = 0;  // index into the corpus category list
  int bg_id = 0;
  Box query_box;
  std::vector<TripletItem> positives;  // the same-image ground truth first
  std::vector<TripletItem> negatives;

  // Throws unless the ground truth leads the positives and no item is both
  // positive and negative.
  void Validate() const;
};

nlohmann::json ToJson(const TrainTriplet& t);
TrainTriplet TripletFromJson(const nlohmann::json& j);
void SaveTriplets(const std::vector<TrainTriplet>& triplets, const std::string& path);
std::vector<TrainTriplet> LoadTriplets(const std::string& path);

enum class PositiveSource { kGroundTruth, kClassifierThreshold, kTeacherTopK };
std::string_view PositiveSourceName(PositiveSource source);
PositiveSource ParsePositiveSource(std::string_view name);

struct MiningConfig {
  double neg_threshold = 0.3;
  double pos_threshold = 0.8;
  int negatives = 10;
  int max_positives = 5;
  int top_k_teacher = 5;
  int augmented_positives = 2;
  int augmented_negatives = 1;
  // Candidates scored per background, drawn from the other foregrounds of
  // the category.
  int pool_size = 16;
  PositiveSource positives = PositiveSource::kGroundTruth;
  bool augment = false;
  uint64_t seed = 1;
  int workers = 1;

  void Validate() const;
};

nlohmann::json ToJson(const MiningConfig& c);
MiningConfig MiningConfigFromJson(const nlohmann::json& j, MiningConfig base = {});

struct ScoredCandidate {
  int fg_id;
  double score;
};

// Candidates scoring strictly below the threshold, sampled down to
// `count`. When too few qualify the lowest-scoring remaining candidates
// fill the quota. The ground truth and `exclude` are never returned.
std::vector<int> MineNegatives(int gt_id, const std::vector<ScoredCandidate>& scored,
                               const MiningConfig& cfg, uint64_t seed,
                               const std::vector<int>& exclude = {});

// Ground truth first, then candidates strictly above the threshold by
// descending score (ascending id on ties), at most max_positives in all.
std::vector<int> ExtendPositives(int gt_id, const std::vector<ScoredCandidate>& scored,
                                 const MiningConfig& cfg);

// Ground truth plus the best-ranked others so that the result has k
// entries: the top k when the ground truth ranks among them, otherwise
// the ground truth and the top k - 1. Ties rank lower ids first.
std::vector<int> TeacherTopPositives(int gt_id, const std::vector<ScoredCandidate>& scored,
                                     int k);

// Adds augmented copies of the ground truth: photometric jitter as extra
// positives and a geometric violation as extra negatives.
TrainTriplet ApplyAugmentation(const TrainTriplet& triplet, const MiningConfig& cfg,
                               uint64_t seed);

// Renders the foreground a triplet item refers to.
Raster MaterializeForeground(const TripletItem& item, const Raster& source,
                             double tau_geo);

// Compatibility scores of composites of `background` with each foreground.
std::vector<double> ScoreComposites(const TeacherModel& model, TeacherInput input,
                                    const Raster& background, const Box& query_box,
                                    const std::vector<const Raster*>& foregrounds,
                                    int batch = 32);

struct FilterConfig {
  int epochs = 2;
  int batch = 16;
  double lr = 1e-4;
  int negatives_per_positive = 3;
  uint64_t seed = 1;
};

nlohmann::json ToJson(const FilterConfig& c);
FilterConfig FilterConfigFromJson(const nlohmann::json& j, FilterConfig base = {});

struct TrainReport;

// Composite classifier trained with same-image pairs as positives and
// random other foregrounds of the category as negatives.
TeacherModel PretrainFilterClassifier(const Corpus& corpus, const FilterConfig& cfg,
                                      TrainReport* report = nullptr);

// Mines one triplet per training background.
std::vector<TrainTriplet> MineTriplets(const Corpus& corpus, const TeacherModel& filter,
                                       const TeacherModel* teacher, const MiningConfig& cfg);

// Training images resolved from a corpus and a triplet list, with every
// augmented foreground rendered once.
class TrainingSet {
 public:
  TrainingSet(const Corpus& corpus, std::vector<TrainTriplet> triplets);

  const std::vector<TrainTriplet>& triplets() const { return triplets_; }
  const Raster& Background(const TrainTriplet& t) const;
  const Raster& Foreground(const TrainTriplet& t, const TripletItem& item) const;
  // The foreground resized to the network input size.
  const Raster& ForegroundInput(const TrainTriplet& t, const TripletItem& item) const;
  int input_size() const { return input_size_; }

 private:
  using Key = std::tuple<int, int, Augmentation, uint64_t>;

  const Corpus* corpus_;
  std::vector<TrainTriplet> triplets_;
  int input_size_;
  std::map<Key, Raster> rendered_;
  std::map<Key, Raster> inputs_;
};

}  // namespace compsearch

#endif  // COMPSEARCH_SAMPLING_H_
