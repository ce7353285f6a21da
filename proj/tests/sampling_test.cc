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
#include <filesystem>
#include <set>

#include "compsearch/rng.h"
#include "gtest/gtest.h"

namespace compsearch {
namespace {

// Scores for ids 1..n in a fixed pattern; id 0 is the ground truth.
std::vector<ScoredCandidate> Fixture(const std::vector<double>& scores) {
  std::vector<ScoredCandidate> out;
  for (size_t i = 0; i < scores.size(); ++i) out.push_back({static_cast<int>(i) + 1, scores[i]});
  return out;
}

std::map<int, double> ScoreOf(const std::vector<ScoredCandidate>& scored) {
  std::map<int, double> m;
  for (const auto& c : scored) m[c.fg_id] = c.score;
  return m;
}

TEST(MineNegativesTest, ThresholdIsStrict) {
  MiningConfig cfg;
  cfg.negatives = 2;
  // Plenty of candidates below 0.3: 0.31 and 0.3 itself never qualify.
  const auto scored = Fixture({0.25, 0.31, 0.3, 0.1, 0.29999, 0.05});
  for (uint64_t seed = 0; seed < 50; ++seed) {
    const std::vector<int> negs = MineNegatives(0, scored, cfg, seed);
    ASSERT_EQ(negs.size(), 2u);
    for (int id : negs) EXPECT_LT(ScoreOf(scored)[id], 0.3);
  }
  cfg.negatives = 4;
  const std::vector<int> all = MineNegatives(0, scored, cfg, 1);
  EXPECT_EQ(std::set<int>(all.begin(), all.end()), (std::set<int>{1, 4, 5, 6}));
}

TEST(MineNegativesTest, GroundTruthAndExclusionsNeverReturned) {
  MiningConfig cfg;
  std::vector<ScoredCandidate> scored = Fixture({0.1, 0.2, 0.05});
  scored.push_back({0, 0.01});  // a mis-scored ground truth
  const std::vector<int> negs = MineNegatives(0, scored, cfg, 3, {2});
  EXPECT_EQ(std::count(negs.begin(), negs.end(), 0), 0);
  EXPECT_EQ(std::count(negs.begin(), negs.end(), 2), 0);
}

TEST(MineNegativesTest, FillsQuotaWithLowestScores) {
  MiningConfig cfg;
  cfg.negatives = 4;
  const auto scored = Fixture({0.9, 0.2, 0.5, 0.4, 0.7});
  EXPECT_EQ(MineNegatives(0, scored, cfg, 1), (std::vector<int>{2, 4, 3, 5}));
}

TEST(MineNegativesTest, DeterministicGivenSeed) {
  MiningConfig cfg;
  Rng rng(4);
  std::vector<double> s(40);
  for (double& v : s) v = rng.Uniform(0, 0.29);
  const auto scored = Fixture(s);
  EXPECT_EQ(MineNegatives(0, scored, cfg, 9), MineNegatives(0, scored, cfg, 9));
  EXPECT_EQ(MineNegatives(0, scored, cfg, 9).size(), 10u);
}

TEST(ExtendPositivesTest, Examples) {
  MiningConfig cfg;
  EXPECT_EQ(ExtendPositives(0, Fixture({0.5, 0.8, 0.2}), cfg), (std::vector<int>{0}));
  EXPECT_EQ(ExtendPositives(0, Fixture({0.85, 0.1}), cfg), (std::vector<int>{0, 1}));
  std::vector<double> many(20);
  for (int i = 0; i < 20; ++i) many[i] = 0.81 + 0.009 * ((i * 7) % 20);
  const std::vector<int> pos = ExtendPositives(0, Fixture(many), cfg);
  ASSERT_EQ(pos.size(), 5u);
  EXPECT_EQ(pos[0], 0);
  const auto score = ScoreOf(Fixture(many));
  for (size_t i = 2; i < pos.size(); ++i) EXPECT_GE(score.at(pos[i - 1]), score.at(pos[i]));
  // The four kept extras are the four best.
  std::vector<double> sorted = many;
  std::sort(sorted.rbegin(), sorted.rend());
  for (size_t i = 1; i < pos.size(); ++i) EXPECT_EQ(score.at(pos[i]), sorted[i - 1]);
}

TEST(TeacherTopPositivesTest, Examples) {
  // All ties: lowest ids win.
  std::vector<ScoredCandidate> ties = Fixture(std::vector<double>(8, 0.5));
  ties.push_back({0, 0.5});
  EXPECT_EQ(TeacherTopPositives(0, ties, 5), (std::vector<int>{0, 1, 2, 3, 4}));
  // Ground truth first in the ranking: the top five.
  std::vector<ScoredCandidate> ranked = Fixture({0.9, 0.8, 0.7, 0.6, 0.5, 0.4});
  ranked.push_back({0, 0.95});
  EXPECT_EQ(TeacherTopPositives(0, ranked, 5), (std::vector<int>{0, 1, 2, 3, 4}));
  // Ground truth outside the top five: it plus the top four.
  ranked.back().score = 0.01;
  const std::vector<int> out = TeacherTopPositives(0, ranked, 5);
  EXPECT_EQ(out.size(), 5u);
  EXPECT_EQ(out[0], 0);
  EXPECT_EQ(std::vector<int>(out.begin() + 1, out.end()), (std::vector<int>{1, 2, 3, 4}));
}

TEST(AugmentationTest, RatioProgression) {
  MiningConfig cfg;
  Rng rng(2);
  std::vector<double> scores;
  for (int i = 0; i < 12; ++i) scores.push_back(rng.Uniform(0.0, 0.29));
  for (int i = 0; i < 6; ++i) scores.push_back(rng.Uniform(0.81, 0.99));
  const auto scored = Fixture(scores);
  auto make = [&](const std::vector<int>& pos) {
    TrainTriplet t;
    t.bg_id = 0;
    t.query_box = {0.1, 0.1, 0.3, 0.3};
    for (int id : pos) {
      t.positives.push_back({id, id == 0 ? SampleSource::kSameImageGt
                                         : SampleSource::kExtendedPositive});
    }
    for (int id : MineNegatives(0, scored, cfg, 5, pos)) {
      t.negatives.push_back({id, SampleSource::kMinedNegative});
    }
    t.Validate();
    return t;
  };
  const TrainTriplet base = make({0});
  EXPECT_EQ(base.positives.size(), 1u);
  EXPECT_EQ(base.negatives.size(), 10u);
  const TrainTriplet extended = make(ExtendPositives(0, scored, cfg));
  EXPECT_EQ(extended.positives.size(), 5u);
  EXPECT_EQ(extended.negatives.size(), 10u);
  const TrainTriplet augmented = ApplyAugmentation(extended, cfg, 7);
  EXPECT_EQ(augmented.positives.size(), 7u);
  EXPECT_EQ(augmented.negatives.size(), 11u);
  const TrainTriplet base_aug = ApplyAugmentation(base, cfg, 7);
  EXPECT_EQ(base_aug.positives.size(), 3u);
  EXPECT_EQ(base_aug.negatives.size(), 11u);
  EXPECT_EQ(ToJson(ApplyAugmentation(extended, cfg, 7)).dump(), ToJson(augmented).dump());
  for (const TripletItem& n : augmented.negatives) {
    for (const TripletItem& p : augmented.positives) EXPECT_FALSE(n == p);
  }
}

TEST(TripletTest, ValidateRejectsBrokenTriplets) {
  TrainTriplet t;
  t.positives = {{3, SampleSource::kExtendedPositive}};
  EXPECT_THROW(t.Validate(), Error);
  t.positives = {{3, SampleSource::kSameImageGt}};
  t.negatives = {{3, SampleSource::kMinedNegative}};
  EXPECT_THROW(t.Validate(), Error);
}

class MiningCorpusTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CorpusConfig c;
    c.categories = {Category::kArrow, Category::kChevron};
    c.train_per_category = 14;
    c.test_backgrounds = 2;
    c.test_candidates = 4;
    c.test_r_backgrounds = 2;
    corpus_ = new Corpus(BuildCorpus(c));
  }
  static void TearDownTestSuite() { delete corpus_; }
  static Corpus* corpus_;
};

Corpus* MiningCorpusTest::corpus_ = nullptr;

TEST_F(MiningCorpusTest, MinesOneTripletPerBackgroundDeterministically) {
  const TeacherModel filter(ModelGeometry{}, 3);
  MiningConfig cfg;
  const auto a = MineTriplets(*corpus_, filter, nullptr, cfg);
  ASSERT_EQ(a.size(), 28u);
  for (const TrainTriplet& t : a) {
    EXPECT_EQ(t.positives.size(), 1u);
    EXPECT_EQ(t.negatives.size(), 10u);
    EXPECT_EQ(t.positives[0].fg_id, t.bg_id);
  }
  cfg.workers = 3;
  const auto b = MineTriplets(*corpus_, filter, nullptr, cfg);
  for (size_t i = 0; i < a.size(); ++i) EXPECT_EQ(ToJson(a[i]).dump(), ToJson(b[i]).dump());
}

TEST_F(MiningCorpusTest, TeacherTopKAndAugmentationCounts) {
  const TeacherModel filter(ModelGeometry{}, 3);
  MiningConfig cfg;
  cfg.positives = PositiveSource::kTeacherTopK;
  EXPECT_THROW(MineTriplets(*corpus_, filter, nullptr, cfg), Error);
  cfg.augment = true;
  const auto triplets = MineTriplets(*corpus_, filter, &filter, cfg);
  for (const TrainTriplet& t : triplets) {
    EXPECT_EQ(t.positives.size(), 7u);
    EXPECT_EQ(t.negatives.size(), 10u);  // 13 pooled - 4 extra positives + 1 augmented
  }
  const TrainingSet set(*corpus_, triplets);
  const TrainTriplet& t = set.triplets()[0];
  EXPECT_EQ(set.ForegroundInput(t, t.positives.back()).width(), 64);
  EXPECT_NE(set.Foreground(t, t.positives.back()), set.Foreground(t, t.positives.front()));
}

TEST_F(MiningCorpusTest, TripletsFileRoundTrip) {
  const TeacherModel filter(ModelGeometry{}, 4);
  MiningConfig cfg;
  cfg.augment = true;
  const auto triplets = MineTriplets(*corpus_, filter, nullptr, cfg);
  const auto path = std::filesystem::temp_directory_path() / "compsearch_triplets.json";
  SaveTriplets(triplets, path.string());
  const auto loaded = LoadTriplets(path.string());
  std::filesystem::remove(path);
  ASSERT_EQ(loaded.size(), triplets.size());
  for (size_t i = 0; i < loaded.size(); ++i) {
    EXPECT_EQ(ToJson(loaded[i]).dump(), ToJson(triplets[i]).dump());
  }
}

TEST(MiningConfigTest, Validation) {
  MiningConfig c;
  c.neg_threshold = 0.9;
  EXPECT_THROW(c.Validate(), Error);
  c = MiningConfig{};
  EXPECT_EQ(ToJson(MiningConfigFromJson(ToJson(c))).dump(), ToJson(c).dump());
}

}  // namespace
}  // namespace compsearch
