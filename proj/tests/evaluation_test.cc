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
#include <cmath>

#include "compsearch/rng.h"
#include "gtest/gtest.h"
#include "oracles.h"

namespace compsearch {
namespace {

TEST(MetricsTest, Examples) {
  EXPECT_NEAR(RecallAtK({1, 6, 3}, 5), 200.0 / 3.0, 1e-12);
  EXPECT_EQ(RecallAtK({1, 6, 3}, 1), 100.0 / 3.0);
  EXPECT_EQ(RecallAtK({0, 2}, 20), 50.0);
  EXPECT_EQ(PrecisionAtK({{1, 0, 1, 0}}, 2), 50.0);
  EXPECT_EQ(PrecisionAtK({{1, 0, 1, 0}, {1, 1, 0, 0}}, 2), 75.0);
  EXPECT_NEAR(AveragePrecision({1, 0, 1}), (1.0 + 2.0 / 3.0) / 2.0, 1e-12);
  // Two positives fell to the filter: the list holds half of them.
  EXPECT_NEAR(AveragePrecision({1, 0, 1}, 4), (1.0 + 2.0 / 3.0) / 4.0, 1e-12);
  EXPECT_EQ(AveragePrecision({1, 1, 0, 0}), 1.0);
  EXPECT_NEAR(TruncatedAveragePrecision({0, 1, 0, 1}, 2), 0.25, 1e-12);
  EXPECT_NEAR(TruncatedAveragePrecision({0, 1, 0, 1}, 4), (0.5 + 0.5) / 2.0, 1e-12);
}

TEST(MetricsTest, InvalidInputsRejected) {
  EXPECT_THROW(RecallAtK({}, 1), Error);
  EXPECT_THROW(RecallAtK({1}, 0), Error);
  EXPECT_THROW(PrecisionAtK({{1, 0}}, 3), Error);
  EXPECT_THROW(AveragePrecision({0, 0}), Error);
  EXPECT_THROW(AveragePrecision({1, 1}, 1), Error);
}

TEST(MetricsTest, AgreesWithOracles) {
  const testing::MetricSuiteResult r = testing::RunMetricSuite(300, 7);
  EXPECT_EQ(r.instances, 300);
  EXPECT_GT(r.comparisons, 0);
  EXPECT_EQ(r.mismatches, 0) << r.first_mismatch;
}

TEST(MetricsTest, PropertiesHoldOnRandomRankings) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 1 + static_cast<int>(rng.Uniform() * 30);
    std::vector<int> labels(n);
    for (int& l : labels) l = rng.Uniform() < 0.3;
    if (std::count(labels.begin(), labels.end(), 1) == 0) labels[n - 1] = 1;
    const double ap = AveragePrecision(labels);
    EXPECT_GT(ap, 0.0);
    EXPECT_LE(ap, 1.0);
    std::vector<int> sorted = labels;
    std::sort(sorted.rbegin(), sorted.rend());
    EXPECT_EQ(AveragePrecision(sorted), 1.0);
    EXPECT_LE(ap, AveragePrecision(sorted));
    std::vector<int> positions(5);
    for (int& p : positions) p = static_cast<int>(rng.Uniform() * 25);
    double previous = 0;
    for (int k = 1; k <= 25; ++k) {
      const double recall = RecallAtK(positions, k);
      EXPECT_GE(recall, previous);
      previous = recall;
    }
  }
}

class EvaluationTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    CorpusConfig c;
    c.categories = {Category::kTee, Category::kEll};
    c.train_per_category = 2;
    c.test_backgrounds = 8;
    c.test_candidates = 20;
    c.test_r_backgrounds = 8;
    corpus_ = new Corpus(BuildCorpus(c));
  }
  static void TearDownTestSuite() { delete corpus_; }
  static Corpus* corpus_;
};

Corpus* EvaluationTest::corpus_ = nullptr;

TEST_F(EvaluationTest, OracleRankerIsPerfect) {
  RankOptions opt;
  opt.ar_threshold = 0;
  const MetricReport s = Evaluate(*corpus_, Split::kTestS, OracleRankers(opt)).report;
  for (int k : kCutoffs) EXPECT_EQ(s.Get("R@" + std::to_string(k)), 100.0);
  const MetricReport r = Evaluate(*corpus_, Split::kTestR, OracleRankers(opt)).report;
  EXPECT_EQ(r.Get("mAP"), 100.0);
  EXPECT_EQ(r.Get("mAP@20"), 100.0);
  EXPECT_EQ(r.Get("P@1"), 100.0);
  EXPECT_EQ(s.categories, (std::vector<std::string>{"tee", "ell"}));
  EXPECT_EQ(s.per_category.at("R@1").size(), 2u);
}

TEST_F(EvaluationTest, OutcomesMatchManifest) {
  RankOptions opt;
  opt.ar_threshold = 0;
  const EvalResult res = Evaluate(*corpus_, Split::kTestS, RandomRankers(3, opt));
  ASSERT_EQ(res.outcomes.size(), 2u);
  for (size_t c = 0; c < 2; ++c) {
    const auto& entries = corpus_->test_s[c].manifest.entries;
    ASSERT_EQ(res.outcomes[c].size(), entries.size());
    std::vector<int> positions;
    for (size_t q = 0; q < entries.size(); ++q) {
      const QueryOutcome& o = res.outcomes[c][q];
      EXPECT_EQ(o.bg_id, entries[q].bg_id);
      ASSERT_GE(o.gt_position, 1);
      EXPECT_EQ(o.result.ranked[o.gt_position - 1].fg_id, entries[q].gt_fg_id);
      positions.push_back(o.gt_position);
    }
    EXPECT_EQ(res.report.per_category.at("R@5")[c], RecallAtK(positions, 5));
  }
  EXPECT_EQ(res.report.Get("R@1"),
            (res.report.per_category.at("R@1")[0] + res.report.per_category.at("R@1")[1]) / 2);
}

TEST_F(EvaluationTest, MetricsInvariantToQueryOrder) {
  RankOptions opt;
  opt.ar_threshold = 0;
  Corpus shuffled = *corpus_;
  for (CategoryData& d : shuffled.test_r) {
    std::reverse(d.manifest.entries.begin(), d.manifest.entries.end());
  }
  for (CategoryData& d : shuffled.test_s) {
    std::reverse(d.manifest.entries.begin(), d.manifest.entries.end());
  }
  for (Split split : {Split::kTestS, Split::kTestR}) {
    const MetricReport a = Evaluate(*corpus_, split, RandomRankers(5, opt)).report;
    const MetricReport b = Evaluate(shuffled, split, RandomRankers(5, opt)).report;
    for (const auto& [name, value] : a.mean) EXPECT_NEAR(value, b.mean.at(name), 1e-9) << name;
  }
}

TEST_F(EvaluationTest, WorkerCountDoesNotChangeReport) {
  RankOptions opt;
  EvalOptions one, many;
  many.workers = 4;
  const MetricReport a = Evaluate(*corpus_, Split::kTestR, RandomRankers(5, opt), one).report;
  const MetricReport b = Evaluate(*corpus_, Split::kTestR, RandomRankers(5, opt), many).report;
  EXPECT_EQ(a.ToJson().dump(), b.ToJson().dump());
}

TEST_F(EvaluationTest, FilteredPositivesStillCount) {
  RankOptions opt;
  opt.ar_threshold = 1.0000001;  // only exact aspect matches survive
  const EvalResult res = Evaluate(*corpus_, Split::kTestR, OracleRankers(opt));
  bool lost = false;
  for (const auto& per_cat : res.outcomes) {
    for (const QueryOutcome& o : per_cat) {
      const int present = std::count(o.labels.begin(), o.labels.end(), 1);
      lost = lost || present < o.total_positives;
    }
  }
  ASSERT_TRUE(lost);
  EXPECT_LT(res.report.Get("mAP"), 100.0);
}

TEST(RandomBaselineTest, RecallAtOneNearChance) {
  CorpusConfig c;
  c.categories = {Category::kArrow, Category::kFlag, Category::kTree, Category::kBolt};
  c.train_per_category = 2;
  c.test_backgrounds = 50;
  c.test_candidates = 50;
  c.test_r_backgrounds = 1;
  const Corpus corpus = BuildCorpus(c);
  RankOptions opt;
  opt.ar_threshold = 0;
  double total = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    total += Evaluate(corpus, Split::kTestS, RandomRankers(seed, opt)).report.Get("R@1");
  }
  // 1000 queries at 1 in 50: mean 2%, standard error about 0.44%.
  EXPECT_NEAR(total / 5, 2.0, 1.5);
}

TEST(ReportTest, RenderingAndUnknownMetric) {
  MetricReport r;
  r.split = Split::kTestS;
  r.categories = {"house"};
  for (const std::string& name : MetricNames(Split::kTestS)) {
    r.per_category[name] = {12.5};
    r.mean[name] = 12.5;
  }
  EXPECT_NE(RenderTable(r, "demo").find("12.5"), std::string::npos);
  EXPECT_THROW(r.Get("mAP"), Error);
  EXPECT_EQ(r.ToJson()["mean"]["R@1"], 12.5);
  EXPECT_EQ(MetricNames(Split::kTestR).size(), 6u);
}

}  // namespace
}  // namespace compsearch
