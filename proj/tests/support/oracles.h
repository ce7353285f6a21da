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

// Independent reference implementations shared by the unit tests and the
// acceptance suite.

#ifndef COMPSEARCH_TESTS_SUPPORT_ORACLES_H_
#define COMPSEARCH_TESTS_SUPPORT_ORACLES_H_

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "compsearch/graph.h"
#include "compsearch/imaging.h"

namespace compsearch::testing {

using DTensor = nn::Tensor<double>;
using DGraph = nn::Graph<double>;

// ---- Metrics -------------------------------------------------------------

// One ranked list: labels in rank order and the rank of a designated
// ground-truth item (0 when absent).
struct RankingInstance {
  std::vector<int> labels;
  int gt_position = 0;
};

std::vector<RankingInstance> RandomRankings(int count, int max_items, uint64_t seed);

// Brute-force definitions; every quantity is recomputed from prefixes.
double OracleRecall(const std::vector<RankingInstance>& queries, int k);
double OraclePrecision(const std::vector<RankingInstance>& queries, int k);
double OracleAp(const std::vector<int>& labels, int total_positives);
double OracleTruncatedAp(const std::vector<int>& labels, int cutoff, int total_positives);

struct MetricSuiteResult {
  int instances = 0;
  int comparisons = 0;
  int mismatches = 0;
  std::string first_mismatch;
};

// Compares the library metrics with the oracles on random instances,
// requiring exact equality.
MetricSuiteResult RunMetricSuite(int instances, uint64_t seed);

// ---- Gradients -----------------------------------------------------------

// Builds an arbitrary-shaped output from the graph inputs.
using GradFn = std::function<nn::Var(DGraph&, const std::vector<nn::Var>&)>;

struct GradCheck {
  double max_rel_error = 0;
  int checked = 0;
};

// Central differences of a random projection of the output against the
// reverse-mode gradient for every input element. The relative error uses
// max(|analytic|, |numeric|, 1e-3) as denominator.
GradCheck CheckGradient(const GradFn& fn, const std::vector<DTensor>& inputs,
                        uint64_t seed, double eps = 1e-4);

struct GradInstance {
  std::vector<DTensor> inputs;
  GradFn fn;
};

struct GradCase {
  std::string name;
  // Inputs and op configuration for a seed, drawn away from
  // non-differentiable points.
  std::function<GradInstance(uint64_t seed)> make;
};

std::vector<GradCase> GradientCases();

struct GradSuiteRow {
  std::string name;
  double max_rel_error = 0;
  int seeds = 0;
};

std::vector<GradSuiteRow> RunGradientSuite(int seeds, uint64_t base_seed);

// ---- Imaging -------------------------------------------------------------

// Bilinear resampling written as a dense sum of tent weights over every
// source pixel, with sample coordinates clamped to the image.
Raster OracleCropAndResize(const Raster& img, const Box& box, int out_w, int out_h);

// Composite built from first principles with the dense sampler.
Raster OracleComposite(const Raster& background, const Box& query_box, const Raster& fg);

double MaxAbsDiff(const Raster& a, const Raster& b);

}  // namespace compsearch::testing

#endif  // COMPSEARCH_TESTS_SUPPORT_ORACLES_H_
