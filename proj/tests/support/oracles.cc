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

#include "oracles.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "compsearch/evaluation.h"
#include "compsearch/losses.h"
#include "compsearch/models.h"
#include "compsearch/ops.h"
#include "compsearch/rng.h"

namespace compsearch::testing {

using nn::Var;

// ---- Metrics -------------------------------------------------------------

std::vector<RankingInstance> RandomRankings(int count, int max_items, uint64_t seed) {
  Rng rng(seed);
  std::vector<RankingInstance> out(count);
  for (RankingInstance& r : out) {
    const int n = 1 + rng.UniformInt(max_items);
    const double p = rng.Uniform();
    for (int i = 0; i < n; ++i) r.labels.push_back(rng.Uniform() < p ? 1 : 0);
    r.gt_position = rng.UniformInt(n + 1);
  }
  return out;
}

double OracleRecall(const std::vector<RankingInstance>& queries, int k) {
  int hits = 0;
  for (const RankingInstance& q : queries) {
    bool found = false;
    for (int rank = 1; rank <= k; ++rank) found = found || rank == q.gt_position;
    hits += found ? 1 : 0;
  }
  return 100.0 * hits / static_cast<double>(queries.size());
}

double OraclePrecision(const std::vector<RankingInstance>& queries, int k) {
  double total = 0;
  for (const RankingInstance& q : queries) {
    int positives = 0;
    for (int i = 0; i < k; ++i) positives += q.labels[i] == 1 ? 1 : 0;
    total += 100.0 * positives / k;
  }
  return total / static_cast<double>(queries.size());
}

namespace {

// Precision at every positive rank up to `n`, each recomputed from its
// prefix.
double PrefixPrecisionSum(const std::vector<int>& labels, int n) {
  double sum = 0;
  for (int i = 0; i < n && i < static_cast<int>(labels.size()); ++i) {
    if (labels[i] != 1) continue;
    int prefix_positives = 0;
    for (int j = 0; j <= i; ++j) prefix_positives += labels[j] == 1 ? 1 : 0;
    sum += static_cast<double>(prefix_positives) / (i + 1);
  }
  return sum;
}

}  // namespace

double OracleAp(const std::vector<int>& labels, int total_positives) {
  return PrefixPrecisionSum(labels, static_cast<int>(labels.size())) / total_positives;
}

double OracleTruncatedAp(const std::vector<int>& labels, int cutoff, int total_positives) {
  return PrefixPrecisionSum(labels, cutoff) / std::min(total_positives, cutoff);
}

MetricSuiteResult RunMetricSuite(int instances, uint64_t seed) {
  MetricSuiteResult result;
  const std::vector<RankingInstance> queries = RandomRankings(instances, 50, seed);
  result.instances = instances;
  Rng rng(MixSeed(seed, 1));
  auto compare = [&](double got, double want, const std::string& what) {
    ++result.comparisons;
    if (got != want) {
      if (result.mismatches++ == 0) {
        std::ostringstream os;
        os.precision(17);
        os << what << ": got " << got << ", oracle " << want;
        result.first_mismatch = os.str();
      }
    }
  };
  std::vector<int> positions;
  for (const RankingInstance& q : queries) positions.push_back(q.gt_position);
  for (int k : {1, 5, 10, 20, 50}) {
    compare(RecallAtK(positions, k), OracleRecall(queries, k), "recall@" + std::to_string(k));
  }
  for (size_t i = 0; i < queries.size(); ++i) {
    const RankingInstance& q = queries[i];
    const std::string tag = " instance " + std::to_string(i);
    const int n = static_cast<int>(q.labels.size());
    for (int k : {1, 5, 10, 20}) {
      compare(RecallAtK({q.gt_position}, k), OracleRecall({q}, k), "recall" + tag);
      if (k <= n) compare(PrecisionAtK({q.labels}, k), OraclePrecision({q}, k), "precision" + tag);
    }
    const int present = static_cast<int>(std::count(q.labels.begin(), q.labels.end(), 1));
    const int total = std::max(1, present + rng.UniformInt(3));
    compare(AveragePrecision(q.labels, total), OracleAp(q.labels, total), "ap" + tag);
    if (present > 0) {
      compare(AveragePrecision(q.labels), OracleAp(q.labels, present), "ap(present)" + tag);
    }
    const int cutoff = 1 + rng.UniformInt(25);
    for (int c : {20, cutoff}) {
      compare(TruncatedAveragePrecision(q.labels, c, total), OracleTruncatedAp(q.labels, c, total),
              "ap@" + std::to_string(c) + tag);
    }
  }
  // Query sets of ten for the aggregate precision.
  for (size_t begin = 0; begin + 10 <= queries.size(); begin += 10) {
    std::vector<RankingInstance> group(queries.begin() + begin, queries.begin() + begin + 10);
    int min_len = 1 << 30;
    std::vector<std::vector<int>> labels;
    for (const auto& q : group) {
      min_len = std::min(min_len, static_cast<int>(q.labels.size()));
      labels.push_back(q.labels);
    }
    for (int k : {1, 5, 10, 20}) {
      if (k <= min_len) compare(PrecisionAtK(labels, k), OraclePrecision(group, k), "group precision");
    }
  }
  return result;
}

// ---- Gradients -----------------------------------------------------------

namespace {

DTensor RandomTensor(std::vector<int> shape, Rng& rng, double lo = -1, double hi = 1) {
  DTensor t(std::move(shape));
  for (double& v : t.storage()) v = rng.Uniform(lo, hi);
  return t;
}

// Values at least `gap` away from zero.
DTensor AwayFromZero(std::vector<int> shape, Rng& rng, double gap) {
  DTensor t(std::move(shape));
  for (double& v : t.storage()) {
    const double m = rng.Uniform(gap, 1.0);
    v = rng.Uniform() < 0.5 ? -m : m;
  }
  return t;
}

// Scalar sum_i r_i y_i with fixed random weights.
Var Project(DGraph& g, Var y, const DTensor& weights) {
  const int n = static_cast<int>(g.value(y).size());
  Var flat = nn::Reshape(g, y, {1, n});
  Var w = g.Constant(weights.Reshaped({n, 1}));
  Var out = nn::Linear(g, flat, w, g.Constant(DTensor({1})));
  return nn::Reshape(g, out, {1});
}

double Evaluate(const GradFn& fn, const std::vector<DTensor>& inputs, const DTensor* weights) {
  DGraph g(false);
  std::vector<Var> vars;
  for (const DTensor& t : inputs) vars.push_back(g.Constant(t));
  return g.value(Project(g, fn(g, vars), *weights))[0];
}

nn::SpatialPlan RandomRoiPlan(Rng& rng, int h, int w, int out) {
  const double bw = rng.Uniform(0.2, 0.9), bh = rng.Uniform(0.2, 0.9);
  const Box box{rng.Uniform(0, 1 - bw), rng.Uniform(0, 1 - bh), bw, bh};
  return RoiAlignPlan(h, w, box, out, out);
}

}  // namespace

GradCheck CheckGradient(const GradFn& fn, const std::vector<DTensor>& inputs, uint64_t seed,
                        double eps) {
  Rng rng(seed);
  DTensor weights;
  std::vector<DTensor> analytic;
  {
    DGraph g(true);
    std::vector<Var> vars;
    for (const DTensor& t : inputs) vars.push_back(g.Input(t));
    Var y = fn(g, vars);
    weights = RandomTensor({static_cast<int>(g.value(y).size())}, rng);
    g.Backward(Project(g, y, weights));
    for (size_t i = 0; i < vars.size(); ++i) {
      analytic.push_back(g.has_grad(vars[i]) ? g.grad(vars[i]) : DTensor(inputs[i].shape()));
    }
  }
  GradCheck out;
  std::vector<DTensor> probe = inputs;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t k = 0; k < inputs[i].size(); ++k) {
      const double x = inputs[i][k];
      probe[i][k] = x + eps;
      const double up = Evaluate(fn, probe, &weights);
      probe[i][k] = x - eps;
      const double down = Evaluate(fn, probe, &weights);
      probe[i][k] = x;
      const double numeric = (up - down) / (2 * eps);
      const double a = analytic[i][k];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      out.max_rel_error = std::max(out.max_rel_error, std::abs(a - numeric) / denom);
      ++out.checked;
    }
  }
  return out;
}

std::vector<GradCase> GradientCases() {
  std::vector<GradCase> cases;
  // Cases whose op configuration does not depend on the seed.
  auto Add = [&](std::string name, std::function<std::vector<DTensor>(uint64_t)> inputs,
                 GradFn fn) {
    cases.push_back({std::move(name), [inputs, fn](uint64_t s) {
                       return GradInstance{inputs(s), fn};
                     }});
  };
  auto conv = [&](std::string name, std::vector<int> x, int k, int cout, int stride, int pad) {
    Add(std::move(name),
                     [=](uint64_t s) {
                       Rng rng(s);
                       return std::vector<DTensor>{RandomTensor(x, rng),
                                                   RandomTensor({k, k, x[3], cout}, rng),
                                                   RandomTensor({cout}, rng)};
                     },
                     [=](DGraph& g, const std::vector<Var>& v) {
                       return nn::Conv2d(g, v[0], v[1], v[2], stride, pad);
                     });
  };
  conv("conv2d_3x3_pad1", {2, 5, 5, 3}, 3, 4, 1, 1);
  conv("conv2d_3x3_stride2", {1, 6, 6, 2}, 3, 3, 2, 0);
  conv("conv2d_1x1", {2, 1, 1, 6}, 1, 5, 1, 0);
  Add("relu",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{AwayFromZero({2, 3, 3, 2}, rng, 0.01)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::Relu(g, v[0]); });
  Add("maxpool2",
                   [](uint64_t s) {
                     Rng rng(s);
                     // Distinct values 0.01 apart keep each window's argmax stable.
                     DTensor t({2, 4, 6, 3});
                     for (size_t i = 0; i < t.size(); ++i) t[i] = 0.01 * static_cast<double>(i);
                     rng.Shuffle(t.storage().begin(), t.storage().end());
                     return std::vector<DTensor>{t};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::MaxPool2(g, v[0]); });
  Add("global_avg_pool",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({2, 3, 4, 5}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::GlobalAvgPool(g, v[0]); });
  Add("linear",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({3, 5}, rng), RandomTensor({5, 4}, rng),
                                                 RandomTensor({4}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::Linear(g, v[0], v[1], v[2]);
                   });
  Add("sigmoid",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({7}, rng, -4, 4)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::Sigmoid(g, v[0]); });
  Add("concat_channels",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({2, 3, 3, 2}, rng),
                                                 RandomTensor({2, 3, 3, 4}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::ConcatChannels(g, v[0], v[1]);
                   });
  cases.push_back({"roi_align", [](uint64_t s) {
                     Rng rng(s);
                     std::vector<nn::SpatialPlan> plans{RandomRoiPlan(rng, 4, 4, 4),
                                                        RandomRoiPlan(rng, 4, 4, 4)};
                     return GradInstance{{RandomTensor({2, 4, 4, 3}, rng)},
                                         [plans](DGraph& g, const std::vector<Var>& v) {
                                           return nn::Resample(g, v[0], plans);
                                         }};
                   }});
  Add("roi_align_large_box",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({1, 8, 8, 2}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::Resample(g, v[0],
                                         {RoiAlignPlan(8, 8, Box{0.05, 0.1, 0.9, 0.8}, 3, 3)});
                   });
  cases.push_back({"spatial_compose", [](uint64_t s) {
                     Rng rng(s);
                     const double w = rng.Uniform(0.3, 0.8), h = rng.Uniform(0.3, 0.8);
                     const auto plans = ComposePlans(
                         4, 4, Box{rng.Uniform(0, 1 - w), rng.Uniform(0, 1 - h), w, h});
                     return GradInstance{
                         {RandomTensor({1, 4, 4, 3}, rng), RandomTensor({1, 4, 4, 3}, rng)},
                         [plans](DGraph& g, const std::vector<Var>& v) {
                           return nn::Add(g, nn::Resample(g, v[0], {plans.first}),
                                          nn::Resample(g, v[1], {plans.second}));
                         }};
                   }});
  Add("bilinear_sample",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({2, 5, 5, 2}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::BilinearSample(g, v[0], {{0.3, 1.7}, {3.25, 2.5}, {4.0, 0.1}});
                   });
  Add("cosine_sim",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({3, 6}, rng), RandomTensor({3, 6}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::CosineSim(g, v[0], v[1]); });
  Add("gather_rows",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({3, 2, 2}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::GatherRows(g, v[0], {2, 0, 2, 1});
                   });
  Add("add",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({2, 3}, rng), RandomTensor({2, 3}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::Add(g, v[0], v[1]); });
  Add("reshape",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({2, 6}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::Sigmoid(g, nn::Reshape(g, v[0], {3, 4}));
                   });
  Add("weighted_sum",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({1}, rng), RandomTensor({1}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::WeightedSum(g, {{v[0], 0.7}, {v[1], -1.3}});
                   });
  Add("mean",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({3, 4}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) { return nn::Mean(g, v[0]); });
  // Losses. Labels come from the input size so the closure stays fixed.
  Add("bce_loss",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({6}, rng, 0.05, 0.95)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::BceLoss(g, v[0], {1, 0, 0, 1, 1, 0});
                   });
  Add("bce_on_logits",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{RandomTensor({4, 5}, rng), RandomTensor({5, 1}, rng),
                                                 RandomTensor({1}, rng)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     Var logits = nn::Reshape(g, nn::Linear(g, v[0], v[1], v[2]), {4});
                     return nn::BceLoss(g, nn::Sigmoid(g, logits), {1, 0, 1, 0});
                   });
  Add("triplet_loss",
                   [](uint64_t s) {
                     Rng rng(s);
                     // Hinge arguments kept at least 0.01 from the kink.
                     DTensor pos({6}), neg({6});
                     for (int i = 0; i < 6; ++i) {
                       pos[i] = rng.Uniform(-1, 1);
                       double arg;
                       do {
                         neg[i] = rng.Uniform(-1, 1);
                         arg = 0.1 + neg[i] - pos[i];
                       } while (std::abs(arg) < 0.01);
                     }
                     return std::vector<DTensor>{pos, neg};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     return nn::TripletLoss(g, v[0], v[1], 0.1);
                   });
  Add("triplet_on_cosine",
      [](uint64_t s) {
        for (uint64_t attempt = 0;; ++attempt) {
          Rng rng(MixSeed(s, attempt));
          std::vector<DTensor> in{RandomTensor({4, 5}, rng), RandomTensor({4, 5}, rng),
                                  RandomTensor({4, 5}, rng)};
          bool clear = true;
          for (int i = 0; i < 4; ++i) {
            auto row = [&](int t) {
              return std::vector<double>(in[t].data() + 5 * i, in[t].data() + 5 * i + 5);
            };
            // A margin of 3 keeps the hinge open, exposing cos(a, n) - cos(a, p).
            const double arg = 0.1 + Triplet(row(0), row(1), row(2), 3.0) - 3.0;
            clear = clear && std::abs(arg) > 0.01;
          }
          if (clear) return in;
        }
      },
      [](DGraph& g, const std::vector<Var>& v) {
        return nn::TripletLoss(g, nn::CosineSim(g, v[0], v[1]), nn::CosineSim(g, v[0], v[2]),
                               0.1);
      });
  Add("kd_l1_loss",
                   [](uint64_t s) {
                     Rng rng(s);
                     return std::vector<DTensor>{AwayFromZero({2, 3, 3, 4}, rng, 0.01)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     // Target zero: |x - 0| with x away from the kink.
                     return nn::KdL1Loss(g, v[0], DTensor(g.value(v[0]).shape()));
                   });
  Add("kd_l1_loss_shifted_target",
                   [](uint64_t s) {
                     Rng rng(s);
                     DTensor x = AwayFromZero({2, 4}, rng, 0.01);
                     for (size_t i = 0; i < x.size(); ++i) x[i] += 0.25 * static_cast<double>(i % 3);
                     return std::vector<DTensor>{x};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     DTensor target(g.value(v[0]).shape());
                     for (size_t i = 0; i < target.size(); ++i) {
                       target[i] = 0.25 * static_cast<double>(i % 3);
                     }
                     return nn::KdL1Loss(g, v[0], target);
                   });
  Add("total_loss",
                   [](uint64_t s) {
                     Rng rng(s);
                     DTensor pos({3}), neg({3});
                     for (int i = 0; i < 3; ++i) {
                       pos[i] = rng.Uniform(0.5, 1);
                       neg[i] = rng.Uniform(-1, 0.2);
                     }
                     for (int i = 0; i < 3; ++i) {
                       while (std::abs(0.1 + neg[i] - pos[i]) < 0.01) neg[i] -= 0.05;
                     }
                     return std::vector<DTensor>{pos, neg, AwayFromZero({2, 3}, rng, 0.01),
                                                 RandomTensor({4}, rng, 0.05, 0.95)};
                   },
                   [](DGraph& g, const std::vector<Var>& v) {
                     Var trp = nn::TripletLoss(g, v[0], v[1], 0.1);
                     Var kd = nn::KdL1Loss(g, v[2], DTensor({2, 3}));
                     Var cls = nn::BceLoss(g, v[3], {1, 0, 0, 1});
                     return nn::WeightedSum(g, {{trp, 1.0}, {kd, 1.0}, {cls, 1.0}});
                   });
  return cases;
}

std::vector<GradSuiteRow> RunGradientSuite(int seeds, uint64_t base_seed) {
  std::vector<GradSuiteRow> rows;
  for (const GradCase& c : GradientCases()) {
    GradSuiteRow row{c.name, 0, seeds};
    for (int s = 0; s < seeds; ++s) {
      const uint64_t seed = MixSeed(base_seed, s);
      const GradInstance inst = c.make(seed);
      const GradCheck r = CheckGradient(inst.fn, inst.inputs, MixSeed(seed, 99));
      row.max_rel_error = std::max(row.max_rel_error, r.max_rel_error);
    }
    rows.push_back(row);
  }
  return rows;
}

// ---- Imaging -------------------------------------------------------------

namespace {

float DenseSample(const Raster& img, double sx, double sy, int c) {
  sx = std::clamp(sx, 0.0, static_cast<double>(img.width() - 1));
  sy = std::clamp(sy, 0.0, static_cast<double>(img.height() - 1));
  double v = 0;
  for (int y = 0; y < img.height(); ++y) {
    const double wy = std::max(0.0, 1.0 - std::abs(sy - y));
    if (wy == 0) continue;
    for (int x = 0; x < img.width(); ++x) {
      const double wx = std::max(0.0, 1.0 - std::abs(sx - x));
      v += wx * wy * img.at(x, y, c);
    }
  }
  return static_cast<float>(v);
}

}  // namespace

Raster OracleCropAndResize(const Raster& img, const Box& box, int out_w, int out_h) {
  Raster out(out_w, out_h);
  for (int j = 0; j < out_h; ++j) {
    for (int i = 0; i < out_w; ++i) {
      const double sx = box.x * img.width() + (i + 0.5) * (box.w * img.width() / out_w) - 0.5;
      const double sy = box.y * img.height() + (j + 0.5) * (box.h * img.height() / out_h) - 0.5;
      for (int c = 0; c < 3; ++c) out.at(i, j, c) = DenseSample(img, sx, sy, c);
    }
  }
  return out;
}

Raster OracleComposite(const Raster& background, const Box& query_box, const Raster& fg) {
  const int W = background.width(), H = background.height();
  auto px = [](double v, int n) { return std::clamp(static_cast<int>(std::lround(v * n)), 0, n); };
  const int rx0 = px(query_box.x, W), ry0 = px(query_box.y, H);
  const int rx1 = px(query_box.x + query_box.w, W), ry1 = px(query_box.y + query_box.h, H);
  int gx0 = fg.width(), gy0 = fg.height(), gx1 = 0, gy1 = 0;
  for (int y = 0; y < fg.height(); ++y) {
    for (int x = 0; x < fg.width(); ++x) {
      const bool ink = fg.at(x, y, 0) < imaging::kWhiteThreshold ||
                       fg.at(x, y, 1) < imaging::kWhiteThreshold ||
                       fg.at(x, y, 2) < imaging::kWhiteThreshold;
      if (ink) {
        gx0 = std::min(gx0, x);
        gy0 = std::min(gy0, y);
        gx1 = std::max(gx1, x + 1);
        gy1 = std::max(gy1, y + 1);
      }
    }
  }
  if (gx1 == 0) {
    gx0 = gy0 = 0;
    gx1 = fg.width();
    gy1 = fg.height();
  }
  Raster glyph(gx1 - gx0, gy1 - gy0);
  for (int y = gy0; y < gy1; ++y) {
    for (int x = gx0; x < gx1; ++x) {
      for (int c = 0; c < 3; ++c) glyph.at(x - gx0, y - gy0, c) = fg.at(x, y, c);
    }
  }
  Raster out = background;
  const int rw = rx1 - rx0, rh = ry1 - ry0;
  for (int y = ry0; y < ry1; ++y) {
    for (int x = rx0; x < rx1; ++x) {
      const double sx = (x - rx0 + 0.5) * glyph.width() / rw - 0.5;
      const double sy = (y - ry0 + 0.5) * glyph.height() / rh - 0.5;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = DenseSample(glyph, sx, sy, c);
    }
  }
  return out;
}

double MaxAbsDiff(const Raster& a, const Raster& b) {
  if (a.width() != b.width() || a.height() != b.height()) return INFINITY;
  double m = 0;
  for (size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, static_cast<double>(std::abs(a.data()[i] - b.data()[i])));
  }
  return m;
}

}  // namespace compsearch::testing
