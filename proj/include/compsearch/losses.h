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

#ifndef COMPSEARCH_LOSSES_H_
#define COMPSEARCH_LOSSES_H_

#include <vector>

#include "compsearch/graph.h"
#include "compsearch/tensor.h"

namespace compsearch {

struct LossConfig {
  double margin = 0.1;
  double lambda_kd = 1.0;
  double lambda_cls = 1.0;

  void Validate() const;
};

inline constexpr double kProbabilityClamp = 1e-7;

// Scalar forms.
double Bce(double p, int label);
// Hinge on the cosine gap between (anchor, positive) and (anchor, negative).
double Triplet(const std::vector<double>& anchor,
               const std::vector<double>& positive,
               const std::vector<double>& negative, double margin);
double TripletFromSimilarities(double sim_pos, double sim_neg, double margin);
// Mean absolute difference.
double KdL1(const std::vector<double>& distilled,
            const std::vector<double>& composite);
double TotalLoss(double trp, double kd, double cls, const LossConfig& cfg);

namespace nn {

// Mean binary cross entropy of probabilities `p` [n] against `labels`.
// Probabilities are clamped to [1e-7, 1 - 1e-7]; the clamp passes no
// gradient once active.
template <typename T>
Var BceLoss(Graph<T>& g, Var p, const std::vector<int>& labels);

// Mean over i of max(0, margin + sim_neg[i] - sim_pos[i]). The subgradient
// at the kink is 0.
template <typename T>
Var TripletLoss(Graph<T>& g, Var sim_pos, Var sim_neg, double margin);

// Mean |distilled - target|, with `target` a constant of the same shape.
// The subgradient of |.| at 0 is 0.
template <typename T>
Var KdL1Loss(Graph<T>& g, Var distilled, const Tensor<T>& target);

}  // namespace nn
}  // namespace compsearch

#endif  // COMPSEARCH_LOSSES_H_
