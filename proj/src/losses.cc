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

#include "compsearch/losses.h"

#include <algorithm>
#include <cmath>

#include "compsearch/common.h"

namespace compsearch {

void LossConfig::Validate() const {
  Check(margin > 0.0 && margin < 1.0, ErrorCode::kInvalidArgument,
        "margin must lie in (0, 1), got " + std::to_string(margin));
  Check(lambda_kd >= 0.0 && lambda_cls >= 0.0, ErrorCode::kInvalidArgument,
        "loss weights must be non-negative");
}

double Bce(double p, int label) {
  Check(label == 0 || label == 1, ErrorCode::kInvalidArgument,
        "label must be 0 or 1, got " + std::to_string(label));
  const double q = std::clamp(p, kProbabilityClamp, 1.0 - kProbabilityClamp);
  return label == 1 ? -std::log(q) : -std::log(1.0 - q);
}

namespace {

double Cosine(const std::vector<double>& u, const std::vector<double>& v) {
  Check(u.size() == v.size(), ErrorCode::kShapeMismatch,
        "cosine of vectors with " + std::to_string(u.size()) + " and " +
            std::to_string(v.size()) + " elements");
  double uv = 0, uu = 0, vv = 0;
  for (size_t i = 0; i < u.size(); ++i) {
    uv += u[i] * v[i];
    uu += u[i] * u[i];
    vv += v[i] * v[i];
  }
  Check(uu > 0 && vv > 0, ErrorCode::kNumerical, "cosine of a zero vector");
  return uv / std::sqrt(uu * vv);
}

}  // namespace

double TripletFromSimilarities(double sim_pos, double sim_neg, double margin) {
  return std::max(0.0, margin + sim_neg - sim_pos);
}

double Triplet(const std::vector<double>& anchor,
               const std::vector<double>& positive,
               const std::vector<double>& negative, double margin) {
  return TripletFromSimilarities(Cosine(anchor, positive),
                                 Cosine(anchor, negative), margin);
}

double KdL1(const std::vector<double>& distilled,
            const std::vector<double>& composite) {
  Check(distilled.size() == composite.size() && !distilled.empty(),
        ErrorCode::kShapeMismatch,
        "kd_l1 of " + std::to_string(distilled.size()) + " and " +
            std::to_string(composite.size()) + " elements");
  double acc = 0;
  for (size_t i = 0; i < distilled.size(); ++i) {
    acc += std::abs(distilled[i] - composite[i]);
  }
  return acc / distilled.size();
}

double TotalLoss(double trp, double kd, double cls, const LossConfig& cfg) {
  return trp + cfg.lambda_kd * kd + cfg.lambda_cls * cls;
}

namespace nn {

template <typename T>
Var BceLoss(Graph<T>& g, Var pv, const std::vector<int>& labels) {
  const Tensor<T>& p = g.value(pv);
  Check(p.rank() == 1 && p.size() == labels.size() && !labels.empty(),
        ErrorCode::kShapeMismatch,
        "bce: probabilities " + ShapeString(p.shape()) + " vs " +
            std::to_string(labels.size()) + " labels");
  double acc = 0;
  for (size_t i = 0; i < labels.size(); ++i) acc += Bce(p[i], labels[i]);
  const size_t n = labels.size();
  return g.Emit(Tensor<T>({1}, static_cast<T>(acc / n)), g.requires_grad(pv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gp = g.GradFor(pv);
        const Tensor<T>& p = g.value(pv);
        for (size_t i = 0; i < n; ++i) {
          const double q = static_cast<double>(p[i]);
          if (q < kProbabilityClamp || q > 1.0 - kProbabilityClamp) continue;
          const double d = labels[i] == 1 ? -1.0 / q : 1.0 / (1.0 - q);
          (*gp)[i] += static_cast<T>(gy[0] * d / n);
        }
      });
}

template <typename T>
Var TripletLoss(Graph<T>& g, Var pos, Var neg, double margin) {
  const Tensor<T>& sp = g.value(pos);
  const Tensor<T>& sn = g.value(neg);
  Check(sp.rank() == 1 && sp.shape() == sn.shape() && sp.size() > 0,
        ErrorCode::kShapeMismatch,
        "triplet: similarities " + ShapeString(sp.shape()) + " vs " +
            ShapeString(sn.shape()));
  const size_t n = sp.size();
  std::vector<bool> active(n);
  double acc = 0;
  for (size_t i = 0; i < n; ++i) {
    const double h = margin + sn[i] - sp[i];
    active[i] = h > 0.0;
    if (active[i]) acc += h;
  }
  return g.Emit(Tensor<T>({1}, static_cast<T>(acc / n)),
                g.requires_grad(pos) || g.requires_grad(neg),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        const T share = gy[0] / static_cast<T>(n);
        Tensor<T>* gp = g.GradFor(pos);
        Tensor<T>* gn = g.GradFor(neg);
        for (size_t i = 0; i < n; ++i) {
          if (!active[i]) continue;
          if (gp) (*gp)[i] -= share;
          if (gn) (*gn)[i] += share;
        }
      });
}

template <typename T>
Var KdL1Loss(Graph<T>& g, Var dv, const Tensor<T>& target) {
  const Tensor<T>& d = g.value(dv);
  Check(d.shape() == target.shape() && d.size() > 0, ErrorCode::kShapeMismatch,
        "kd_l1: distilled " + ShapeString(d.shape()) + " vs target " +
            ShapeString(target.shape()));
  const size_t n = d.size();
  std::vector<int8_t> sign(n);
  double acc = 0;
  for (size_t i = 0; i < n; ++i) {
    const double diff = static_cast<double>(d[i]) - target[i];
    acc += std::abs(diff);
    sign[i] = diff > 0 ? 1 : (diff < 0 ? -1 : 0);
  }
  return g.Emit(Tensor<T>({1}, static_cast<T>(acc / n)), g.requires_grad(dv),
      [=, sign = std::move(sign)](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gd = g.GradFor(dv);
        const T share = gy[0] / static_cast<T>(n);
        for (size_t i = 0; i < n; ++i) (*gd)[i] += share * sign[i];
      });
}

#define COMPSEARCH_INSTANTIATE_LOSSES(T)                                  \
  template Var BceLoss<T>(Graph<T>&, Var, const std::vector<int>&);       \
  template Var TripletLoss<T>(Graph<T>&, Var, Var, double);               \
  template Var KdL1Loss<T>(Graph<T>&, Var, const Tensor<T>&);

COMPSEARCH_INSTANTIATE_LOSSES(float)
COMPSEARCH_INSTANTIATE_LOSSES(double)

}  // namespace nn
}  // namespace compsearch
