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

#include "compsearch/ops.h"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>

namespace compsearch::nn {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

void ExpectRank(const std::vector<int>& shape, int rank, const char* op,
                const char* arg) {
  Check(static_cast<int>(shape.size()) == rank, ErrorCode::kShapeMismatch,
        std::string(op) + ": " + arg + " must have rank " +
            std::to_string(rank) + ", got " + ShapeString(shape));
}

void ExpectSameShape(const std::vector<int>& a, const std::vector<int>& b,
                     const char* op) {
  Check(a == b, ErrorCode::kShapeMismatch,
        std::string(op) + ": shape mismatch " + ShapeString(a) + " vs " +
            ShapeString(b));
}

}  // namespace

template <typename T>
Var Conv2d(Graph<T>& g, Var xv, Var wv, Var bv, int stride, int pad) {
  const Tensor<T>& x = g.value(xv);
  const Tensor<T>& w = g.value(wv);
  const Tensor<T>& b = g.value(bv);
  ExpectRank(x.shape(), 4, "conv2d", "input");
  ExpectRank(w.shape(), 4, "conv2d", "weight");
  ExpectRank(b.shape(), 1, "conv2d", "bias");
  Check(w.dim(2) == x.dim(3) && b.dim(0) == w.dim(3),
        ErrorCode::kShapeMismatch,
        "conv2d: input " + ShapeString(x.shape()) + " incompatible with weight " +
            ShapeString(w.shape()) + " / bias " + ShapeString(b.shape()));
  Check(stride >= 1 && pad >= 0, ErrorCode::kInvalidArgument,
        "conv2d: stride must be >= 1 and pad >= 0");
  const int n = x.dim(0), h = x.dim(1), wd = x.dim(2), c = x.dim(3);
  const int kh = w.dim(0), kw = w.dim(1), co = w.dim(3);
  const int ho = (h + 2 * pad - kh) / stride + 1;
  const int wo = (wd + 2 * pad - kw) / stride + 1;
  Check(ho > 0 && wo > 0, ErrorCode::kShapeMismatch,
        "conv2d: kernel larger than padded input " + ShapeString(x.shape()));
  const int rows = n * ho * wo;
  const int k = kh * kw * c;

  auto cols = std::make_shared<std::vector<T>>(static_cast<size_t>(rows) * k, T{0});
  for (int bi = 0; bi < n; ++bi) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        T* row = cols->data() + (static_cast<size_t>(bi * ho + oy) * wo + ox) * k;
        for (int ky = 0; ky < kh; ++ky) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= h) continue;
          for (int kx = 0; kx < kw; ++kx) {
            const int ix = ox * stride - pad + kx;
            if (ix < 0 || ix >= wd) continue;
            const T* src = x.data() + (static_cast<size_t>(bi * h + iy) * wd + ix) * c;
            std::copy(src, src + c, row + (ky * kw + kx) * c);
          }
        }
      }
    }
  }

  Tensor<T> out({n, ho, wo, co});
  {
    Eigen::Map<RowMat<T>> om(out.data(), rows, co);
    Eigen::Map<const RowMat<T>> cm(cols->data(), rows, k);
    Eigen::Map<const RowMat<T>> wm(w.data(), k, co);
    om.noalias() = cm * wm;
    om.rowwise() += Eigen::Map<const RowVec<T>>(b.data(), co);
  }

  const bool req = g.requires_grad(xv) || g.requires_grad(wv) || g.requires_grad(bv);
  return g.Emit(std::move(out), req,
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Eigen::Map<const RowMat<T>> gm(gy.data(), rows, co);
        Eigen::Map<const RowMat<T>> cm(cols->data(), rows, k);
        if (Tensor<T>* gw = g.GradFor(wv)) {
          Eigen::Map<RowMat<T>>(gw->data(), k, co).noalias() += cm.transpose() * gm;
        }
        if (Tensor<T>* gb = g.GradFor(bv)) {
          // Plain loop: vectorized reductions depend on buffer alignment.
          for (int r = 0; r < rows; ++r) {
            const T* src = gy.data() + static_cast<size_t>(r) * co;
            for (int j = 0; j < co; ++j) (*gb)[j] += src[j];
          }
        }
        if (Tensor<T>* gx = g.GradFor(xv)) {
          Eigen::Map<const RowMat<T>> wm(g.value(wv).data(), k, co);
          RowMat<T> dcols = gm * wm.transpose();
          for (int bi = 0; bi < n; ++bi) {
            for (int oy = 0; oy < ho; ++oy) {
              for (int ox = 0; ox < wo; ++ox) {
                const T* row = dcols.data() + (static_cast<size_t>(bi * ho + oy) * wo + ox) * k;
                for (int ky = 0; ky < kh; ++ky) {
                  const int iy = oy * stride - pad + ky;
                  if (iy < 0 || iy >= h) continue;
                  for (int kx = 0; kx < kw; ++kx) {
                    const int ix = ox * stride - pad + kx;
                    if (ix < 0 || ix >= wd) continue;
                    T* dst = gx->data() + (static_cast<size_t>(bi * h + iy) * wd + ix) * c;
                    const T* src = row + (ky * kw + kx) * c;
                    for (int ci = 0; ci < c; ++ci) dst[ci] += src[ci];
                  }
                }
              }
            }
          }
        }
      });
}

template <typename T>
Var Relu(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  Tensor<T> out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T{0} ? x[i] : T{0};
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        const Tensor<T>& x = g.value(xv);
        for (size_t i = 0; i < x.size(); ++i) {
          if (x[i] > T{0}) (*gx)[i] += gy[i];
        }
      });
}

template <typename T>
Var MaxPool2(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  ExpectRank(x.shape(), 4, "maxpool2", "input");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  Check(ho > 0 && wo > 0, ErrorCode::kShapeMismatch,
        "maxpool2: input too small " + ShapeString(x.shape()));
  Tensor<T> out({n, ho, wo, c});
  auto argmax = std::make_shared<std::vector<int>>(out.size());
  size_t o = 0;
  for (int bi = 0; bi < n; ++bi) {
    for (int oy = 0; oy < ho; ++oy) {
      for (int ox = 0; ox < wo; ++ox) {
        for (int ci = 0; ci < c; ++ci, ++o) {
          int best = ((bi * h + 2 * oy) * w + 2 * ox) * c + ci;
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const int idx = ((bi * h + 2 * oy + dy) * w + 2 * ox + dx) * c + ci;
              if (x[idx] > x[best]) best = idx;
            }
          }
          out[o] = x[best];
          (*argmax)[o] = best;
        }
      }
    }
  }
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        for (size_t i = 0; i < argmax->size(); ++i) (*gx)[(*argmax)[i]] += gy[i];
      });
}

template <typename T>
Var GlobalAvgPool(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  ExpectRank(x.shape(), 4, "gap", "input");
  const int n = x.dim(0), hw = x.dim(1) * x.dim(2), c = x.dim(3);
  Tensor<T> out({n, c});
  std::vector<double> acc(c);
  for (int bi = 0; bi < n; ++bi) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const T* src = x.data() + static_cast<size_t>(bi) * hw * c;
    for (int p = 0; p < hw; ++p) {
      for (int ci = 0; ci < c; ++ci) acc[ci] += src[p * c + ci];
    }
    for (int ci = 0; ci < c; ++ci) out[bi * c + ci] = static_cast<T>(acc[ci] / hw);
  }
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        const T inv = T{1} / static_cast<T>(hw);
        for (int bi = 0; bi < n; ++bi) {
          T* dst = gx->data() + static_cast<size_t>(bi) * hw * c;
          for (int p = 0; p < hw; ++p) {
            for (int ci = 0; ci < c; ++ci) dst[p * c + ci] += gy[bi * c + ci] * inv;
          }
        }
      });
}

template <typename T>
Var Linear(Graph<T>& g, Var xv, Var wv, Var bv) {
  const Tensor<T>& x = g.value(xv);
  const Tensor<T>& w = g.value(wv);
  const Tensor<T>& b = g.value(bv);
  ExpectRank(x.shape(), 2, "linear", "input");
  ExpectRank(w.shape(), 2, "linear", "weight");
  ExpectRank(b.shape(), 1, "linear", "bias");
  Check(x.dim(1) == w.dim(0) && w.dim(1) == b.dim(0), ErrorCode::kShapeMismatch,
        "linear: input " + ShapeString(x.shape()) + " incompatible with weight " +
            ShapeString(w.shape()) + " / bias " + ShapeString(b.shape()));
  const int n = x.dim(0), in = x.dim(1), out_dim = w.dim(1);
  Tensor<T> out({n, out_dim});
  {
    Eigen::Map<RowMat<T>> om(out.data(), n, out_dim);
    om.noalias() = Eigen::Map<const RowMat<T>>(x.data(), n, in) *
                   Eigen::Map<const RowMat<T>>(w.data(), in, out_dim);
    om.rowwise() += Eigen::Map<const RowVec<T>>(b.data(), out_dim);
  }
  const bool req = g.requires_grad(xv) || g.requires_grad(wv) || g.requires_grad(bv);
  return g.Emit(std::move(out), req,
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Eigen::Map<const RowMat<T>> gm(gy.data(), n, out_dim);
        if (Tensor<T>* gw = g.GradFor(wv)) {
          Eigen::Map<RowMat<T>>(gw->data(), in, out_dim).noalias() +=
              Eigen::Map<const RowMat<T>>(g.value(xv).data(), n, in).transpose() * gm;
        }
        if (Tensor<T>* gb = g.GradFor(bv)) {
          // Plain loop: vectorized reductions depend on buffer alignment.
          for (int r = 0; r < n; ++r) {
            const T* src = gy.data() + static_cast<size_t>(r) * out_dim;
            for (int j = 0; j < out_dim; ++j) (*gb)[j] += src[j];
          }
        }
        if (Tensor<T>* gx = g.GradFor(xv)) {
          Eigen::Map<RowMat<T>>(gx->data(), n, in).noalias() +=
              gm * Eigen::Map<const RowMat<T>>(g.value(wv).data(), in, out_dim).transpose();
        }
      });
}

template <typename T>
Var Sigmoid(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  Tensor<T> out(x.shape());
  for (size_t i = 0; i < x.size(); ++i) {
    const T v = x[i];
    if (v >= T{0}) {
      out[i] = T{1} / (T{1} + std::exp(-v));
    } else {
      const T e = std::exp(v);
      out[i] = e / (T{1} + e);
    }
  }
  auto y = std::make_shared<Tensor<T>>(out);
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        for (size_t i = 0; i < y->size(); ++i) {
          (*gx)[i] += gy[i] * (*y)[i] * (T{1} - (*y)[i]);
        }
      });
}

template <typename T>
Var ConcatChannels(Graph<T>& g, Var av, Var bv) {
  const Tensor<T>& a = g.value(av);
  const Tensor<T>& b = g.value(bv);
  std::vector<int> lead_a(a.shape().begin(), a.shape().end() - 1);
  std::vector<int> lead_b(b.shape().begin(), b.shape().end() - 1);
  Check(a.rank() >= 1 && lead_a == lead_b, ErrorCode::kShapeMismatch,
        "concat_channels: shape mismatch " + ShapeString(a.shape()) + " vs " +
            ShapeString(b.shape()));
  const int ca = a.dim(-1), cb = b.dim(-1), cs = ca + cb;
  const size_t rows = a.size() / ca;
  std::vector<int> shape = a.shape();
  shape.back() = cs;
  Tensor<T> out(shape);
  for (size_t r = 0; r < rows; ++r) {
    std::copy(a.data() + r * ca, a.data() + (r + 1) * ca, out.data() + r * cs);
    std::copy(b.data() + r * cb, b.data() + (r + 1) * cb, out.data() + r * cs + ca);
  }
  const bool req = g.requires_grad(av) || g.requires_grad(bv);
  return g.Emit(std::move(out), req,
      [=](Graph<T>& g, const Tensor<T>& gy) {
        if (Tensor<T>* ga = g.GradFor(av)) {
          for (size_t r = 0; r < rows; ++r)
            for (int i = 0; i < ca; ++i) (*ga)[r * ca + i] += gy[r * cs + i];
        }
        if (Tensor<T>* gb = g.GradFor(bv)) {
          for (size_t r = 0; r < rows; ++r)
            for (int i = 0; i < cb; ++i) (*gb)[r * cb + i] += gy[r * cs + ca + i];
        }
      });
}

template <typename T>
Var Resample(Graph<T>& g, Var xv, std::vector<SpatialPlan> plans) {
  const Tensor<T>& x = g.value(xv);
  ExpectRank(x.shape(), 4, "resample", "input");
  const int n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  Check(!plans.empty() && (plans.size() == 1 || static_cast<int>(plans.size()) == n),
        ErrorCode::kShapeMismatch,
        "resample: need 1 or " + std::to_string(n) + " plans, got " +
            std::to_string(plans.size()));
  const int oh = plans[0].out_h, ow = plans[0].out_w;
  for (const SpatialPlan& p : plans) {
    Check(p.in_h == h && p.in_w == w && p.out_h == oh && p.out_w == ow &&
              static_cast<int>(p.offsets.size()) == oh * ow + 1,
          ErrorCode::kShapeMismatch,
          "resample: plan does not match input " + ShapeString(x.shape()));
  }
  auto shared = std::make_shared<std::vector<SpatialPlan>>(std::move(plans));
  Tensor<T> out({n, oh, ow, c});
  for (int bi = 0; bi < n; ++bi) {
    const SpatialPlan& p = (*shared)[shared->size() == 1 ? 0 : bi];
    const T* src = x.data() + static_cast<size_t>(bi) * h * w * c;
    T* dst = out.data() + static_cast<size_t>(bi) * oh * ow * c;
    for (int o = 0; o < oh * ow; ++o) {
      for (int t = p.offsets[o]; t < p.offsets[o + 1]; ++t) {
        const T wt = static_cast<T>(p.taps[t].weight);
        const T* s = src + static_cast<size_t>(p.taps[t].src) * c;
        for (int ci = 0; ci < c; ++ci) dst[o * c + ci] += wt * s[ci];
      }
    }
  }
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        for (int bi = 0; bi < n; ++bi) {
          const SpatialPlan& p = (*shared)[shared->size() == 1 ? 0 : bi];
          T* dst = gx->data() + static_cast<size_t>(bi) * h * w * c;
          const T* src = gy.data() + static_cast<size_t>(bi) * oh * ow * c;
          for (int o = 0; o < oh * ow; ++o) {
            for (int t = p.offsets[o]; t < p.offsets[o + 1]; ++t) {
              const T wt = static_cast<T>(p.taps[t].weight);
              T* d = dst + static_cast<size_t>(p.taps[t].src) * c;
              for (int ci = 0; ci < c; ++ci) d[ci] += wt * src[o * c + ci];
            }
          }
        }
      });
}

std::vector<SpatialPlan::Tap> BilinearTaps(int h, int w, SamplePoint p) {
  double y = p.y, x = p.x;
  if (y < -1.0 || y > h || x < -1.0 || x > w) return {};
  y = std::max(y, 0.0);
  x = std::max(x, 0.0);
  int y0 = static_cast<int>(y), x0 = static_cast<int>(x), y1, x1;
  if (y0 >= h - 1) {
    y0 = y1 = h - 1;
    y = y0;
  } else {
    y1 = y0 + 1;
  }
  if (x0 >= w - 1) {
    x0 = x1 = w - 1;
    x = x0;
  } else {
    x1 = x0 + 1;
  }
  const double ly = y - y0, lx = x - x0, hy = 1.0 - ly, hx = 1.0 - lx;
  return {{y0 * w + x0, hy * hx},
          {y0 * w + x1, hy * lx},
          {y1 * w + x0, ly * hx},
          {y1 * w + x1, ly * lx}};
}

template <typename T>
Var BilinearSample(Graph<T>& g, Var xv, const std::vector<SamplePoint>& points) {
  const Tensor<T>& x = g.value(xv);
  ExpectRank(x.shape(), 4, "bilinear_sample", "input");
  SpatialPlan plan;
  plan.in_h = x.dim(1);
  plan.in_w = x.dim(2);
  plan.out_h = static_cast<int>(points.size());
  plan.out_w = 1;
  plan.offsets.push_back(0);
  for (const SamplePoint& p : points) {
    for (const auto& tap : BilinearTaps(plan.in_h, plan.in_w, p)) plan.taps.push_back(tap);
    plan.offsets.push_back(static_cast<int>(plan.taps.size()));
  }
  return Resample(g, xv, {std::move(plan)});
}

template <typename T>
Var CosineSim(Graph<T>& g, Var uv, Var vv) {
  const Tensor<T>& u = g.value(uv);
  const Tensor<T>& v = g.value(vv);
  ExpectRank(u.shape(), 2, "cosine_sim", "u");
  ExpectSameShape(u.shape(), v.shape(), "cosine_sim");
  const int n = u.dim(0), c = u.dim(1);
  auto stats = std::make_shared<std::vector<double>>(3 * n);  // dot, |u|, |v|
  Tensor<T> out({n});
  for (int i = 0; i < n; ++i) {
    double dot = 0, uu = 0, vv2 = 0;
    for (int j = 0; j < c; ++j) {
      const double a = u[i * c + j], b = v[i * c + j];
      dot += a * b;
      uu += a * a;
      vv2 += b * b;
    }
    Check(uu > 0.0 && vv2 > 0.0, ErrorCode::kNumerical,
          "cosine_sim: zero-norm vector in row " + std::to_string(i));
    const double nu = std::sqrt(uu), nv = std::sqrt(vv2);
    (*stats)[3 * i] = dot;
    (*stats)[3 * i + 1] = nu;
    (*stats)[3 * i + 2] = nv;
    out[i] = static_cast<T>(dot / (nu * nv));
  }
  const bool req = g.requires_grad(uv) || g.requires_grad(vv);
  return g.Emit(std::move(out), req,
      [=](Graph<T>& g, const Tensor<T>& gy) {
        const Tensor<T>& u = g.value(uv);
        const Tensor<T>& v = g.value(vv);
        Tensor<T>* gu = g.GradFor(uv);
        Tensor<T>* gv = g.GradFor(vv);
        for (int i = 0; i < n; ++i) {
          const double dot = (*stats)[3 * i], nu = (*stats)[3 * i + 1],
                       nv = (*stats)[3 * i + 2];
          const double s = dot / (nu * nv);
          const double go = gy[i];
          for (int j = 0; j < c; ++j) {
            const double a = u[i * c + j], b = v[i * c + j];
            if (gu) (*gu)[i * c + j] += static_cast<T>(go * (b / (nu * nv) - s * a / (nu * nu)));
            if (gv) (*gv)[i * c + j] += static_cast<T>(go * (a / (nu * nv) - s * b / (nv * nv)));
          }
        }
      });
}

template <typename T>
Var GatherRows(Graph<T>& g, Var xv, std::vector<int> index) {
  const Tensor<T>& x = g.value(xv);
  Check(x.rank() >= 1, ErrorCode::kShapeMismatch, "gather_rows: scalar input");
  const int rows = x.dim(0);
  const size_t stride = rows > 0 ? x.size() / rows : 0;
  for (int i : index) {
    Check(i >= 0 && i < rows, ErrorCode::kInvalidArgument,
          "gather_rows: index " + std::to_string(i) + " out of range for " +
              ShapeString(x.shape()));
  }
  std::vector<int> shape = x.shape();
  shape[0] = static_cast<int>(index.size());
  Tensor<T> out(shape);
  for (size_t r = 0; r < index.size(); ++r) {
    std::copy(x.data() + index[r] * stride, x.data() + (index[r] + 1) * stride,
              out.data() + r * stride);
  }
  auto idx = std::make_shared<std::vector<int>>(std::move(index));
  return g.Emit(std::move(out), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        for (size_t r = 0; r < idx->size(); ++r) {
          T* d = gx->data() + (*idx)[r] * stride;
          const T* s = gy.data() + r * stride;
          for (size_t k = 0; k < stride; ++k) d[k] += s[k];
        }
      });
}

template <typename T>
Var Add(Graph<T>& g, Var av, Var bv) {
  const Tensor<T>& a = g.value(av);
  const Tensor<T>& b = g.value(bv);
  ExpectSameShape(a.shape(), b.shape(), "add");
  Tensor<T> out(a.shape());
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  const bool req = g.requires_grad(av) || g.requires_grad(bv);
  return g.Emit(std::move(out), req,
      [=](Graph<T>& g, const Tensor<T>& gy) {
        if (Tensor<T>* ga = g.GradFor(av))
          for (size_t i = 0; i < gy.size(); ++i) (*ga)[i] += gy[i];
        if (Tensor<T>* gb = g.GradFor(bv))
          for (size_t i = 0; i < gy.size(); ++i) (*gb)[i] += gy[i];
      });
}

template <typename T>
Var Reshape(Graph<T>& g, Var xv, std::vector<int> shape) {
  const Tensor<T>& x = g.value(xv);
  Check(NumElements(shape) == x.size(), ErrorCode::kShapeMismatch,
        "reshape: cannot view " + ShapeString(x.shape()) + " as " +
            ShapeString(shape));
  return g.Emit(x.Reshaped(std::move(shape)), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        for (size_t i = 0; i < gy.size(); ++i) (*gx)[i] += gy[i];
      });
}

template <typename T>
Var WeightedSum(Graph<T>& g, const std::vector<std::pair<Var, double>>& terms) {
  double total = 0.0;
  bool req = false;
  for (const auto& [v, w] : terms) {
    Check(g.value(v).size() == 1, ErrorCode::kShapeMismatch,
          "weighted_sum: terms must be scalars, got " +
              ShapeString(g.value(v).shape()));
    total += w * static_cast<double>(g.value(v)[0]);
    req = req || g.requires_grad(v);
  }
  auto copy = terms;
  return g.Emit(Tensor<T>({1}, static_cast<T>(total)), req,
      [copy](Graph<T>& g, const Tensor<T>& gy) {
        for (const auto& [v, w] : copy) {
          if (Tensor<T>* gv = g.GradFor(v)) (*gv)[0] += static_cast<T>(w) * gy[0];
        }
      });
}

template <typename T>
Var Mean(Graph<T>& g, Var xv) {
  const Tensor<T>& x = g.value(xv);
  Check(x.size() > 0, ErrorCode::kShapeMismatch, "mean: empty tensor");
  double acc = 0.0;
  for (size_t i = 0; i < x.size(); ++i) acc += x[i];
  const size_t count = x.size();
  return g.Emit(Tensor<T>({1}, static_cast<T>(acc / count)), g.requires_grad(xv),
      [=](Graph<T>& g, const Tensor<T>& gy) {
        Tensor<T>* gx = g.GradFor(xv);
        const T share = gy[0] / static_cast<T>(count);
        for (size_t i = 0; i < count; ++i) (*gx)[i] += share;
      });
}

#define COMPSEARCH_INSTANTIATE_OPS(T)                                           \
  template Var Conv2d<T>(Graph<T>&, Var, Var, Var, int, int);                   \
  template Var Relu<T>(Graph<T>&, Var);                                         \
  template Var MaxPool2<T>(Graph<T>&, Var);                                     \
  template Var GlobalAvgPool<T>(Graph<T>&, Var);                                \
  template Var Linear<T>(Graph<T>&, Var, Var, Var);                             \
  template Var Sigmoid<T>(Graph<T>&, Var);                                      \
  template Var ConcatChannels<T>(Graph<T>&, Var, Var);                          \
  template Var Resample<T>(Graph<T>&, Var, std::vector<SpatialPlan>);           \
  template Var BilinearSample<T>(Graph<T>&, Var, const std::vector<SamplePoint>&); \
  template Var CosineSim<T>(Graph<T>&, Var, Var);                               \
  template Var GatherRows<T>(Graph<T>&, Var, std::vector<int>);                 \
  template Var Add<T>(Graph<T>&, Var, Var);                                     \
  template Var Reshape<T>(Graph<T>&, Var, std::vector<int>);                    \
  template Var WeightedSum<T>(Graph<T>&, const std::vector<std::pair<Var, double>>&); \
  template Var Mean<T>(Graph<T>&, Var);

COMPSEARCH_INSTANTIATE_OPS(float)
COMPSEARCH_INSTANTIATE_OPS(double)

}  // namespace compsearch::nn
