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

#ifndef COMPSEARCH_OPS_H_
#define COMPSEARCH_OPS_H_

#include <utility>
#include <vector>

#include "compsearch/graph.h"

namespace compsearch::nn {

// 2-D convolution on NHWC input. `weight` is [kh, kw, cin, cout] and `bias`
// is [cout]. Lowered to im2col + GEMM.
template <typename T>
Var Conv2d(Graph<T>& g, Var x, Var weight, Var bias, int stride, int pad);

template <typename T>
Var Relu(Graph<T>& g, Var x);

// 2x2 max pooling with stride 2 on NHWC input (odd trailing rows dropped).
template <typename T>
Var MaxPool2(Graph<T>& g, Var x);

// Global average pooling [n, h, w, c] -> [n, c].
template <typename T>
Var GlobalAvgPool(Graph<T>& g, Var x);

// x [n, in] * weight [in, out] + bias [out].
template <typename T>
Var Linear(Graph<T>& g, Var x, Var weight, Var bias);

template <typename T>
Var Sigmoid(Graph<T>& g, Var x);

// Concatenates along the last axis; leading dimensions must agree.
template <typename T>
Var ConcatChannels(Graph<T>& g, Var a, Var b);

// A fixed sparse linear map from input spatial positions to output spatial
// positions, applied identically to every channel. Bilinear sampling,
// RoIAlign and feature-map composition are all expressed as plans.
struct SpatialPlan {
  struct Tap {
    int src;        // input position y * w + x
    double weight;
  };
  int in_h = 0;
  int in_w = 0;
  int out_h = 0;
  int out_w = 0;
  std::vector<int> offsets;  // size out_h * out_w + 1, CSR into taps
  std::vector<Tap> taps;
};

// Applies `plans` to x [n, h, w, c]. One plan is broadcast over the batch;
// otherwise there must be one plan per batch element.
template <typename T>
Var Resample(Graph<T>& g, Var x, std::vector<SpatialPlan> plans);

// Sample point in feature-pixel coordinates; pixel (i, j) has its center at
// (y = i, x = j).
struct SamplePoint {
  double y;
  double x;
};

// Bilinear weights for one point, following the RoIAlign boundary rule:
// points further than one pixel outside the map contribute nothing, points
// within that band are clamped to the border.
std::vector<SpatialPlan::Tap> BilinearTaps(int h, int w, SamplePoint p);

// Samples x [n, h, w, c] at `points` -> [n, points, 1, c].
template <typename T>
Var BilinearSample(Graph<T>& g, Var x, const std::vector<SamplePoint>& points);

// Row-wise cosine similarity of u, v [n, c] -> [n]. Zero-norm rows are an
// error rather than being regularized away.
template <typename T>
Var CosineSim(Graph<T>& g, Var u, Var v);

// Selects rows along the leading axis: out[i] = x[index[i]].
template <typename T>
Var GatherRows(Graph<T>& g, Var x, std::vector<int> index);

template <typename T>
Var Add(Graph<T>& g, Var a, Var b);

template <typename T>
Var Reshape(Graph<T>& g, Var x, std::vector<int> shape);

// Scalar [1] = sum_i weight_i * term_i, each term a [1] tensor.
template <typename T>
Var WeightedSum(Graph<T>& g, const std::vector<std::pair<Var, double>>& terms);

// Mean over every element -> [1], accumulated in double.
template <typename T>
Var Mean(Graph<T>& g, Var x);

}  // namespace compsearch::nn

#endif  // COMPSEARCH_OPS_H_
