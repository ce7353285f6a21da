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

#ifndef COMPSEARCH_TENSOR_H_
#define COMPSEARCH_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "compsearch/common.h"

namespace compsearch::nn {

std::size_t NumElements(const std::vector<int>& shape);
std::string ShapeString(const std::vector<int>& shape);

// Dense row-major array. Feature maps use NHWC layout throughout.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T{0})
      : shape_(std::move(shape)), data_(NumElements(shape_), fill) {}
  Tensor(std::vector<int> shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    Check(data_.size() == NumElements(shape_), ErrorCode::kShapeMismatch,
          "tensor data length " + std::to_string(data_.size()) +
              " does not match shape " + ShapeString(shape_));
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  // Negative axes count from the end.
  int dim(int axis) const {
    return shape_[axis < 0 ? shape_.size() + axis : axis];
  }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void Fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  Tensor Reshaped(std::vector<int> shape) const {
    return Tensor(std::move(shape), data_);
  }

  template <typename U>
  Tensor<U> Cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  std::vector<int> shape_;
  std::vector<T> data_;
};

// A trainable array with a stable identifier used as its checkpoint key.
template <typename T>
struct Param {
  std::string id;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string name, Tensor<T> init)
      : id(std::move(name)), value(std::move(init)), grad(value.shape()) {}

  void ZeroGrad() {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    grad.Fill(T{0});
  }
};

}  // namespace compsearch::nn

#endif  // COMPSEARCH_TENSOR_H_
