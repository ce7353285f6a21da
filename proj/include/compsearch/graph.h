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

#ifndef COMPSEARCH_GRAPH_H_
#define COMPSEARCH_GRAPH_H_

#include <functional>
#include <memory>
#include <vector>

#include "compsearch/tensor.h"

namespace compsearch::nn {

// Handle to a value recorded on a Graph.
struct Var {
  int index = -1;
  bool valid() const { return index >= 0; }
};

// Reverse-mode tape. Each op appends a node holding its forward value and a
// closure that accumulates gradients into its inputs. Nodes are visited in
// reverse creation order, which is a valid topological order for a tape.
// With gradients disabled no closures or saved activations are kept.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(Graph&, const Tensor<T>& out_grad)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var Constant(Tensor<T> value) { return Push(std::move(value), false, {}); }

  // A leaf whose gradient is tracked on the graph itself.
  Var Input(Tensor<T> value) {
    return Push(std::move(value), grad_enabled_, {});
  }

  // A leaf bound to a parameter; gradients accumulate into param.grad.
  Var Parameter(Param<T>& param) {
    auto node = std::make_unique<Node>();
    node->value = &param.value;
    node->requires_grad = grad_enabled_;
    if (grad_enabled_) {
      if (param.grad.shape() != param.value.shape()) param.ZeroGrad();
      node->grad = &param.grad;
      node->grad_touched = true;
    }
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  // Read-only binding of a parameter; never receives gradients.
  Var Parameter(const Param<T>& param) {
    auto node = std::make_unique<Node>();
    node->value = &param.value;
    nodes_.push_back(std::move(node));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  const Tensor<T>& value(Var v) const { return *node(v).value; }
  bool requires_grad(Var v) const { return node(v).requires_grad; }

  bool has_grad(Var v) const {
    const Node& n = node(v);
    return n.grad != nullptr && n.grad_touched;
  }

  const Tensor<T>& grad(Var v) const {
    Check(has_grad(v), ErrorCode::kInvalidArgument, "variable has no gradient");
    return *node(v).grad;
  }

  // Records an op result. `backward` is dropped unless some input needs it.
  Var Emit(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    const bool keep = requires_grad && grad_enabled_;
    return Push(std::move(value), keep, keep ? std::move(backward) : nullptr);
  }

  // Gradient buffer of `v`, zero-initialized on first use; nullptr when `v`
  // does not take part in differentiation.
  Tensor<T>* GradFor(Var v) {
    Node& n = node(v);
    if (!n.requires_grad) return nullptr;
    if (n.grad == nullptr) {
      n.owned_grad = Tensor<T>(n.value->shape());
      n.grad = &n.owned_grad;
    }
    n.grad_touched = true;
    return n.grad;
  }

  void Backward(Var loss) {
    Check(value(loss).size() == 1, ErrorCode::kShapeMismatch,
          "backward expects a scalar, got shape " +
              ShapeString(value(loss).shape()));
    Tensor<T>* seed = GradFor(loss);
    Check(seed != nullptr, ErrorCode::kInvalidArgument,
          "loss does not depend on any differentiable input");
    (*seed)[0] += T{1};
    for (int i = loss.index; i >= 0; --i) {
      Node& n = *nodes_[i];
      if (n.backward && n.grad != nullptr && n.grad_touched) {
        n.backward(*this, *n.grad);
      }
    }
  }

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor<T> owned;
    const Tensor<T>* value = nullptr;
    Tensor<T> owned_grad;
    Tensor<T>* grad = nullptr;
    bool grad_touched = false;
    bool requires_grad = false;
    BackwardFn backward;
  };

  Var Push(Tensor<T> value, bool requires_grad, BackwardFn backward) {
    auto n = std::make_unique<Node>();
    n->owned = std::move(value);
    n->value = &n->owned;
    n->requires_grad = requires_grad;
    n->backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Node& node(Var v) {
    Check(v.index >= 0 && v.index < static_cast<int>(nodes_.size()),
          ErrorCode::kInvalidArgument, "invalid graph variable");
    return *nodes_[v.index];
  }
  const Node& node(Var v) const {
    Check(v.index >= 0 && v.index < static_cast<int>(nodes_.size()),
          ErrorCode::kInvalidArgument, "invalid graph variable");
    return *nodes_[v.index];
  }

  bool grad_enabled_;
  std::vector<std::unique_ptr<Node>> nodes_;
};

}  // namespace compsearch::nn

#endif  // COMPSEARCH_GRAPH_H_
