// Copyright (c) 2026 melmask authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//   http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "melmask/tensor.hpp"

namespace melmask::ad {

/// Reverse-mode tape over dense tensors. Values are computed eagerly as nodes
/// are recorded, so autoregressive loops can read intermediate results while
/// the graph is still being built. backward() walks the record once in reverse
/// and accumulates exact analytic gradients.
///
/// A tape and its tensors belong to one thread; independent tapes may run
/// concurrently.
class Tape {
 public:
  struct Value {
    std::size_t id = static_cast<std::size_t>(-1);
    bool valid() const { return id != static_cast<std::size_t>(-1); }
  };

  using BackwardFn = std::function<void(Tape&, std::size_t self)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable input (respects t.requires_grad()).
  Value leaf(Tensor t);
  /// Input that never receives a gradient.
  Value constant(Tensor t);

  const Tensor& val(Value v) const { return nodes_[v.id].val; }
  const Tensor& val_at(std::size_t id) const { return nodes_[id].val; }

  /// Gradient of the last backward() root w.r.t. this node.
  /// Zero tensor if the node was never reached.
  Tensor grad(Value v) const;

  /// Root must be scalar (one element). May be called repeatedly; each call
  /// recomputes gradients from scratch.
  void backward(Value root);

  // Extension point: modules register their own primitives through this.
  Value make_node(Tensor value, const std::vector<Value>& parents, BackwardFn bw);
  Tensor& grad_buffer(std::size_t id);
  bool needs_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  bool needs_grad(Value v) const { return nodes_[v.id].requires_grad; }

  // -- elementwise over equal shapes --------------------------------------
  Value add(Value a, Value b);
  Value sub(Value a, Value b);
  Value mul(Value a, Value b);
  Value div(Value a, Value b);
  Value scale(Value a, double c);
  Value add_scalar(Value a, double c);
  Value neg(Value a) { return scale(a, -1.0); }

  // -- scalar ([1,1]) broadcast --------------------------------------------
  Value mul_by_scalar(Value a, Value s);
  Value div_by_scalar(Value a, Value s);

  // -- linear algebra -------------------------------------------------------
  Value matmul(Value a, Value b);
  Value transpose(Value a);
  /// input [T, Cin], kernel [K, Cin, Cout]; zero padding both ends.
  /// Output rows: (T + 2*padding - K)/stride + 1.
  Value conv1d(Value input, Value kernel, std::size_t stride, std::size_t padding);

  // -- shape ----------------------------------------------------------------
  Value concat(Value a, Value b, int axis);
  Value slice(Value a, int axis, std::size_t start, std::size_t len);
  /// Repeat a [1, C] row n times -> [n, C]. The one sanctioned broadcast.
  Value tile_rows(Value a, std::size_t n);
  Value reshape(Value a, std::vector<std::size_t> shape);

  // -- nonlinearities ---------------------------------------------------------
  Value sigmoid(Value a);
  Value tanh_(Value a);
  Value relu(Value a);
  Value softplus(Value a);
  Value exp_(Value a);
  /// ln(max(x, 1e-12)); zero gradient in the clamped region.
  Value log_(Value a);
  Value softmax(Value a, int axis);

  // -- reductions -------------------------------------------------------------
  Value sum(Value a);                // -> [1,1]
  Value sum_axis(Value a, int axis); // axis 0 -> [1,C], axis 1 -> [R,1]
  Value mean(Value a);               // -> [1,1]

  // -- losses -------------------------------------------------------------------
  /// mean((pred - target)^2) over all elements.
  Value mse(Value pred, Value target);
  /// Numerically stable sigmoid cross-entropy on logits, mean over elements.
  Value bce_with_logits(Value logits, Value targets);

  std::size_t num_nodes() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    bool requires_grad = false;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;

  void check_2d(Value v, const char* who) const;
};

using Value = Tape::Value;

/// y = x @ w + b with b a [1, cols] row broadcast over rows.
Value affine(Tape& t, Value x, Value w, Value b);

}  // namespace melmask::ad
