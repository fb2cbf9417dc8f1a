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

#include "melmask/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace melmask::ad {

namespace {

double eval_loss(const GraphBuilder& build, const std::vector<Tensor>& inputs) {
  Tape tape;
  std::vector<Value> leaves;
  leaves.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    Tensor leaf = t;
    leaf.set_requires_grad(true);
    leaves.push_back(tape.leaf(std::move(leaf)));
  }
  Value root = build(tape, leaves);
  if (tape.val(root).size() != 1)
    throw std::invalid_argument("grad_check: builder must return a scalar");
  return tape.val(root)[0];
}

}  // namespace

std::string GradCheckReport::summary() const {
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "checked %zu elems, max_rel_err %.3e (input %zu idx %zu: analytic %.6e numeric %.6e)",
                n_checked, max_rel_err, worst_input, worst_index, worst_analytic, worst_numeric);
  return std::string(buf);
}

GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor> inputs, double h) {
  std::vector<std::size_t> all(inputs.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return grad_check_subset(build, std::move(inputs), all, h, 0);
}

GradCheckReport grad_check_subset(const GraphBuilder& build, std::vector<Tensor> inputs,
                                  const std::vector<std::size_t>& check_inputs, double h,
                                  std::size_t max_elems_per_input) {
  // Analytic gradients from one reverse pass.
  std::vector<Tensor> analytic;
  {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) {
      Tensor leaf = t;
      leaf.set_requires_grad(true);
      leaves.push_back(tape.leaf(std::move(leaf)));
    }
    Value root = build(tape, leaves);
    if (tape.val(root).size() != 1)
      throw std::invalid_argument("grad_check: builder must return a scalar");
    tape.backward(root);
    analytic.reserve(leaves.size());
    for (Value v : leaves) analytic.push_back(tape.grad(v));
  }

  GradCheckReport rep;
  for (std::size_t which : check_inputs) {
    if (which >= inputs.size()) throw std::invalid_argument("grad_check: input index out of range");
    Tensor& x = inputs[which];
    std::size_t n = x.size();
    std::size_t step = 1;
    if (max_elems_per_input > 0 && n > max_elems_per_input) {
      step = (n + max_elems_per_input - 1) / max_elems_per_input;
    }
    for (std::size_t i = 0; i < n; i += step) {
      const double orig = x[i];
      x[i] = orig + h;
      const double fp = eval_loss(build, inputs);
      x[i] = orig - h;
      const double fm = eval_loss(build, inputs);
      x[i] = orig;
      const double numeric = (fp - fm) / (2.0 * h);
      const double a = analytic[which][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      const double rel = std::abs(a - numeric) / denom;
      ++rep.n_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_input = which;
        rep.worst_index = i;
        rep.worst_analytic = a;
        rep.worst_numeric = numeric;
      }
    }
  }
  return rep;
}

}  // namespace melmask::ad
