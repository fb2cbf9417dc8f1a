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

#ifndef MELMASK_GRADCHECK_HPP_
#define MELMASK_GRADCHECK_HPP_

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "melmask/autodiff.hpp"
#include "melmask/tensor.hpp"

namespace melmask::ad {

// Builds a scalar loss on the given tape from leaves created for each input
// tensor (in order). Called several times per element, so keep graphs small.
using GraphBuilder = std::function<Value(Tape&, const std::vector<Value>&)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t n_checked = 0;
  std::size_t worst_input = 0;   // which input tensor held the worst element
  std::size_t worst_index = 0;   // flat index of that element
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;

  bool pass(double tol) const { return n_checked > 0 && max_rel_err <= tol; }
  std::string summary() const;
};

// Central-difference gradient check of `build` with respect to every element
// of every input tensor. Step h, relative error |a - n| / max(|a|, |n|, 1e-3).
GradCheckReport grad_check(const GraphBuilder& build, std::vector<Tensor> inputs,
                           double h = 1e-5);

// Same, but only elements of the inputs listed in `check_inputs` are perturbed
// (the rest still participate in the graph). Useful for large graphs where a
// subsample of parameters keeps the check fast.
GradCheckReport grad_check_subset(const GraphBuilder& build, std::vector<Tensor> inputs,
                                  const std::vector<std::size_t>& check_inputs, double h = 1e-5,
                                  std::size_t max_elems_per_input = 0);

}  // namespace melmask::ad

#endif  // MELMASK_GRADCHECK_HPP_
