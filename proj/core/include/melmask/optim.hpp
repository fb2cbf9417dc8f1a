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

#ifndef MELMASK_OPTIM_HPP_
#define MELMASK_OPTIM_HPP_

#include <cstddef>
#include <vector>

#include "melmask/params.hpp"
#include "melmask/tensor.hpp"

namespace melmask {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adam with bias correction over the trainable parameters of a ParamStore.
// Gradients are passed per step, aligned with store.trainable_indices().
// A NaN or infinite gradient aborts the run with a diagnostic naming the
// parameter; silently continuing would poison every later step.
class Adam {
 public:
  explicit Adam(ParamStore& store, AdamConfig cfg = {});

  void step(const std::vector<ad::Tensor>& grads);
  std::size_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  ParamStore& store_;
  AdamConfig cfg_;
  std::vector<std::size_t> indices_;
  std::vector<ad::Tensor> m_;
  std::vector<ad::Tensor> v_;
  std::size_t t_ = 0;
};

}  // namespace melmask

#endif  // MELMASK_OPTIM_HPP_
