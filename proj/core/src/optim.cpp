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

#include "melmask/optim.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace melmask {

Adam::Adam(ParamStore& store, AdamConfig cfg)
    : store_(store), cfg_(cfg), indices_(store.trainable_indices()) {
  m_.reserve(indices_.size());
  v_.reserve(indices_.size());
  for (std::size_t idx : indices_) {
    m_.push_back(ad::Tensor::zeros(store_.at(idx).shape()));
    v_.push_back(ad::Tensor::zeros(store_.at(idx).shape()));
  }
}

void Adam::step(const std::vector<ad::Tensor>& grads) {
  if (grads.size() != indices_.size())
    throw std::invalid_argument("Adam::step: expected " + std::to_string(indices_.size()) +
                                " gradients, got " + std::to_string(grads.size()));
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < indices_.size(); ++k) {
    ad::Tensor& p = store_.at(indices_[k]);
    const ad::Tensor& g = grads[k];
    if (!p.same_shape(g))
      throw std::invalid_argument("Adam::step: gradient shape mismatch for " +
                                  store_.name_at(indices_[k]));
    ad::Tensor& m = m_[k];
    ad::Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g[i];
      if (!std::isfinite(gi))
        throw std::runtime_error("Adam::step: non-finite gradient in parameter " +
                                 store_.name_at(indices_[k]) + " at element " +
                                 std::to_string(i));
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

}  // namespace melmask
