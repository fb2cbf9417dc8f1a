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
#include <cstdint>
#include <string>
#include <vector>

#include "melmask/matrix.hpp"
#include "melmask/rng.hpp"

namespace melmask::ad {

/// Dense n-dimensional array of doubles, row-major. Gradients accumulate in
/// f64 throughout; no narrower storage is used on the training path.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, double fill);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double x) { return Tensor({1, 1}, std::vector<double>{x}); }
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor full(std::vector<std::size_t> shape, double x) { return Tensor(std::move(shape), x); }
  /// Uniform in (-bound, bound), element order row-major.
  static Tensor uniform(std::vector<std::size_t> shape, double bound, Rng& rng);
  static Tensor from_matrix(const Matrix& m);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }

  // 2-D accessors; most graph intermediates are matrices.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool b) { requires_grad_ = b; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  bool all_finite() const;
  std::string shape_str() const;

  Matrix to_matrix() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  bool requires_grad_ = false;
};

}  // namespace melmask::ad
