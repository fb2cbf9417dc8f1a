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

#include <cmath>
#include <functional>
#include <vector>

#include <doctest.h>

#include "melmask/autodiff.hpp"
#include "melmask/gradcheck.hpp"
#include "melmask/rng.hpp"
#include "melmask/tensor.hpp"

namespace {

using melmask::Rng;
using melmask::ad::GradCheckReport;
using melmask::ad::Tape;
using melmask::ad::Tensor;
using melmask::ad::Value;

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Reduces any output to a scalar with uneven weights so every element of the
// output influences the root differently; a plain sum would hide transposed
// or permuted gradients.
Value weighted_sum(Tape& t, Value v) {
  const Tensor& val = t.val(v);
  Tensor w(val.shape());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.25 + 0.5 * static_cast<double>(i % 7);
  return t.sum(t.mul(v, t.constant(w)));
}

double check_unary(const std::function<Value(Tape&, Value)>& op, Tensor input) {
  auto build = [&](Tape& t, const std::vector<Value>& in) {
    return weighted_sum(t, op(t, in[0]));
  };
  return melmask::ad::grad_check(build, {input}).max_rel_err;
}

double check_binary(const std::function<Value(Tape&, Value, Value)>& op, Tensor a, Tensor b) {
  auto build = [&](Tape& t, const std::vector<Value>& in) {
    return weighted_sum(t, op(t, in[0], in[1]));
  };
  return melmask::ad::grad_check(build, {a, b}).max_rel_err;
}

constexpr double kTol = 1e-6;

TEST_SUITE("autodiff") {

TEST_CASE("elementwise op gradients match finite differences") {
  Rng rng(101);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  // Keep divisors away from zero.
  Tensor bpos = random_tensor({3, 4}, rng, 0.5, 1.5);

  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.add(x, y); }, a, b) < kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.sub(x, y); }, a, b) < kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.mul(x, y); }, a, b) < kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.div(x, y); }, a, bpos) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.scale(x, -1.7); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.add_scalar(x, 0.3); }, a) < kTol);
}

TEST_CASE("scalar broadcast op gradients") {
  Rng rng(102);
  Tensor a = random_tensor({2, 5}, rng);
  Tensor s({1, 1}, std::vector<double>{0.8});

  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.mul_by_scalar(x, y); }, a, s) <
        kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.div_by_scalar(x, y); }, a, s) <
        kTol);
}

TEST_CASE("matmul and transpose gradients") {
  Rng rng(103);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({4, 2}, rng);

  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.matmul(x, y); }, a, b) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.transpose(x); }, a) < kTol);
}

TEST_CASE("conv1d gradients across stride and padding") {
  Rng rng(104);
  Tensor input = random_tensor({6, 3}, rng);

  for (std::size_t stride : {std::size_t{1}, std::size_t{2}}) {
    for (std::size_t pad : {std::size_t{0}, std::size_t{2}}) {
      Tensor kernel = random_tensor({5, 3, 2}, rng);
      auto op = [stride, pad](Tape& t, auto x, auto k) {
        return t.conv1d(x, k, stride, pad);
      };
      CHECK(check_binary(op, input, kernel) < kTol);
    }
  }
}

TEST_CASE("shape op gradients") {
  Rng rng(105);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 2}, rng);
  Tensor c = random_tensor({2, 4}, rng);
  Tensor row = random_tensor({1, 4}, rng);

  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.concat(x, y, 1); }, a, b) < kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.concat(x, y, 0); }, a, c) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.slice(x, 1, 1, 2); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.slice(x, 0, 1, 2); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.tile_rows(x, 4); }, row) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.reshape(x, {4, 3}); }, a) < kTol);
}

TEST_CASE("nonlinearity gradients") {
  Rng rng(106);
  Tensor a = random_tensor({3, 4}, rng);
  // relu is not differentiable at 0; keep inputs away from the kink.
  Tensor off_kink(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i)
    off_kink[i] = a[i] + (a[i] >= 0.0 ? 0.2 : -0.2);
  Tensor pos = random_tensor({3, 4}, rng, 0.2, 2.0);

  CHECK(check_unary([](Tape& t, auto x) { return t.sigmoid(x); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.tanh_(x); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.relu(x); }, off_kink) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.softplus(x); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.exp_(x); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.log_(x); }, pos) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.softmax(x, 1); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.softmax(x, 0); }, a) < kTol);
}

TEST_CASE("reduction and loss gradients") {
  Rng rng(107);
  Tensor a = random_tensor({3, 4}, rng);
  Tensor b = random_tensor({3, 4}, rng);
  Tensor logits = random_tensor({3, 1}, rng, -2.0, 2.0);
  Tensor targets({3, 1}, std::vector<double>{0.0, 1.0, 1.0});

  CHECK(check_unary([](Tape& t, auto x) { return t.sum(x); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.sum_axis(x, 0); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.sum_axis(x, 1); }, a) < kTol);
  CHECK(check_unary([](Tape& t, auto x) { return t.mean(x); }, a) < kTol);
  CHECK(check_binary([](Tape& t, auto x, auto y) { return t.mse(x, y); }, a, b) < kTol);

  auto bce = [&](Tape& t, const std::vector<Value>& in) {
    return t.bce_with_logits(in[0], t.constant(targets));
  };
  CHECK(melmask::ad::grad_check(bce, {logits}).max_rel_err < kTol);
}

TEST_CASE("gradients accumulate when a value fans out") {
  // f(x) = sum(x*x + x); df/dx = 2x + 1 exactly.
  Tensor x({2, 2}, std::vector<double>{0.5, -1.0, 2.0, 0.0});
  x.set_requires_grad(true);
  Tape t;
  Value v = t.leaf(x);
  Value root = t.sum(t.add(t.mul(v, v), v));
  t.backward(root);
  Tensor g = t.grad(v);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(g[i] == doctest::Approx(2.0 * x[i] + 1.0).epsilon(1e-12));
  }
}

TEST_CASE("constants receive no gradient and block propagation") {
  Tensor x({1, 2}, std::vector<double>{1.0, 2.0});
  Tape t;
  Value c = t.constant(x);
  Tensor xg = x;
  xg.set_requires_grad(true);
  Value v = t.leaf(xg);
  Value root = t.sum(t.mul(c, v));
  t.backward(root);
  CHECK_FALSE(t.needs_grad(c));
  Tensor g = t.grad(v);
  CHECK(g[0] == doctest::Approx(1.0));
  CHECK(g[1] == doctest::Approx(2.0));
}

TEST_CASE("a leaf that opts out of gradients stays silent") {
  Tensor x({1, 2}, std::vector<double>{1.0, 2.0});  // requires_grad defaults off
  Tape t;
  Value v = t.leaf(x);
  Value root = t.sum(t.mul(v, v));
  t.backward(root);
  CHECK_FALSE(t.needs_grad(v));
  Tensor g = t.grad(v);
  CHECK(g[0] == 0.0);
  CHECK(g[1] == 0.0);
}

TEST_CASE("a broken backward rule is caught by the checker") {
  // Guards the guard: a deliberately wrong gradient (factor 2 dropped from
  // d(x^2)) must produce a large relative error, proving the finite
  // difference harness can actually fail.
  auto build = [](Tape& t, const std::vector<Value>& in) {
    Value x = in[0];
    Tensor v = t.val(x);
    Tensor out(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] * v[i];
    Value sq = t.make_node(out, {x}, [xid = x.id](Tape& tp, std::size_t self) {
      const Tensor& xv = tp.val_at(xid);
      Tensor& gx = tp.grad_buffer(xid);
      const Tensor& gs = tp.grad_buffer(self);
      for (std::size_t i = 0; i < xv.size(); ++i) gx[i] += gs[i] * xv[i];
    });
    return t.sum(sq);
  };
  Tensor x({2, 2}, std::vector<double>{0.7, -0.4, 1.2, 0.9});
  GradCheckReport rep = melmask::ad::grad_check(build, {x});
  INFO(rep.summary());
  CHECK(rep.max_rel_err > 0.1);
}

TEST_CASE("the subset checker samples only the requested inputs") {
  Rng rng(108);
  Tensor a = random_tensor({4, 4}, rng);
  Tensor b = random_tensor({4, 4}, rng);
  auto build = [](Tape& t, const std::vector<Value>& in) {
    return t.sum(t.mul(in[0], in[1]));
  };
  GradCheckReport rep = melmask::ad::grad_check_subset(build, {a, b}, {1}, 1e-5, 8);
  CHECK(rep.n_checked == 8);
  CHECK(rep.max_rel_err < kTol);
  CHECK(rep.worst_input == 1);
}

}  // TEST_SUITE

}  // namespace
