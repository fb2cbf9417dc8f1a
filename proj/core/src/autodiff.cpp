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

#include "melmask/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace melmask::ad {

namespace {
constexpr double kLogClamp = 1e-12;

double stable_softplus(double x) {
  // log(1 + e^x) without overflow.
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid_scalar(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace

Value Tape::leaf(Tensor t) {
  const bool rg = t.requires_grad();
  nodes_.push_back(Node{std::move(t), rg, nullptr});
  return Value{nodes_.size() - 1};
}

Value Tape::constant(Tensor t) {
  t.set_requires_grad(false);
  nodes_.push_back(Node{std::move(t), false, nullptr});
  return Value{nodes_.size() - 1};
}

Value Tape::make_node(Tensor value, const std::vector<Value>& parents, BackwardFn bw) {
  bool rg = false;
  for (Value p : parents) rg = rg || nodes_[p.id].requires_grad;
  nodes_.push_back(Node{std::move(value), rg, rg ? std::move(bw) : nullptr});
  return Value{nodes_.size() - 1};
}

Tensor& Tape::grad_buffer(std::size_t id) {
  if (grads_.size() < nodes_.size()) grads_.resize(nodes_.size());
  if (grads_[id].size() == 0) grads_[id] = Tensor::zeros(nodes_[id].val.shape());
  return grads_[id];
}

Tensor Tape::grad(Value v) const {
  if (v.id < grads_.size() && grads_[v.id].size() != 0) return grads_[v.id];
  return Tensor::zeros(nodes_[v.id].val.shape());
}

void Tape::backward(Value root) {
  if (nodes_[root.id].val.size() != 1) {
    throw std::invalid_argument("Tape::backward: root must be scalar, got shape " +
                                nodes_[root.id].val.shape_str());
  }
  grads_.assign(nodes_.size(), Tensor());
  if (!nodes_[root.id].requires_grad) return;
  grad_buffer(root.id)[0] = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || !n.backward) continue;
    if (i >= grads_.size() || grads_[i].size() == 0) continue;  // not on a path from root
    n.backward(*this, i);
  }
}

void Tape::check_2d(Value v, const char* who) const {
  if (val(v).rank() != 2) {
    throw std::invalid_argument(std::string(who) + ": expected 2-D tensor, got shape " +
                                val(v).shape_str());
  }
}

// ---------------------------------------------------------------------------
// elementwise

Value Tape::add(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("add: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += tb[i];
  return make_node(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
    }
  });
}

Value Tape::sub(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("sub: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= tb[i];
  return make_node(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

Value Tape::mul(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("mul: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= tb[i];
  return make_node(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& va = t.val_at(a.id);
    const Tensor& vb = t.val_at(b.id);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * vb[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * va[i];
    }
  });
}

Value Tape::div(Value a, Value b) {
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (!ta.same_shape(tb))
    throw std::invalid_argument("div: shape mismatch " + ta.shape_str() + " vs " + tb.shape_str());
  Tensor out = ta;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] /= tb[i];
  return make_node(std::move(out), {a, b}, [a, b](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& va = t.val_at(a.id);
    const Tensor& vb = t.val_at(b.id);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / vb[i];
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i] * va[i] / (vb[i] * vb[i]);
    }
  });
}

Value Tape::scale(Value a, double c) {
  Tensor out = val(a);
  for (double& x : out.data()) x *= c;
  return make_node(std::move(out), {a}, [a, c](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += c * g[i];
    }
  });
}

Value Tape::add_scalar(Value a, double c) {
  Tensor out = val(a);
  for (double& x : out.data()) x += c;
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
  });
}

Value Tape::mul_by_scalar(Value a, Value s) {
  if (val(s).size() != 1)
    throw std::invalid_argument("mul_by_scalar: scalar operand has shape " + val(s).shape_str());
  const double sv = val(s)[0];
  Tensor out = val(a);
  for (double& x : out.data()) x *= sv;
  return make_node(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& va = t.val_at(a.id);
    const double sv = t.val_at(s.id)[0];
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sv;
    }
    if (t.needs_grad(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
      t.grad_buffer(s.id)[0] += acc;
    }
  });
}

Value Tape::div_by_scalar(Value a, Value s) {
  if (val(s).size() != 1)
    throw std::invalid_argument("div_by_scalar: scalar operand has shape " + val(s).shape_str());
  const double sv = val(s)[0];
  Tensor out = val(a);
  for (double& x : out.data()) x /= sv;
  return make_node(std::move(out), {a, s}, [a, s](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    const Tensor& va = t.val_at(a.id);
    const double sv = t.val_at(s.id)[0];
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] / sv;
    }
    if (t.needs_grad(s)) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * va[i];
      t.grad_buffer(s.id)[0] -= acc / (sv * sv);
    }
  });
}

// ---------------------------------------------------------------------------
// linear algebra

Value Tape::matmul(Value a, Value b) {
  check_2d(a, "matmul");
  check_2d(b, "matmul");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  const std::size_t m = ta.rows(), k = ta.cols(), n = tb.cols();
  if (tb.rows() != k)
    throw std::invalid_argument("matmul: inner dimensions " + ta.shape_str() + " vs " +
                                tb.shape_str());
  Tensor out({m, n});
  {
    const double* A = ta.data().data();
    const double* B = tb.data().data();
    double* C = out.data().data();
    for (std::size_t i = 0; i < m; ++i) {
      const double* Ai = A + i * k;
      double* Ci = C + i * n;
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = Ai[p];
        if (aip == 0.0) continue;
        const double* Bp = B + p * n;
        for (std::size_t j = 0; j < n; ++j) Ci[j] += aip * Bp[j];
      }
    }
  }
  return make_node(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::size_t self) {
    const double* G = t.grad_buffer(self).data().data();
    const Tensor& va = t.val_at(a.id);
    const Tensor& vb = t.val_at(b.id);
    if (t.needs_grad(a)) {
      // dA = G * B^T
      double* GA = t.grad_buffer(a.id).data().data();
      const double* B = vb.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* Gi = G + i * n;
        double* GAi = GA + i * k;
        for (std::size_t p = 0; p < k; ++p) {
          const double* Bp = B + p * n;
          double acc = 0.0;
          for (std::size_t j = 0; j < n; ++j) acc += Gi[j] * Bp[j];
          GAi[p] += acc;
        }
      }
    }
    if (t.needs_grad(b)) {
      // dB = A^T * G
      double* GB = t.grad_buffer(b.id).data().data();
      const double* A = va.data().data();
      for (std::size_t i = 0; i < m; ++i) {
        const double* Ai = A + i * k;
        const double* Gi = G + i * n;
        for (std::size_t p = 0; p < k; ++p) {
          const double aip = Ai[p];
          if (aip == 0.0) continue;
          double* GBp = GB + p * n;
          for (std::size_t j = 0; j < n; ++j) GBp[j] += aip * Gi[j];
        }
      }
    }
  });
}

Value Tape::transpose(Value a) {
  check_2d(a, "transpose");
  const Tensor& ta = val(a);
  const std::size_t r = ta.rows(), c = ta.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(j, i) = ta.at(i, j);
  return make_node(std::move(out), {a}, [a, r, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g.at(j, i);
  });
}

Value Tape::conv1d(Value input, Value kernel, std::size_t stride, std::size_t padding) {
  check_2d(input, "conv1d");
  const Tensor& in = val(input);
  const Tensor& ker = val(kernel);
  if (ker.rank() != 3)
    throw std::invalid_argument("conv1d: kernel must be [K, Cin, Cout], got " + ker.shape_str());
  if (stride == 0) throw std::invalid_argument("conv1d: stride must be >= 1");
  const std::size_t T = in.rows(), cin = in.cols();
  const std::size_t K = ker.shape()[0], kc = ker.shape()[1], cout = ker.shape()[2];
  if (kc != cin)
    throw std::invalid_argument("conv1d: input channels " + std::to_string(cin) +
                                " vs kernel " + std::to_string(kc));
  if (T + 2 * padding < K)
    throw std::invalid_argument("conv1d: input too short for kernel");
  const std::size_t tout = (T + 2 * padding - K) / stride + 1;
  Tensor out({tout, cout});
  {
    const double* I = in.data().data();
    const double* W = ker.data().data();
    double* O = out.data().data();
    for (std::size_t t = 0; t < tout; ++t) {
      double* Ot = O + t * cout;
      for (std::size_t k = 0; k < K; ++k) {
        const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(t * stride + k) -
                                   static_cast<std::ptrdiff_t>(padding);
        if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
        const double* It = I + src * cin;
        const double* Wk = W + k * cin * cout;
        for (std::size_t ci = 0; ci < cin; ++ci) {
          const double x = It[ci];
          if (x == 0.0) continue;
          const double* Wc = Wk + ci * cout;
          for (std::size_t co = 0; co < cout; ++co) Ot[co] += x * Wc[co];
        }
      }
    }
  }
  return make_node(std::move(out), {input, kernel},
                   [input, kernel, stride, padding, T, cin, K, cout, tout](Tape& t,
                                                                           std::size_t self) {
                     const double* G = t.grad_buffer(self).data().data();
                     const Tensor& in = t.val_at(input.id);
                     const Tensor& ker = t.val_at(kernel.id);
                     const bool gi = t.needs_grad(input);
                     const bool gk = t.needs_grad(kernel);
                     double* GI = gi ? t.grad_buffer(input.id).data().data() : nullptr;
                     double* GK = gk ? t.grad_buffer(kernel.id).data().data() : nullptr;
                     const double* I = in.data().data();
                     const double* W = ker.data().data();
                     for (std::size_t tt = 0; tt < tout; ++tt) {
                       const double* Gt = G + tt * cout;
                       for (std::size_t k = 0; k < K; ++k) {
                         const std::ptrdiff_t src =
                             static_cast<std::ptrdiff_t>(tt * stride + k) -
                             static_cast<std::ptrdiff_t>(padding);
                         if (src < 0 || src >= static_cast<std::ptrdiff_t>(T)) continue;
                         const double* It = I + src * cin;
                         const double* Wk = W + k * cin * cout;
                         double* GIt = gi ? GI + src * cin : nullptr;
                         double* GKk = gk ? GK + k * cin * cout : nullptr;
                         for (std::size_t ci = 0; ci < cin; ++ci) {
                           const double* Wc = Wk + ci * cout;
                           double acc = 0.0;
                           for (std::size_t co = 0; co < cout; ++co) acc += Gt[co] * Wc[co];
                           if (gi) GIt[ci] += acc;
                           if (gk) {
                             const double x = It[ci];
                             if (x != 0.0) {
                               double* GKc = GKk + ci * cout;
                               for (std::size_t co = 0; co < cout; ++co) GKc[co] += x * Gt[co];
                             }
                           }
                         }
                       }
                     }
                   });
}

// ---------------------------------------------------------------------------
// shape

Value Tape::concat(Value a, Value b, int axis) {
  check_2d(a, "concat");
  check_2d(b, "concat");
  const Tensor& ta = val(a);
  const Tensor& tb = val(b);
  if (axis == 0) {
    if (ta.cols() != tb.cols())
      throw std::invalid_argument("concat axis 0: column mismatch " + ta.shape_str() + " vs " +
                                  tb.shape_str());
    Tensor out({ta.rows() + tb.rows(), ta.cols()});
    std::copy(ta.data().begin(), ta.data().end(), out.data().begin());
    std::copy(tb.data().begin(), tb.data().end(), out.data().begin() + ta.size());
    const std::size_t na = ta.size();
    return make_node(std::move(out), {a, b}, [a, b, na](Tape& t, std::size_t self) {
      const Tensor& g = t.grad_buffer(self);
      if (t.needs_grad(a)) {
        Tensor& ga = t.grad_buffer(a.id);
        for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
      }
      if (t.needs_grad(b)) {
        Tensor& gb = t.grad_buffer(b.id);
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[na + i];
      }
    });
  }
  if (axis != 1) throw std::invalid_argument("concat: axis must be 0 or 1");
  if (ta.rows() != tb.rows())
    throw std::invalid_argument("concat axis 1: row mismatch " + ta.shape_str() + " vs " +
                                tb.shape_str());
  const std::size_t r = ta.rows(), ca = ta.cols(), cb = tb.cols();
  Tensor out({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < ca; ++j) out.at(i, j) = ta.at(i, j);
    for (std::size_t j = 0; j < cb; ++j) out.at(i, ca + j) = tb.at(i, j);
  }
  return make_node(std::move(out), {a, b}, [a, b, r, ca, cb](Tape& t, std::size_t self) {
    const Tensor& g = t.grad_buffer(self);
    if (t.needs_grad(a)) {
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < ca; ++j) ga.at(i, j) += g.at(i, j);
    }
    if (t.needs_grad(b)) {
      Tensor& gb = t.grad_buffer(b.id);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < cb; ++j) gb.at(i, j) += g.at(i, ca + j);
    }
  });
}

Value Tape::slice(Value a, int axis, std::size_t start, std::size_t len) {
  check_2d(a, "slice");
  const Tensor& ta = val(a);
  if (axis == 0) {
    if (start + len > ta.rows()) throw std::invalid_argument("slice axis 0: out of range");
    Tensor out({len, ta.cols()});
    std::copy(ta.data().begin() + start * ta.cols(),
              ta.data().begin() + (start + len) * ta.cols(), out.data().begin());
    const std::size_t off = start * ta.cols();
    return make_node(std::move(out), {a}, [a, off](Tape& t, std::size_t self) {
      if (!t.needs_grad(a)) return;
      const Tensor& g = t.grad_buffer(self);
      Tensor& ga = t.grad_buffer(a.id);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i + off] += g[i];
    });
  }
  if (axis != 1) throw std::invalid_argument("slice: axis must be 0 or 1");
  if (start + len > ta.cols()) throw std::invalid_argument("slice axis 1: out of range");
  const std::size_t r = ta.rows();
  Tensor out({r, len});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < len; ++j) out.at(i, j) = ta.at(i, start + j);
  return make_node(std::move(out), {a}, [a, r, start, len](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < len; ++j) ga.at(i, start + j) += g.at(i, j);
  });
}

Value Tape::tile_rows(Value a, std::size_t n) {
  check_2d(a, "tile_rows");
  const Tensor& ta = val(a);
  if (ta.rows() != 1)
    throw std::invalid_argument("tile_rows: expected [1, C], got " + ta.shape_str());
  const std::size_t c = ta.cols();
  Tensor out({n, c});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) out.at(i, j) = ta[j];
  return make_node(std::move(out), {a}, [a, n, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < c; ++j) ga[j] += g.at(i, j);
  });
}

Value Tape::reshape(Value a, std::vector<std::size_t> shape) {
  const Tensor& ta = val(a);
  Tensor out(std::move(shape), ta.data());
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

// ---------------------------------------------------------------------------
// nonlinearities

Value Tape::sigmoid(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = sigmoid_scalar(x);
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.val_at(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1.0 - y[i]);
  });
}

Value Tape::tanh_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = std::tanh(x);
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.val_at(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * (1.0 - y[i] * y[i]);
  });
}

Value Tape::relu(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = x > 0.0 ? x : 0.0;
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& x = t.val_at(a.id);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > 0.0) ga[i] += g[i];
  });
}

Value Tape::softplus(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = stable_softplus(x);
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& x = t.val_at(a.id);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * sigmoid_scalar(x[i]);
  });
}

Value Tape::exp_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = std::exp(x);
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.val_at(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
  });
}

Value Tape::log_(Value a) {
  Tensor out = val(a);
  for (double& x : out.data()) x = std::log(std::max(x, kLogClamp));
  return make_node(std::move(out), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& x = t.val_at(a.id);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < g.size(); ++i)
      if (x[i] > kLogClamp) ga[i] += g[i] / x[i];
  });
}

Value Tape::softmax(Value a, int axis) {
  check_2d(a, "softmax");
  if (axis != 0 && axis != 1) throw std::invalid_argument("softmax: axis must be 0 or 1");
  const Tensor& ta = val(a);
  const std::size_t r = ta.rows(), c = ta.cols();
  Tensor out({r, c});
  const std::size_t lanes = axis == 1 ? r : c;
  const std::size_t span = axis == 1 ? c : r;
  auto idx = [&](std::size_t lane, std::size_t k) {
    return axis == 1 ? lane * c + k : k * c + lane;
  };
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    double mx = ta[idx(lane, 0)];
    for (std::size_t k = 1; k < span; ++k) mx = std::max(mx, ta[idx(lane, k)]);
    double z = 0.0;
    for (std::size_t k = 0; k < span; ++k) z += std::exp(ta[idx(lane, k)] - mx);
    for (std::size_t k = 0; k < span; ++k) out[idx(lane, k)] = std::exp(ta[idx(lane, k)] - mx) / z;
  }
  return make_node(std::move(out), {a}, [a, axis, r, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    const Tensor& y = t.val_at(self);
    Tensor& ga = t.grad_buffer(a.id);
    const std::size_t lanes = axis == 1 ? r : c;
    const std::size_t span = axis == 1 ? c : r;
    auto idx = [&](std::size_t lane, std::size_t k) {
      return axis == 1 ? lane * c + k : k * c + lane;
    };
    for (std::size_t lane = 0; lane < lanes; ++lane) {
      double dot = 0.0;
      for (std::size_t k = 0; k < span; ++k) dot += g[idx(lane, k)] * y[idx(lane, k)];
      for (std::size_t k = 0; k < span; ++k) {
        const std::size_t i = idx(lane, k);
        ga[i] += y[i] * (g[i] - dot);
      }
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Value Tape::sum(Value a) {
  const Tensor& ta = val(a);
  double acc = 0.0;
  for (double x : ta.data()) acc += x;
  return make_node(Tensor::scalar(acc), {a}, [a](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const double g = t.grad_buffer(self)[0];
    Tensor& ga = t.grad_buffer(a.id);
    for (double& x : ga.data()) x += g;
  });
}

Value Tape::sum_axis(Value a, int axis) {
  check_2d(a, "sum_axis");
  if (axis != 0 && axis != 1) throw std::invalid_argument("sum_axis: axis must be 0 or 1");
  const Tensor& ta = val(a);
  const std::size_t r = ta.rows(), c = ta.cols();
  Tensor out(axis == 0 ? std::vector<std::size_t>{1, c} : std::vector<std::size_t>{r, 1});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[axis == 0 ? j : i] += ta.at(i, j);
  return make_node(std::move(out), {a}, [a, axis, r, c](Tape& t, std::size_t self) {
    if (!t.needs_grad(a)) return;
    const Tensor& g = t.grad_buffer(self);
    Tensor& ga = t.grad_buffer(a.id);
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) ga.at(i, j) += g[axis == 0 ? j : i];
  });
}

Value Tape::mean(Value a) {
  const std::size_t n = val(a).size();
  Value s = sum(a);
  return scale(s, 1.0 / static_cast<double>(n));
}

// ---------------------------------------------------------------------------
// losses

Value Tape::mse(Value pred, Value target) {
  const Tensor& tp = val(pred);
  const Tensor& tt = val(target);
  if (!tp.same_shape(tt))
    throw std::invalid_argument("mse: shape mismatch " + tp.shape_str() + " vs " + tt.shape_str());
  const std::size_t n = tp.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = tp[i] - tt[i];
    acc += d * d;
  }
  return make_node(Tensor::scalar(acc / static_cast<double>(n)), {pred, target},
                   [pred, target, n](Tape& t, std::size_t self) {
                     const double g = t.grad_buffer(self)[0] * 2.0 / static_cast<double>(n);
                     const Tensor& tp = t.val_at(pred.id);
                     const Tensor& tt = t.val_at(target.id);
                     if (t.needs_grad(pred)) {
                       Tensor& gp = t.grad_buffer(pred.id);
                       for (std::size_t i = 0; i < n; ++i) gp[i] += g * (tp[i] - tt[i]);
                     }
                     if (t.needs_grad(target)) {
                       Tensor& gt = t.grad_buffer(target.id);
                       for (std::size_t i = 0; i < n; ++i) gt[i] -= g * (tp[i] - tt[i]);
                     }
                   });
}

Value Tape::bce_with_logits(Value logits, Value targets) {
  const Tensor& tx = val(logits);
  const Tensor& tt = val(targets);
  if (!tx.same_shape(tt))
    throw std::invalid_argument("bce_with_logits: shape mismatch " + tx.shape_str() + " vs " +
                                tt.shape_str());
  const std::size_t n = tx.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double x = tx[i];
    acc += std::max(x, 0.0) - x * tt[i] + std::log1p(std::exp(-std::abs(x)));
  }
  return make_node(Tensor::scalar(acc / static_cast<double>(n)), {logits, targets},
                   [logits, targets, n](Tape& t, std::size_t self) {
                     const double g = t.grad_buffer(self)[0] / static_cast<double>(n);
                     const Tensor& tx = t.val_at(logits.id);
                     const Tensor& tt = t.val_at(targets.id);
                     if (t.needs_grad(logits)) {
                       Tensor& gx = t.grad_buffer(logits.id);
                       for (std::size_t i = 0; i < n; ++i)
                         gx[i] += g * (sigmoid_scalar(tx[i]) - tt[i]);
                     }
                     if (t.needs_grad(targets)) {
                       Tensor& gt = t.grad_buffer(targets.id);
                       for (std::size_t i = 0; i < n; ++i) gt[i] -= g * tx[i];
                     }
                   });
}

Value affine(Tape& t, Value x, Value w, Value b) {
  Value y = t.matmul(x, w);
  const std::size_t rows = t.val(y).rows();
  if (rows == 1) return t.add(y, b);
  return t.add(y, t.tile_rows(b, rows));
}

}  // namespace melmask::ad
