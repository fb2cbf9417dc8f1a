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

#include "melmask/enhancer.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>

#include "melmask/config.hpp"
#include "melmask/optim.hpp"

namespace melmask::enhancer {

ad::Value dfsmn_memory(ad::Tape& tape, ad::Value h, ad::Value a, ad::Value c, std::size_t s1,
                       std::size_t s2) {
  const ad::Tensor& th = tape.val(h);
  const ad::Tensor& ta = tape.val(a);
  const ad::Tensor& tc = tape.val(c);
  if (th.rank() != 2 || ta.rank() != 2 || tc.rank() != 2)
    throw std::invalid_argument("dfsmn_memory: expected 2-D operands");
  const std::size_t T = th.rows(), C = th.cols();
  if (ta.cols() != C || (tc.size() > 0 && tc.cols() != C))
    throw std::invalid_argument("dfsmn_memory: channel mismatch");
  if (s1 < 1 || s2 < 1) throw std::invalid_argument("dfsmn_memory: strides must be >= 1");
  const std::size_t n_back = ta.rows();   // N1 + 1 taps, a_0 at offset 0
  const std::size_t n_ahead = tc.rows();  // N2 taps, c_1 at offset s2

  ad::Tensor out = th;
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t i = 0; i < n_back; ++i) {
      if (t < i * s1) break;
      const std::size_t src = t - i * s1;
      for (std::size_t ch = 0; ch < C; ++ch)
        out.at(t, ch) += ta.at(i, ch) * th.at(src, ch);
    }
    for (std::size_t j = 1; j <= n_ahead; ++j) {
      const std::size_t src = t + j * s2;
      if (src >= T) break;
      for (std::size_t ch = 0; ch < C; ++ch)
        out.at(t, ch) += tc.at(j - 1, ch) * th.at(src, ch);
    }
  }

  return tape.make_node(
      std::move(out), {h, a, c},
      [h, a, c, s1, s2, T, C, n_back, n_ahead](ad::Tape& tp, std::size_t self) {
        const ad::Tensor& g = tp.grad_buffer(self);
        const ad::Tensor& th = tp.val_at(h.id);
        const ad::Tensor& ta = tp.val_at(a.id);
        const ad::Tensor& tc = tp.val_at(c.id);
        const bool gh = tp.needs_grad(h);
        const bool ga = tp.needs_grad(a);
        const bool gc = tp.needs_grad(c);
        ad::Tensor* gradh = gh ? &tp.grad_buffer(h.id) : nullptr;
        ad::Tensor* grada = ga ? &tp.grad_buffer(a.id) : nullptr;
        ad::Tensor* gradc = gc ? &tp.grad_buffer(c.id) : nullptr;
        for (std::size_t t = 0; t < T; ++t) {
          if (gh)
            for (std::size_t ch = 0; ch < C; ++ch) gradh->at(t, ch) += g.at(t, ch);
          for (std::size_t i = 0; i < n_back; ++i) {
            if (t < i * s1) break;
            const std::size_t src = t - i * s1;
            for (std::size_t ch = 0; ch < C; ++ch) {
              if (gh) gradh->at(src, ch) += g.at(t, ch) * ta.at(i, ch);
              if (ga) grada->at(i, ch) += g.at(t, ch) * th.at(src, ch);
            }
          }
          for (std::size_t j = 1; j <= n_ahead; ++j) {
            const std::size_t src = t + j * s2;
            if (src >= T) break;
            for (std::size_t ch = 0; ch < C; ++ch) {
              if (gh) gradh->at(src, ch) += g.at(t, ch) * tc.at(j - 1, ch);
              if (gc) gradc->at(j - 1, ch) += g.at(t, ch) * th.at(src, ch);
            }
          }
        }
      });
}

namespace {

enum class ParamKind { weight, bias, memory };

// One place defines the parameter layout; init and checkpoint verification
// both walk it.
template <typename F>
void for_each_enhancer_param(const EnhancerConfig& cfg, F&& fn) {
  std::size_t in_ch = cfg.n_mels;
  for (std::size_t l = 0; l < cfg.conv_layers; ++l) {
    const std::string base = "conv" + std::to_string(l);
    fn(base + ".w", std::vector<std::size_t>{cfg.conv_kernel, in_ch, cfg.conv_channels},
       ParamKind::weight);
    fn(base + ".b", std::vector<std::size_t>{1, cfg.conv_channels}, ParamKind::bias);
    in_ch = cfg.conv_channels;
  }
  for (std::size_t l = 0; l < cfg.dfsmn_layers; ++l) {
    const std::string base = "dfsmn" + std::to_string(l);
    fn(base + ".in.w", std::vector<std::size_t>{in_ch, cfg.dfsmn_channels}, ParamKind::weight);
    fn(base + ".in.b", std::vector<std::size_t>{1, cfg.dfsmn_channels}, ParamKind::bias);
    fn(base + ".a", std::vector<std::size_t>{cfg.lookback + 1, cfg.dfsmn_channels},
       ParamKind::memory);
    fn(base + ".c", std::vector<std::size_t>{cfg.lookahead, cfg.dfsmn_channels},
       ParamKind::memory);
    fn(base + ".out.w", std::vector<std::size_t>{cfg.dfsmn_channels, cfg.dfsmn_channels},
       ParamKind::weight);
    fn(base + ".out.b", std::vector<std::size_t>{1, cfg.dfsmn_channels}, ParamKind::bias);
    in_ch = cfg.dfsmn_channels;
  }
  fn("head.w", std::vector<std::size_t>{in_ch, cfg.n_mels}, ParamKind::weight);
  fn("head.b", std::vector<std::size_t>{1, cfg.n_mels}, ParamKind::bias);
}

void validate_config(const EnhancerConfig& cfg) {
  if (cfg.n_mels == 0 || cfg.conv_channels == 0 || cfg.dfsmn_channels == 0)
    throw std::invalid_argument("enhancer config: zero width");
  if (cfg.conv_kernel % 2 == 0)
    throw std::invalid_argument("enhancer config: conv kernel must be odd to preserve length");
  if (cfg.stride1 < 1 || cfg.stride2 < 1)
    throw std::invalid_argument("enhancer config: strides must be >= 1");
}

}  // namespace

EnhancerModel::EnhancerModel(const EnhancerConfig& cfg, Rng& rng) : cfg_(cfg) {
  validate_config(cfg_);
  for_each_enhancer_param(cfg_, [this, &rng](const std::string& name,
                                             const std::vector<std::size_t>& shape,
                                             ParamKind kind) {
    if (kind == ParamKind::weight) {
      std::size_t fan_in = 1;
      for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      params_.create(name, ad::Tensor::uniform(shape, bound, rng));
    } else {
      // Biases and memory taps start at zero; the memory block is then the
      // identity and training opens the temporal context as needed.
      params_.create(name, ad::Tensor::zeros(shape));
    }
  });
}

EnhancerModel::EnhancerModel(EnhancerConfig cfg, ParamStore store)
    : cfg_(cfg), params_(std::move(store)) {
  validate_config(cfg_);
  for_each_enhancer_param(cfg_, [this](const std::string& name,
                                       const std::vector<std::size_t>& shape, ParamKind) {
    if (!params_.has(name))
      throw std::runtime_error("enhancer checkpoint: missing parameter " + name);
    if (params_.get(name).shape() != shape)
      throw std::runtime_error("enhancer checkpoint: shape mismatch for " + name);
  });
}

ad::Value EnhancerModel::predict_mask(ad::Tape& tape, const TapeBinding& p,
                                      const Matrix& log_mel) const {
  if (log_mel.cols != cfg_.n_mels)
    throw std::invalid_argument("predict_mask: expected " + std::to_string(cfg_.n_mels) +
                                " mel channels, got " + std::to_string(log_mel.cols));
  if (log_mel.rows == 0) throw std::invalid_argument("predict_mask: empty input");
  const std::size_t T = log_mel.rows;
  const std::size_t pad = (cfg_.conv_kernel - 1) / 2;

  ad::Value x = tape.constant(ad::Tensor::from_matrix(log_mel));
  for (std::size_t l = 0; l < cfg_.conv_layers; ++l) {
    const std::string base = "conv" + std::to_string(l);
    ad::Value y = tape.conv1d(x, p[base + ".w"], 1, pad);
    y = tape.add(y, tape.tile_rows(p[base + ".b"], T));
    x = tape.relu(y);
  }
  std::size_t in_ch = cfg_.conv_layers > 0 ? cfg_.conv_channels : cfg_.n_mels;
  for (std::size_t l = 0; l < cfg_.dfsmn_layers; ++l) {
    const std::string base = "dfsmn" + std::to_string(l);
    ad::Value h = tape.relu(affine(tape, x, p[base + ".in.w"], p[base + ".in.b"]));
    ad::Value mem = dfsmn_memory(tape, h, p[base + ".a"], p[base + ".c"], cfg_.stride1,
                                 cfg_.stride2);
    ad::Value y = affine(tape, mem, p[base + ".out.w"], p[base + ".out.b"]);
    x = in_ch == cfg_.dfsmn_channels ? tape.add(y, x) : y;
    in_ch = cfg_.dfsmn_channels;
  }
  return tape.sigmoid(affine(tape, x, p["head.w"], p["head.b"]));
}

void EnhancerModel::save(const std::string& path,
                         const std::map<std::string, std::string>& extra_meta) const {
  ParamStore out = params_;
  out.set_meta("model", "enhancer");
  out.set_meta("config", enhancer_config_to_json(cfg_));
  for (const auto& [k, v] : extra_meta) out.set_meta(k, v);
  out.save(path);
}

EnhancerModel EnhancerModel::load(const std::string& path) {
  ParamStore store = ParamStore::load(path);
  if (store.meta("model") != "enhancer")
    throw std::runtime_error("not an enhancer checkpoint: " + path);
  const EnhancerConfig cfg = enhancer_config_from_json(store.meta("config"));
  return EnhancerModel(cfg, std::move(store));
}

mask::DenoiseMask enhance(const EnhancerModel& model, const dsp::MelSpectrogram& noisy_mel) {
  const dsp::MelSpectrogram features =
      dsp::log_compress(noisy_mel, model.config().log_floor);
  ad::Tape tape;
  TapeBinding p(tape, model.params(), /*trainable=*/false);
  const ad::Value out = model.predict_mask(tape, p, features.bins);
  mask::DenoiseMask m;
  m.kind = mask::MaskKind::predicted;
  m.values = tape.val(out).to_matrix();
  return m;
}

EnhancerTrainResult train_enhancer(EnhancerModel& model, const std::vector<MelPair>& dataset,
                                   std::size_t steps, std::size_t batch_size, double lr,
                                   Rng& rng) {
  if (dataset.empty()) throw std::invalid_argument("train_enhancer: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_enhancer: zero batch size");
  for (const MelPair& pair : dataset)
    require_same_shape(pair.first.bins, pair.second.bins, "train_enhancer");

  AdamConfig opt_cfg;
  opt_cfg.lr = lr;
  Adam opt(model.params(), opt_cfg);

  std::vector<std::size_t> perm(dataset.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t cursor = perm.size();  // forces a shuffle on first use

  EnhancerTrainResult result;
  result.loss_curve.reserve(steps);
  const double log_floor = model.config().log_floor;

  for (std::size_t step = 0; step < steps; ++step) {
    ad::Tape tape;
    TapeBinding p(tape, model.params(), /*trainable=*/true);
    ad::Value batch_loss{};
    bool have_loss = false;
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor >= perm.size()) {
        for (std::size_t i = perm.size(); i > 1; --i)
          std::swap(perm[i - 1], perm[rng.below(i)]);
        cursor = 0;
      }
      const MelPair& pair = dataset[perm[cursor++]];
      const dsp::MelSpectrogram features = dsp::log_compress(pair.first, log_floor);
      const ad::Value mask_pred = model.predict_mask(tape, p, features.bins);
      const ad::Value noisy = tape.constant(ad::Tensor::from_matrix(pair.first.bins));
      const ad::Value clean = tape.constant(ad::Tensor::from_matrix(pair.second.bins));
      const ad::Value loss = tape.mse(tape.mul(mask_pred, noisy), clean);
      batch_loss = have_loss ? tape.add(batch_loss, loss) : loss;
      have_loss = true;
    }
    batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(batch_size));
    const double loss_now = tape.val(batch_loss)[0];
    if (!std::isfinite(loss_now))
      throw std::runtime_error("train_enhancer: non-finite loss at step " +
                               std::to_string(step));
    result.loss_curve.push_back(loss_now);
    tape.backward(batch_loss);
    opt.step(p.grads(tape));
  }
  return result;
}

}  // namespace melmask::enhancer
