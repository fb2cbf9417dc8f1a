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

#include "melmask/tts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "melmask/config.hpp"
#include "melmask/optim.hpp"

namespace melmask::tts {

namespace {

// Silence value in log-mel space; also the decoder go-frame.
const double kGoFrame = std::log(dsp::kLogFloor);

double softplus_inverse(double y) { return std::log(std::expm1(y)); }

// Row gather as one tape node: out[j] = table[ids[j]].
ad::Value gather_rows(ad::Tape& tape, ad::Value table, const std::vector<std::size_t>& ids) {
  const ad::Tensor& tt = tape.val(table);
  const std::size_t rows = tt.rows(), cols = tt.cols();
  for (std::size_t id : ids)
    if (id >= rows) throw std::invalid_argument("gather_rows: id out of range");
  ad::Tensor out({ids.size(), cols});
  for (std::size_t j = 0; j < ids.size(); ++j)
    for (std::size_t c = 0; c < cols; ++c) out.at(j, c) = tt.at(ids[j], c);
  return tape.make_node(std::move(out), {table},
                        [table, ids, cols](ad::Tape& tp, std::size_t self) {
                          if (!tp.needs_grad(table)) return;
                          const ad::Tensor& g = tp.grad_buffer(self);
                          ad::Tensor& gt = tp.grad_buffer(table.id);
                          for (std::size_t j = 0; j < ids.size(); ++j)
                            for (std::size_t c = 0; c < cols; ++c)
                              gt.at(ids[j], c) += g.at(j, c);
                        });
}

struct GruValues {
  ad::Value xz, hz, bz, xr, hr, br, xn, hn, bn;
};

GruValues bind_gru(const TapeBinding& p, const std::string& prefix) {
  return GruValues{p[prefix + ".xz.w"], p[prefix + ".hz.w"], p[prefix + ".z.b"],
                   p[prefix + ".xr.w"], p[prefix + ".hr.w"], p[prefix + ".r.b"],
                   p[prefix + ".xn.w"], p[prefix + ".hn.w"], p[prefix + ".n.b"]};
}

// Standard GRU cell on [1, dim] rows:
// z = sig(xWxz + hWhz + bz), r = sig(xWxr + hWhr + br),
// n = tanh(xWxn + r ⊙ (hWhn) + bn), h' = (1-z) ⊙ n + z ⊙ h.
ad::Value gru_cell(ad::Tape& t, const GruValues& g, ad::Value x, ad::Value h) {
  ad::Value z = t.sigmoid(t.add(t.add(t.matmul(x, g.xz), t.matmul(h, g.hz)), g.bz));
  ad::Value r = t.sigmoid(t.add(t.add(t.matmul(x, g.xr), t.matmul(h, g.hr)), g.br));
  ad::Value n =
      t.tanh_(t.add(t.add(t.matmul(x, g.xn), t.mul(r, t.matmul(h, g.hn))), g.bn));
  ad::Value one_minus_z = t.add_scalar(t.scale(z, -1.0), 1.0);
  return t.add(t.mul(one_minus_z, n), t.mul(z, h));
}

enum class ParamKind { weight, bias };

template <typename F>
void add_gru_params(const std::string& prefix, std::size_t in_dim, std::size_t hidden, F&& fn) {
  for (const char* gate : {"z", "r", "n"}) {
    fn(prefix + ".x" + gate + ".w", std::vector<std::size_t>{in_dim, hidden}, ParamKind::weight);
    fn(prefix + ".h" + gate + ".w", std::vector<std::size_t>{hidden, hidden}, ParamKind::weight);
    fn(prefix + "." + gate + ".b", std::vector<std::size_t>{1, hidden}, ParamKind::bias);
  }
}

template <typename F>
void for_each_tts_param(const TtsConfig& cfg, F&& fn) {
  const std::size_t W = cfg.highway_width();
  const std::size_t E = cfg.encoder_out_dim();
  fn("embed", std::vector<std::size_t>{cfg.vocab, cfg.embed_dim}, ParamKind::weight);
  fn("enc.prenet.w", std::vector<std::size_t>{cfg.embed_dim, cfg.enc_prenet_dim},
     ParamKind::weight);
  fn("enc.prenet.b", std::vector<std::size_t>{1, cfg.enc_prenet_dim}, ParamKind::bias);
  fn("enc.condA.w", std::vector<std::size_t>{cfg.spk_dim, cfg.cond_dim}, ParamKind::weight);
  fn("enc.condA.b", std::vector<std::size_t>{1, cfg.cond_dim}, ParamKind::bias);
  fn("enc.condB.w", std::vector<std::size_t>{cfg.spk_dim, cfg.enc_gru_dim}, ParamKind::weight);
  fn("enc.condB.b", std::vector<std::size_t>{1, cfg.enc_gru_dim}, ParamKind::bias);
  for (std::size_t l = 0; l < cfg.highway_layers; ++l) {
    const std::string base = "enc.hw" + std::to_string(l);
    fn(base + ".h.w", std::vector<std::size_t>{W, W}, ParamKind::weight);
    fn(base + ".h.b", std::vector<std::size_t>{1, W}, ParamKind::bias);
    fn(base + ".t.w", std::vector<std::size_t>{W, W}, ParamKind::weight);
    fn(base + ".t.b", std::vector<std::size_t>{1, W}, ParamKind::bias);
  }
  add_gru_params("enc.gruf", W, cfg.enc_gru_dim, fn);
  add_gru_params("enc.grub", W, cfg.enc_gru_dim, fn);

  fn("dec.prenet1.w", std::vector<std::size_t>{cfg.n_mels, cfg.dec_prenet1}, ParamKind::weight);
  fn("dec.prenet1.b", std::vector<std::size_t>{1, cfg.dec_prenet1}, ParamKind::bias);
  fn("dec.prenet2.w", std::vector<std::size_t>{cfg.dec_prenet1, cfg.dec_prenet2},
     ParamKind::weight);
  fn("dec.prenet2.b", std::vector<std::size_t>{1, cfg.dec_prenet2}, ParamKind::bias);
  add_gru_params("dec.att", cfg.dec_prenet2 + E, cfg.att_rnn_dim, fn);
  fn("att.head.w", std::vector<std::size_t>{cfg.att_rnn_dim, 3 * cfg.gmm_mixtures},
     ParamKind::weight);
  fn("att.head.b", std::vector<std::size_t>{1, 3 * cfg.gmm_mixtures}, ParamKind::bias);
  add_gru_params("dec.rnn", cfg.att_rnn_dim + E, cfg.dec_rnn_dim, fn);
  fn("dec.proj.w",
     std::vector<std::size_t>{cfg.dec_rnn_dim + E, cfg.reduction * cfg.n_mels},
     ParamKind::weight);
  fn("dec.proj.b", std::vector<std::size_t>{1, cfg.reduction * cfg.n_mels}, ParamKind::bias);
  fn("dec.stop.w", std::vector<std::size_t>{cfg.dec_rnn_dim + E, 1}, ParamKind::weight);
  fn("dec.stop.b", std::vector<std::size_t>{1, 1}, ParamKind::bias);

  const std::size_t post_in = cfg.condition_postnet ? 2 * cfg.n_mels : cfg.n_mels;
  fn("post.conv0.w",
     std::vector<std::size_t>{cfg.postnet_kernel, post_in, cfg.postnet_channels},
     ParamKind::weight);
  fn("post.conv0.b", std::vector<std::size_t>{1, cfg.postnet_channels}, ParamKind::bias);
  fn("post.conv1.w",
     std::vector<std::size_t>{cfg.postnet_kernel, cfg.postnet_channels, cfg.n_mels},
     ParamKind::weight);
  fn("post.conv1.b", std::vector<std::size_t>{1, cfg.n_mels}, ParamKind::bias);
}

void validate_config(const TtsConfig& cfg) {
  if (cfg.n_mels == 0 || cfg.vocab == 0 || cfg.embed_dim == 0 || cfg.spk_dim == 0)
    throw std::invalid_argument("tts config: zero width");
  if (cfg.reduction == 0) throw std::invalid_argument("tts config: reduction must be >= 1");
  if (cfg.gmm_mixtures == 0) throw std::invalid_argument("tts config: need >= 1 mixture");
  if (cfg.postnet_kernel % 2 == 0)
    throw std::invalid_argument("tts config: Post-Net kernel must be odd");
  if (cfg.max_frames < cfg.reduction)
    throw std::invalid_argument("tts config: max_frames below one decoder step");
}

}  // namespace

Matrix truncate_rows(const Matrix& m, std::size_t rows) {
  if (rows > m.rows) throw std::invalid_argument("truncate_rows: fewer rows than requested");
  Matrix out(rows, m.cols);
  std::copy(m.v.begin(), m.v.begin() + static_cast<std::ptrdiff_t>(rows * m.cols),
            out.v.begin());
  return out;
}

GmmStep gmm_attention_step(ad::Tape& t, ad::Value query, ad::Value kappa_prev, ad::Value head_w,
                           ad::Value head_b, std::size_t mixtures, std::size_t n_positions) {
  if (n_positions == 0) throw std::invalid_argument("gmm_attention_step: empty encoder state");
  const std::size_t K = mixtures;
  ad::Value raw_params = affine(t, query, head_w, head_b);  // [1, 3K] = (dw | dk | ds)
  ad::Value dw = t.slice(raw_params, 1, 0, K);
  ad::Value dk = t.slice(raw_params, 1, K, K);
  ad::Value ds = t.slice(raw_params, 1, 2 * K, K);

  ad::Value w = t.softmax(dw, 1);
  ad::Value kappa = t.add(kappa_prev, t.softplus(dk));
  ad::Value sigma = t.add_scalar(t.softplus(ds), 1e-3);

  Matrix pos(n_positions, 1);
  for (std::size_t j = 0; j < n_positions; ++j) pos.at(j, 0) = static_cast<double>(j);
  ad::Value pos_col = t.constant(ad::Tensor::from_matrix(pos));
  ad::Value ones_row = t.constant(ad::Tensor({1, K}, 1.0));
  ad::Value pos_grid = t.matmul(pos_col, ones_row);  // [J, K]

  ad::Value kap_grid = t.tile_rows(kappa, n_positions);
  ad::Value diff = t.sub(pos_grid, kap_grid);
  ad::Value d2 = t.mul(diff, diff);
  ad::Value sig_grid = t.tile_rows(sigma, n_positions);
  ad::Value two_var = t.scale(t.mul(sig_grid, sig_grid), 2.0);
  ad::Value gauss = t.exp_(t.scale(t.div(d2, two_var), -1.0));
  ad::Value contrib = t.mul(t.tile_rows(w, n_positions), gauss);
  // The 1e-12 floor keeps the normalization away from 0/0 when every mixture
  // sits far from every position (early training); rows still sum to 1.
  ad::Value raw = t.add_scalar(t.sum_axis(contrib, 1), 1e-12);  // [J, 1]
  ad::Value total = t.sum(raw);
  GmmStep out;
  out.weights = t.div_by_scalar(raw, total);
  out.kappa = kappa;
  return out;
}

TtsModel::TtsModel(const TtsConfig& cfg, Rng& rng) : cfg_(cfg) {
  validate_config(cfg_);
  for_each_tts_param(cfg_, [this, &rng](const std::string& name,
                                        const std::vector<std::size_t>& shape, ParamKind kind) {
    if (kind == ParamKind::weight) {
      std::size_t fan_in = 1;
      for (std::size_t i = 0; i + 1 < shape.size(); ++i) fan_in *= shape[i];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      params_.create(name, ad::Tensor::uniform(shape, bound, rng));
    } else {
      params_.create(name, ad::Tensor::zeros(shape));
    }
  });
  // The kappa-advance bias makes attention move ~kappa_init_advance encoder
  // positions per step from the start, which keeps early alignments usable.
  ad::Tensor& head_b = params_.get("att.head.b");
  const double adv = softplus_inverse(cfg_.kappa_init_advance);
  for (std::size_t k = 0; k < cfg_.gmm_mixtures; ++k) head_b[cfg_.gmm_mixtures + k] = adv;
  // Frame projection starts at log-mel silence; stop head starts biased
  // toward "keep going".
  ad::Tensor& proj_b = params_.get("dec.proj.b");
  for (std::size_t i = 0; i < proj_b.size(); ++i) proj_b[i] = kGoFrame;
  params_.get("dec.stop.b")[0] = -2.0;
}

TtsModel::TtsModel(TtsConfig cfg, ParamStore store) : cfg_(cfg), params_(std::move(store)) {
  validate_config(cfg_);
  for_each_tts_param(cfg_, [this](const std::string& name,
                                  const std::vector<std::size_t>& shape, ParamKind) {
    if (!params_.has(name)) throw std::runtime_error("tts checkpoint: missing parameter " + name);
    if (params_.get(name).shape() != shape)
      throw std::runtime_error("tts checkpoint: shape mismatch for " + name);
  });
}

ad::Value TtsModel::encode(ad::Tape& t, const TapeBinding& p, const SymbolSequence& symbols,
                           ad::Value spk) const {
  if (symbols.empty()) throw std::invalid_argument("encode: empty symbol sequence");
  for (std::size_t id : symbols)
    if (id >= cfg_.vocab) throw std::invalid_argument("encode: symbol id out of vocabulary");
  const ad::Tensor& spk_t = t.val(spk);
  if (spk_t.rank() != 2 || spk_t.rows() != 1 || spk_t.cols() != cfg_.spk_dim)
    throw std::invalid_argument("encode: speaker embedding must be [1, spk_dim]");

  const std::size_t J = symbols.size();
  ad::Value emb = gather_rows(t, p["embed"], symbols);
  ad::Value x = t.relu(affine(t, emb, p["enc.prenet.w"], p["enc.prenet.b"]));

  ad::Value cond = affine(t, spk, p["enc.condA.w"], p["enc.condA.b"]);
  x = t.concat(x, t.tile_rows(cond, J), 1);

  for (std::size_t l = 0; l < cfg_.highway_layers; ++l) {
    const std::string base = "enc.hw" + std::to_string(l);
    ad::Value h = t.relu(affine(t, x, p[base + ".h.w"], p[base + ".h.b"]));
    ad::Value gate = t.sigmoid(affine(t, x, p[base + ".t.w"], p[base + ".t.b"]));
    ad::Value carry = t.add_scalar(t.scale(gate, -1.0), 1.0);
    x = t.add(t.mul(gate, h), t.mul(carry, x));
  }

  ad::Value h0 = affine(t, spk, p["enc.condB.w"], p["enc.condB.b"]);
  const GruValues gru_f = bind_gru(p, "enc.gruf");
  const GruValues gru_b = bind_gru(p, "enc.grub");
  std::vector<ad::Value> fwd(J), bwd(J);
  ad::Value h = h0;
  for (std::size_t j = 0; j < J; ++j) {
    h = gru_cell(t, gru_f, t.slice(x, 0, j, 1), h);
    fwd[j] = h;
  }
  h = h0;
  for (std::size_t j = J; j-- > 0;) {
    h = gru_cell(t, gru_b, t.slice(x, 0, j, 1), h);
    bwd[j] = h;
  }
  ad::Value stack = t.concat(fwd[0], bwd[0], 1);
  for (std::size_t j = 1; j < J; ++j)
    stack = t.concat(stack, t.concat(fwd[j], bwd[j], 1), 0);
  return t.concat(stack, t.tile_rows(spk, J), 1);
}

DecodeGraph TtsModel::decode_graph(ad::Tape& t, const TapeBinding& p, ad::Value enc,
                                   const Matrix& noise_rep, const Matrix* teacher_log_mel) const {
  const std::size_t J = t.val(enc).rows();
  const std::size_t E = cfg_.encoder_out_dim();
  if (t.val(enc).cols() != E)
    throw std::invalid_argument("decode_graph: encoder state width mismatch");
  if (noise_rep.cols != cfg_.n_mels || noise_rep.rows == 0)
    throw std::invalid_argument("decode_graph: bad noise representation shape");
  const std::size_t r = cfg_.reduction;

  const bool teacher = teacher_log_mel != nullptr;
  std::size_t steps = 0;
  if (teacher) {
    if (teacher_log_mel->cols != cfg_.n_mels)
      throw std::invalid_argument("decode_graph: teacher mel width mismatch");
    if (noise_rep.rows != teacher_log_mel->rows)
      throw std::invalid_argument(
          "decode_graph: noise representation frames do not match teacher frames");
    steps = teacher_log_mel->rows / r;
    if (steps == 0)
      throw std::invalid_argument("decode_graph: teacher target shorter than one step");
  } else {
    steps = std::max<std::size_t>(1, cfg_.max_frames / r);
  }

  const GruValues att_gru = bind_gru(p, "dec.att");
  const GruValues dec_gru = bind_gru(p, "dec.rnn");

  ad::Value att_h = t.constant(ad::Tensor::zeros({1, cfg_.att_rnn_dim}));
  ad::Value dec_h = t.constant(ad::Tensor::zeros({1, cfg_.dec_rnn_dim}));
  ad::Value kappa = t.constant(ad::Tensor::zeros({1, cfg_.gmm_mixtures}));
  ad::Value context = t.constant(ad::Tensor::zeros({1, E}));

  Matrix go(1, cfg_.n_mels);
  for (double& v : go.v) v = kGoFrame;

  DecodeGraph out;
  std::vector<ad::Value> frames, stops, align_rows;
  bool stopped = false;
  for (std::size_t i = 0; i < steps; ++i) {
    Matrix fb = go;
    if (i > 0) {
      if (teacher) {
        const std::size_t src = i * r - 1;
        for (std::size_t c = 0; c < cfg_.n_mels; ++c) fb.at(0, c) = teacher_log_mel->at(src, c);
      } else {
        const ad::Tensor& prev = t.val(frames.back());
        for (std::size_t c = 0; c < cfg_.n_mels; ++c) fb.at(0, c) = prev.at(r - 1, c);
      }
    }
    ad::Value fbv = t.constant(ad::Tensor::from_matrix(fb));
    ad::Value pn = t.relu(affine(t, fbv, p["dec.prenet1.w"], p["dec.prenet1.b"]));
    pn = t.relu(affine(t, pn, p["dec.prenet2.w"], p["dec.prenet2.b"]));

    att_h = gru_cell(t, att_gru, t.concat(pn, context, 1), att_h);
    const GmmStep step = gmm_attention_step(t, att_h, kappa, p["att.head.w"], p["att.head.b"],
                                            cfg_.gmm_mixtures, J);
    kappa = step.kappa;
    ad::Value w_row = t.transpose(step.weights);
    context = t.matmul(w_row, enc);

    dec_h = gru_cell(t, dec_gru, t.concat(att_h, context, 1), dec_h);
    ad::Value proj_in = t.concat(dec_h, context, 1);
    ad::Value frame_block =
        t.reshape(affine(t, proj_in, p["dec.proj.w"], p["dec.proj.b"]), {r, cfg_.n_mels});
    ad::Value stop_logit = affine(t, proj_in, p["dec.stop.w"], p["dec.stop.b"]);

    frames.push_back(frame_block);
    stops.push_back(stop_logit);
    align_rows.push_back(w_row);
    out.att_hidden.push_back(t.val(att_h).to_matrix());
    out.dec_hidden.push_back(t.val(dec_h).to_matrix());
    out.contexts.push_back(t.val(context).to_matrix());
    out.kappas.push_back(t.val(kappa).to_matrix());

    if (!teacher && t.val(stop_logit)[0] > 0.0) {
      stopped = true;
      break;
    }
  }
  out.hit_max_frames = !teacher && !stopped;

  ad::Value before = frames[0];
  ad::Value stop_logits = stops[0];
  ad::Value alignments = align_rows[0];
  for (std::size_t i = 1; i < frames.size(); ++i) {
    before = t.concat(before, frames[i], 0);
    stop_logits = t.concat(stop_logits, stops[i], 0);
    alignments = t.concat(alignments, align_rows[i], 0);
  }

  const std::size_t T = frames.size() * r;
  Matrix noise_full(T, cfg_.n_mels);
  for (std::size_t f = 0; f < T; ++f) {
    // Teacher mode is length-matched by the precondition; in free-running
    // mode a short (or single-row) representation repeats its final row.
    const std::size_t src = f < noise_rep.rows ? f : noise_rep.rows - 1;
    for (std::size_t c = 0; c < cfg_.n_mels; ++c) noise_full.at(f, c) = noise_rep.at(src, c);
  }

  ad::Value post_in = before;
  if (cfg_.condition_postnet)
    post_in = t.concat(before, t.constant(ad::Tensor::from_matrix(noise_full)), 1);
  const std::size_t pad = (cfg_.postnet_kernel - 1) / 2;
  ad::Value post = t.conv1d(post_in, p["post.conv0.w"], 1, pad);
  post = t.tanh_(t.add(post, t.tile_rows(p["post.conv0.b"], T)));
  post = t.conv1d(post, p["post.conv1.w"], 1, pad);
  post = t.add(post, t.tile_rows(p["post.conv1.b"], T));

  out.before = before;
  out.after = t.add(before, post);
  out.stop_logits = stop_logits;
  out.alignments = alignments;
  out.stop_target = Matrix(frames.size(), 1);
  out.stop_target.at(frames.size() - 1, 0) = 1.0;
  return out;
}

DecoderOutput TtsModel::decode(const SymbolSequence& symbols,
                               const speaker::SpeakerEmbedding& spk, const Matrix& noise_rep,
                               const Matrix* teacher_log_mel) const {
  if (spk.v.size() != cfg_.spk_dim)
    throw std::invalid_argument("decode: speaker embedding dim mismatch");
  ad::Tape tape;
  TapeBinding p(tape, params_, /*trainable=*/false);
  ad::Value spk_v = tape.constant(ad::Tensor({1, cfg_.spk_dim}, spk.v));
  ad::Value enc = encode(tape, p, symbols, spk_v);
  DecodeGraph g = decode_graph(tape, p, enc, noise_rep, teacher_log_mel);
  DecoderOutput out;
  out.before_mel = tape.val(g.before).to_matrix();
  out.after_mel = tape.val(g.after).to_matrix();
  out.stop_logits = tape.val(g.stop_logits).to_matrix();
  out.alignments = tape.val(g.alignments).to_matrix();
  out.hit_max_frames = g.hit_max_frames;
  out.att_hidden = std::move(g.att_hidden);
  out.dec_hidden = std::move(g.dec_hidden);
  out.contexts = std::move(g.contexts);
  out.kappas = std::move(g.kappas);
  return out;
}

void TtsModel::save(const std::string& path,
                    const std::map<std::string, std::string>& extra_meta) const {
  ParamStore out = params_;
  out.set_meta("model", "tts");
  out.set_meta("config", tts_config_to_json(cfg_));
  for (const auto& [k, v] : extra_meta) out.set_meta(k, v);
  out.save(path);
}

TtsModel TtsModel::load(const std::string& path) {
  ParamStore store = ParamStore::load(path);
  if (store.meta("model") != "tts")
    throw std::runtime_error("not a tts checkpoint: " + path);
  const TtsConfig cfg = tts_config_from_json(store.meta("config"));
  return TtsModel(cfg, std::move(store));
}

ad::Value tts_loss_graph(ad::Tape& t, const DecodeGraph& g, const Matrix& before_target,
                         const Matrix& after_target) {
  const std::size_t T = t.val(g.before).rows();
  const Matrix bt = truncate_rows(before_target, T);
  const Matrix at = truncate_rows(after_target, T);
  ad::Value loss = t.mse(g.before, t.constant(ad::Tensor::from_matrix(bt)));
  loss = t.add(loss, t.mse(g.after, t.constant(ad::Tensor::from_matrix(at))));
  ad::Value stop_t = t.constant(ad::Tensor::from_matrix(g.stop_target));
  return t.add(loss, t.bce_with_logits(g.stop_logits, stop_t));
}

TtsLossParts tts_loss_eval(const TtsModel& model, const SymbolSequence& symbols,
                           const speaker::SpeakerEmbedding& spk, const Matrix& noise_rep,
                           const Matrix& before_target, const Matrix& after_target) {
  const DecoderOutput out = model.decode(symbols, spk, noise_rep, &before_target);
  const std::size_t T = out.before_mel.rows;
  const Matrix bt = truncate_rows(before_target, T);
  const Matrix at = truncate_rows(after_target, T);

  TtsLossParts parts;
  double acc = 0.0;
  for (std::size_t i = 0; i < bt.v.size(); ++i) {
    const double d = out.before_mel.v[i] - bt.v[i];
    acc += d * d;
  }
  parts.before = acc / static_cast<double>(bt.v.size());
  acc = 0.0;
  for (std::size_t i = 0; i < at.v.size(); ++i) {
    const double d = out.after_mel.v[i] - at.v[i];
    acc += d * d;
  }
  parts.after = acc / static_cast<double>(at.v.size());
  acc = 0.0;
  const std::size_t steps = out.stop_logits.rows;
  for (std::size_t i = 0; i < steps; ++i) {
    const double x = out.stop_logits.at(i, 0);
    const double target = i + 1 == steps ? 1.0 : 0.0;
    acc += std::max(x, 0.0) - x * target + std::log1p(std::exp(-std::abs(x)));
  }
  parts.stop = acc / static_cast<double>(steps);
  parts.total = parts.before + parts.after + parts.stop;
  return parts;
}

TtsTrainResult train_tts(TtsModel& model, const std::vector<TtsExample>& dataset,
                         std::size_t steps, std::size_t batch_size, double lr, Rng& rng,
                         const std::vector<std::string>& frozen_prefixes) {
  if (dataset.empty()) throw std::invalid_argument("train_tts: empty dataset");
  if (batch_size == 0) throw std::invalid_argument("train_tts: zero batch size");
  const TtsConfig& cfg = model.config();
  for (const TtsExample& e : dataset) {
    require_same_shape(e.before_target, e.after_target, "train_tts");
    require_same_shape(e.before_target, e.noise_rep, "train_tts");
    if (e.spk.v.size() != cfg.spk_dim)
      throw std::invalid_argument("train_tts: speaker embedding dim mismatch");
  }

  AdamConfig opt_cfg;
  opt_cfg.lr = lr;
  Adam opt(model.params(), opt_cfg);

  const ParamStore& store = model.params();
  const std::vector<std::size_t> trainable = store.trainable_indices();
  std::vector<std::size_t> frozen_slots;
  for (std::size_t j = 0; j < trainable.size(); ++j) {
    const std::string& name = store.name_at(trainable[j]);
    for (const std::string& prefix : frozen_prefixes) {
      if (name.rfind(prefix, 0) == 0) {
        frozen_slots.push_back(j);
        break;
      }
    }
  }

  std::vector<std::size_t> perm(dataset.size());
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::size_t cursor = perm.size();

  TtsTrainResult result;
  result.loss_curve.reserve(steps);
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
      const TtsExample& e = dataset[perm[cursor++]];
      ad::Value spk_v = tape.constant(ad::Tensor({1, cfg.spk_dim}, e.spk.v));
      ad::Value enc = model.encode(tape, p, e.symbols, spk_v);
      DecodeGraph g = model.decode_graph(tape, p, enc, e.noise_rep, &e.before_target);
      ad::Value loss = tts_loss_graph(tape, g, e.before_target, e.after_target);
      batch_loss = have_loss ? tape.add(batch_loss, loss) : loss;
      have_loss = true;
    }
    batch_loss = tape.scale(batch_loss, 1.0 / static_cast<double>(batch_size));
    const double loss_now = tape.val(batch_loss)[0];
    if (!std::isfinite(loss_now))
      throw std::runtime_error("train_tts: non-finite loss at step " + std::to_string(step));
    result.loss_curve.push_back(loss_now);
    tape.backward(batch_loss);
    std::vector<ad::Tensor> grads = p.grads(tape);
    for (std::size_t j : frozen_slots) {
      std::fill(grads[j].data().begin(), grads[j].data().end(), 0.0);
    }
    opt.step(grads);
  }
  return result;
}

}  // namespace melmask::tts
