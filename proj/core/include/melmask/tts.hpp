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

#ifndef MELMASK_TTS_HPP_
#define MELMASK_TTS_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "melmask/autodiff.hpp"
#include "melmask/dsp.hpp"
#include "melmask/params.hpp"
#include "melmask/rng.hpp"
#include "melmask/speaker.hpp"

namespace melmask::tts {

// Text surrogate: a small symbol alphabet plus start/end markers.
using SymbolSequence = std::vector<std::size_t>;
inline constexpr std::size_t kNumBaseSymbols = 16;
inline constexpr std::size_t kStartSymbol = 16;
inline constexpr std::size_t kEndSymbol = 17;
inline constexpr std::size_t kVocabSize = 18;

struct TtsConfig {
  std::size_t n_mels = 40;
  std::size_t vocab = kVocabSize;
  std::size_t spk_dim = 32;

  // Encoder: embedding -> dense pre-net -> highway stack (speaker-conditioned
  // by concatenation) -> bidirectional GRU seeded from the projected speaker
  // embedding -> outputs with the raw embedding concatenated on.
  std::size_t embed_dim = 32;
  std::size_t enc_prenet_dim = 64;
  std::size_t cond_dim = 16;  // width of the dense-A conditioning channel
  std::size_t highway_layers = 2;
  std::size_t enc_gru_dim = 32;  // per direction

  // Decoder.
  std::size_t dec_prenet1 = 64;
  std::size_t dec_prenet2 = 32;
  std::size_t att_rnn_dim = 128;
  std::size_t dec_rnn_dim = 128;
  std::size_t gmm_mixtures = 3;
  std::size_t reduction = 2;  // mel frames per decoder step
  double kappa_init_advance = 0.35;
  std::size_t max_frames = 360;

  // Post-Net; condition_postnet=false drops the noise-representation input
  // (used by the unconditioned baseline).
  std::size_t postnet_channels = 64;
  std::size_t postnet_kernel = 5;
  bool condition_postnet = true;

  std::size_t highway_width() const { return enc_prenet_dim + cond_dim; }
  std::size_t encoder_out_dim() const { return 2 * enc_gru_dim + spk_dim; }
};

// One decoder step of GMM attention (softmax/softplus parameterization).
// query is [1, Q]; head maps it to 3K values split as (dw, dk, ds):
// w = softmax(dw); kappa = kappa_prev + softplus(dk); sigma = softplus(ds) +
// 1e-3; raw_j = sum_k w_k exp(-(j-kappa_k)^2 / (2 sigma_k^2)); weights are
// raw normalized over the n_positions encoder slots.
struct GmmStep {
  ad::Value weights;  // [n_positions, 1]
  ad::Value kappa;    // [1, K]
};
GmmStep gmm_attention_step(ad::Tape& tape, ad::Value query, ad::Value kappa_prev,
                           ad::Value head_w, ad::Value head_b, std::size_t mixtures,
                           std::size_t n_positions);

// Handles into a decode graph under construction plus per-step evaluated
// copies of the upstream activations (for conditioning-isolation checks).
struct DecodeGraph {
  ad::Value before;       // [T, n_mels] log-mel from the linear projection
  ad::Value after;        // [T, n_mels] before + Post-Net residual
  ad::Value stop_logits;  // [steps, 1]
  ad::Value alignments;   // [steps, n_symbols]
  Matrix stop_target;     // teacher mode: 1.0 on the final step
  bool hit_max_frames = false;
  std::vector<Matrix> att_hidden;  // per step, [1, att_rnn_dim]
  std::vector<Matrix> dec_hidden;  // per step, [1, dec_rnn_dim]
  std::vector<Matrix> contexts;    // per step, [1, encoder_out_dim]
  std::vector<Matrix> kappas;      // per step, [1, K]
};

struct DecoderOutput {
  Matrix before_mel;
  Matrix after_mel;
  Matrix stop_logits;
  Matrix alignments;
  bool hit_max_frames = false;
  std::vector<Matrix> att_hidden, dec_hidden, contexts, kappas;
};

class TtsModel {
 public:
  TtsModel(const TtsConfig& cfg, Rng& rng);
  TtsModel(TtsConfig cfg, ParamStore store);

  const TtsConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t param_count() const { return params_.total_elements(); }

  // Encoder state [n_symbols, encoder_out_dim]; spk is a tape value of shape
  // [1, spk_dim] so gradients can reach the embedding input.
  ad::Value encode(ad::Tape& tape, const TapeBinding& p, const SymbolSequence& symbols,
                   ad::Value spk) const;

  // Teacher-forced when teacher_log_mel is non-null (frame count must match
  // noise_rep, both get truncated to a multiple of the reduction factor);
  // free-running otherwise, with noise_rep rows broadcast or final-row
  // repeated to the generated length.
  DecodeGraph decode_graph(ad::Tape& tape, const TapeBinding& p, ad::Value enc,
                           const Matrix& noise_rep, const Matrix* teacher_log_mel) const;

  // Convenience wrapper on a private tape with frozen parameters.
  DecoderOutput decode(const SymbolSequence& symbols, const speaker::SpeakerEmbedding& spk,
                       const Matrix& noise_rep, const Matrix* teacher_log_mel) const;

  void save(const std::string& path, const std::map<std::string, std::string>& extra_meta) const;
  static TtsModel load(const std::string& path);

 private:
  TtsConfig cfg_;
  ParamStore params_;
};

// mse(before, before_target) + mse(after, after_target) + bce(stop logits,
// stop target). Targets are truncated to the produced frame count first.
ad::Value tts_loss_graph(ad::Tape& tape, const DecodeGraph& g, const Matrix& before_target,
                         const Matrix& after_target);

struct TtsLossParts {
  double before = 0.0;
  double after = 0.0;
  double stop = 0.0;
  double total = 0.0;
};
TtsLossParts tts_loss_eval(const TtsModel& model, const SymbolSequence& symbols,
                           const speaker::SpeakerEmbedding& spk, const Matrix& noise_rep,
                           const Matrix& before_target, const Matrix& after_target);

struct TtsExample {
  SymbolSequence symbols;
  speaker::SpeakerEmbedding spk;
  Matrix before_target;  // log-mel
  Matrix after_target;   // log-mel
  Matrix noise_rep;      // [-4, 4], frame count equal to the targets
};

struct TtsTrainResult {
  std::vector<double> loss_curve;
};

// frozen_prefixes names parameter groups excluded from updates (by name
// prefix, e.g. "post." for the Post-Net); empty means full fine-tune.
TtsTrainResult train_tts(TtsModel& model, const std::vector<TtsExample>& dataset,
                         std::size_t steps, std::size_t batch_size, double lr, Rng& rng,
                         const std::vector<std::string>& frozen_prefixes = {});

Matrix truncate_rows(const Matrix& m, std::size_t rows);

}  // namespace melmask::tts

#endif  // MELMASK_TTS_HPP_
