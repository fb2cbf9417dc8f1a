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

#ifndef MELMASK_ENHANCER_HPP_
#define MELMASK_ENHANCER_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "melmask/autodiff.hpp"
#include "melmask/dsp.hpp"
#include "melmask/mask.hpp"
#include "melmask/params.hpp"
#include "melmask/rng.hpp"

namespace melmask::enhancer {

struct EnhancerConfig {
  std::size_t n_mels = 40;
  std::size_t conv_layers = 2;
  std::size_t conv_channels = 32;
  std::size_t conv_kernel = 3;
  std::size_t dfsmn_layers = 3;
  std::size_t dfsmn_channels = 64;
  std::size_t lookback = 4;   // N1: taps a_0..a_N1
  std::size_t lookahead = 2;  // N2: taps c_1..c_N2
  std::size_t stride1 = 1;
  std::size_t stride2 = 1;
  double log_floor = dsp::kLogFloor;

  std::size_t train_steps = 600;
  std::size_t batch_size = 4;
  double lr = 1e-3;
};

// Memory block of one DFSMN layer as a single tape primitive:
// p_t = h_t + sum_{i=0..N1} a_i ⊙ h_{t-i*s1} + sum_{j=1..N2} c_j ⊙ h_{t+j*s2},
// taps outside [0, T) contribute zero. h is [T, C]; a is [N1+1, C], c is
// [N2, C] (possibly zero rows).
ad::Value dfsmn_memory(ad::Tape& tape, ad::Value h, ad::Value a, ad::Value c, std::size_t s1,
                       std::size_t s2);

// CNN front-end + DFSMN stack + dense sigmoid head over log-mel features.
class EnhancerModel {
 public:
  EnhancerModel(const EnhancerConfig& cfg, Rng& rng);
  EnhancerModel(EnhancerConfig cfg, ParamStore store);

  const EnhancerConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  std::size_t param_count() const { return params_.total_elements(); }

  // Builds the mask-prediction graph from a log-mel feature matrix [T, n_mels]
  // using parameters already bound to the tape. Output is [T, n_mels] in (0,1).
  ad::Value predict_mask(ad::Tape& tape, const TapeBinding& p, const Matrix& log_mel) const;

  void save(const std::string& path, const std::map<std::string, std::string>& extra_meta) const;
  static EnhancerModel load(const std::string& path);

 private:
  EnhancerConfig cfg_;
  ParamStore params_;
};

// Predicts a denoise mask for a linear-energy noisy mel; features are
// log-compressed internally.
mask::DenoiseMask enhance(const EnhancerModel& model, const dsp::MelSpectrogram& noisy_mel);

struct EnhancerTrainResult {
  std::vector<double> loss_curve;  // entry per step, loss before that update
};

// Pairs are (noisy linear mel, clean linear mel) with equal shapes per pair.
using MelPair = std::pair<dsp::MelSpectrogram, dsp::MelSpectrogram>;

// Minimizes (Σ(S_noise ⊙ M − S_clean)²)/n over the dataset with Adam;
// batches accumulate whole utterances. Seeded, deterministic.
EnhancerTrainResult train_enhancer(EnhancerModel& model, const std::vector<MelPair>& dataset,
                                   std::size_t steps, std::size_t batch_size, double lr,
                                   Rng& rng);

}  // namespace melmask::enhancer

#endif  // MELMASK_ENHANCER_HPP_
