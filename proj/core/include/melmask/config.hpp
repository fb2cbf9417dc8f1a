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

#ifndef MELMASK_CONFIG_HPP_
#define MELMASK_CONFIG_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "melmask/dsp.hpp"
#include "melmask/enhancer.hpp"
#include "melmask/tts.hpp"

namespace melmask {

struct DspConfig {
  std::uint32_t sample_rate = 16000;
  std::size_t frame_len = 512;
  std::size_t frame_hop = 128;
  std::size_t n_mels = 40;
  double log_floor = dsp::kLogFloor;
};

// Corpus sizing, stage hyperparameters, and the baseline switch. Everything
// needed to reproduce a full run lives here plus one seed.
struct PipelineConfig {
  std::size_t pretrain_speakers = 4;
  std::size_t train_texts = 10;
  std::size_t heldout_texts = 12;
  std::size_t adapt_utterances = 10;
  std::size_t text_min_symbols = 6;
  std::size_t text_max_symbols = 9;
  std::vector<double> snr_levels = {-5.0, 0.0, 5.0};
  std::vector<double> adapt_snr_levels = {0.0};  // adaptation data stays below 5 dB

  std::size_t pretrain_steps = 2500;
  std::size_t pretrain_batch = 2;
  double pretrain_lr = 1e-3;
  std::size_t adapt_steps = 2000;
  std::size_t adapt_batch = 2;
  double adapt_lr = 1e-4;
  // Parameter-name prefixes excluded from adaptation updates ("post." keeps
  // the pretrained Post-Net noise model intact); empty means full fine-tune.
  std::vector<std::string> adapt_frozen_prefixes;

  // "ideal" uses oracle masks for pretraining conditioning; "predicted" runs
  // the trained enhancer.
  std::string mask_source = "predicted";
  // Denoise-then-adapt baseline: Post-Net gets no noise input and adaptation
  // trains directly on denoised targets.
  bool baseline_mode = false;

  std::uint64_t embed_projection_seed = 7777;
  std::size_t embed_dim = 32;
};

struct FullConfig {
  DspConfig dsp;
  enhancer::EnhancerConfig enhancer;
  tts::TtsConfig tts;
  PipelineConfig pipeline;
};

// Single JSON document with sections {dsp, enhancer, tts, pipeline}; missing
// keys fall back to the defaults above.
FullConfig load_config(const std::string& path);
FullConfig parse_config(const std::string& json_text);
std::string config_to_json(const FullConfig& cfg);

std::string dsp_config_to_json(const DspConfig& cfg);
DspConfig dsp_config_from_json(const std::string& json_text);
std::string enhancer_config_to_json(const enhancer::EnhancerConfig& cfg);
enhancer::EnhancerConfig enhancer_config_from_json(const std::string& json_text);
std::string tts_config_to_json(const tts::TtsConfig& cfg);
tts::TtsConfig tts_config_from_json(const std::string& json_text);

}  // namespace melmask

#endif  // MELMASK_CONFIG_HPP_
