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

#include "melmask/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace melmask {
namespace {

using json = nlohmann::ordered_json;

json dsp_to_json_obj(const DspConfig& c) {
  json j;
  j["sample_rate"] = c.sample_rate;
  j["frame_len"] = c.frame_len;
  j["frame_hop"] = c.frame_hop;
  j["n_mels"] = c.n_mels;
  j["log_floor"] = c.log_floor;
  return j;
}

DspConfig dsp_from_json_obj(const json& j) {
  DspConfig c;
  c.sample_rate = j.value("sample_rate", c.sample_rate);
  c.frame_len = j.value("frame_len", c.frame_len);
  c.frame_hop = j.value("frame_hop", c.frame_hop);
  c.n_mels = j.value("n_mels", c.n_mels);
  c.log_floor = j.value("log_floor", c.log_floor);
  return c;
}

json enhancer_to_json_obj(const enhancer::EnhancerConfig& c) {
  json j;
  j["n_mels"] = c.n_mels;
  j["conv_layers"] = c.conv_layers;
  j["conv_channels"] = c.conv_channels;
  j["conv_kernel"] = c.conv_kernel;
  j["dfsmn_layers"] = c.dfsmn_layers;
  j["dfsmn_channels"] = c.dfsmn_channels;
  j["lookback"] = c.lookback;
  j["lookahead"] = c.lookahead;
  j["stride1"] = c.stride1;
  j["stride2"] = c.stride2;
  j["log_floor"] = c.log_floor;
  j["train_steps"] = c.train_steps;
  j["batch_size"] = c.batch_size;
  j["lr"] = c.lr;
  return j;
}

enhancer::EnhancerConfig enhancer_from_json_obj(const json& j) {
  enhancer::EnhancerConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.conv_layers = j.value("conv_layers", c.conv_layers);
  c.conv_channels = j.value("conv_channels", c.conv_channels);
  c.conv_kernel = j.value("conv_kernel", c.conv_kernel);
  c.dfsmn_layers = j.value("dfsmn_layers", c.dfsmn_layers);
  c.dfsmn_channels = j.value("dfsmn_channels", c.dfsmn_channels);
  c.lookback = j.value("lookback", c.lookback);
  c.lookahead = j.value("lookahead", c.lookahead);
  c.stride1 = j.value("stride1", c.stride1);
  c.stride2 = j.value("stride2", c.stride2);
  c.log_floor = j.value("log_floor", c.log_floor);
  c.train_steps = j.value("train_steps", c.train_steps);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  return c;
}

json tts_to_json_obj(const tts::TtsConfig& c) {
  json j;
  j["n_mels"] = c.n_mels;
  j["vocab"] = c.vocab;
  j["spk_dim"] = c.spk_dim;
  j["embed_dim"] = c.embed_dim;
  j["enc_prenet_dim"] = c.enc_prenet_dim;
  j["cond_dim"] = c.cond_dim;
  j["highway_layers"] = c.highway_layers;
  j["enc_gru_dim"] = c.enc_gru_dim;
  j["dec_prenet1"] = c.dec_prenet1;
  j["dec_prenet2"] = c.dec_prenet2;
  j["att_rnn_dim"] = c.att_rnn_dim;
  j["dec_rnn_dim"] = c.dec_rnn_dim;
  j["gmm_mixtures"] = c.gmm_mixtures;
  j["reduction"] = c.reduction;
  j["kappa_init_advance"] = c.kappa_init_advance;
  j["max_frames"] = c.max_frames;
  j["postnet_channels"] = c.postnet_channels;
  j["postnet_kernel"] = c.postnet_kernel;
  j["condition_postnet"] = c.condition_postnet;
  return j;
}

tts::TtsConfig tts_from_json_obj(const json& j) {
  tts::TtsConfig c;
  c.n_mels = j.value("n_mels", c.n_mels);
  c.vocab = j.value("vocab", c.vocab);
  c.spk_dim = j.value("spk_dim", c.spk_dim);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.enc_prenet_dim = j.value("enc_prenet_dim", c.enc_prenet_dim);
  c.cond_dim = j.value("cond_dim", c.cond_dim);
  c.highway_layers = j.value("highway_layers", c.highway_layers);
  c.enc_gru_dim = j.value("enc_gru_dim", c.enc_gru_dim);
  c.dec_prenet1 = j.value("dec_prenet1", c.dec_prenet1);
  c.dec_prenet2 = j.value("dec_prenet2", c.dec_prenet2);
  c.att_rnn_dim = j.value("att_rnn_dim", c.att_rnn_dim);
  c.dec_rnn_dim = j.value("dec_rnn_dim", c.dec_rnn_dim);
  c.gmm_mixtures = j.value("gmm_mixtures", c.gmm_mixtures);
  c.reduction = j.value("reduction", c.reduction);
  c.kappa_init_advance = j.value("kappa_init_advance", c.kappa_init_advance);
  c.max_frames = j.value("max_frames", c.max_frames);
  c.postnet_channels = j.value("postnet_channels", c.postnet_channels);
  c.postnet_kernel = j.value("postnet_kernel", c.postnet_kernel);
  c.condition_postnet = j.value("condition_postnet", c.condition_postnet);
  return c;
}

json pipeline_to_json_obj(const PipelineConfig& c) {
  json j;
  j["pretrain_speakers"] = c.pretrain_speakers;
  j["train_texts"] = c.train_texts;
  j["heldout_texts"] = c.heldout_texts;
  j["adapt_utterances"] = c.adapt_utterances;
  j["text_min_symbols"] = c.text_min_symbols;
  j["text_max_symbols"] = c.text_max_symbols;
  j["snr_levels"] = c.snr_levels;
  j["adapt_snr_levels"] = c.adapt_snr_levels;
  j["pretrain_steps"] = c.pretrain_steps;
  j["pretrain_batch"] = c.pretrain_batch;
  j["pretrain_lr"] = c.pretrain_lr;
  j["adapt_steps"] = c.adapt_steps;
  j["adapt_batch"] = c.adapt_batch;
  j["adapt_lr"] = c.adapt_lr;
  j["adapt_frozen_prefixes"] = c.adapt_frozen_prefixes;
  j["mask_source"] = c.mask_source;
  j["baseline_mode"] = c.baseline_mode;
  j["embed_projection_seed"] = c.embed_projection_seed;
  j["embed_dim"] = c.embed_dim;
  return j;
}

PipelineConfig pipeline_from_json_obj(const json& j) {
  PipelineConfig c;
  c.pretrain_speakers = j.value("pretrain_speakers", c.pretrain_speakers);
  c.train_texts = j.value("train_texts", c.train_texts);
  c.heldout_texts = j.value("heldout_texts", c.heldout_texts);
  c.adapt_utterances = j.value("adapt_utterances", c.adapt_utterances);
  c.text_min_symbols = j.value("text_min_symbols", c.text_min_symbols);
  c.text_max_symbols = j.value("text_max_symbols", c.text_max_symbols);
  if (j.contains("snr_levels")) {
    c.snr_levels = j.at("snr_levels").get<std::vector<double>>();
  }
  if (j.contains("adapt_snr_levels")) {
    c.adapt_snr_levels = j.at("adapt_snr_levels").get<std::vector<double>>();
  }
  c.pretrain_steps = j.value("pretrain_steps", c.pretrain_steps);
  c.pretrain_batch = j.value("pretrain_batch", c.pretrain_batch);
  c.pretrain_lr = j.value("pretrain_lr", c.pretrain_lr);
  c.adapt_steps = j.value("adapt_steps", c.adapt_steps);
  c.adapt_batch = j.value("adapt_batch", c.adapt_batch);
  c.adapt_lr = j.value("adapt_lr", c.adapt_lr);
  if (j.contains("adapt_frozen_prefixes")) {
    c.adapt_frozen_prefixes = j.at("adapt_frozen_prefixes").get<std::vector<std::string>>();
  }
  c.mask_source = j.value("mask_source", c.mask_source);
  c.baseline_mode = j.value("baseline_mode", c.baseline_mode);
  c.embed_projection_seed = j.value("embed_projection_seed", c.embed_projection_seed);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  return c;
}

json parse_text(const std::string& text) {
  json j = json::parse(text, nullptr, true, true);
  if (!j.is_object()) {
    throw std::invalid_argument("config: top-level JSON value must be an object");
  }
  return j;
}

}  // namespace

FullConfig parse_config(const std::string& json_text) {
  json j = parse_text(json_text);
  FullConfig cfg;
  if (j.contains("dsp")) cfg.dsp = dsp_from_json_obj(j.at("dsp"));
  if (j.contains("enhancer")) cfg.enhancer = enhancer_from_json_obj(j.at("enhancer"));
  if (j.contains("tts")) cfg.tts = tts_from_json_obj(j.at("tts"));
  if (j.contains("pipeline")) cfg.pipeline = pipeline_from_json_obj(j.at("pipeline"));
  cfg.enhancer.n_mels = cfg.dsp.n_mels;
  cfg.enhancer.log_floor = cfg.dsp.log_floor;
  cfg.tts.n_mels = cfg.dsp.n_mels;
  cfg.tts.spk_dim = cfg.pipeline.embed_dim;
  return cfg;
}

FullConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw std::runtime_error("config: cannot open " + path);
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const FullConfig& cfg) {
  json j;
  j["dsp"] = dsp_to_json_obj(cfg.dsp);
  j["enhancer"] = enhancer_to_json_obj(cfg.enhancer);
  j["tts"] = tts_to_json_obj(cfg.tts);
  j["pipeline"] = pipeline_to_json_obj(cfg.pipeline);
  return j.dump(2) + "\n";
}

std::string dsp_config_to_json(const DspConfig& cfg) {
  return dsp_to_json_obj(cfg).dump();
}

DspConfig dsp_config_from_json(const std::string& json_text) {
  return dsp_from_json_obj(parse_text(json_text));
}

std::string enhancer_config_to_json(const enhancer::EnhancerConfig& cfg) {
  return enhancer_to_json_obj(cfg).dump();
}

enhancer::EnhancerConfig enhancer_config_from_json(const std::string& json_text) {
  return enhancer_from_json_obj(parse_text(json_text));
}

std::string tts_config_to_json(const tts::TtsConfig& cfg) {
  return tts_to_json_obj(cfg).dump();
}

tts::TtsConfig tts_config_from_json(const std::string& json_text) {
  return tts_from_json_obj(parse_text(json_text));
}

}  // namespace melmask
