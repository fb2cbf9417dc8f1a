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

#include "melmask/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "melmask/io.hpp"

namespace melmask::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;
constexpr double kPi = 3.1415926535897932384626433832795;
constexpr double kSpeechPeak = 0.2;
constexpr double kNoisePeak = 0.3;
constexpr double kFadeSeconds = 0.003;
constexpr double kNoiseTailSeconds = 0.5;
constexpr std::size_t kMarkerFrames = 3;
constexpr std::size_t kMaxHarmonics = 96;

std::size_t symbol_frames(std::size_t s) {
  if (s >= tts::kNumBaseSymbols) return kMarkerFrames;
  return 5 + (s % 3);
}

double semitone_offset(std::size_t s) {
  return static_cast<double>((s * 5) % 12) - 5.0;
}

std::string snr_tag(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", v);
  std::string s(buf);
  for (char& ch : s) {
    if (ch == '-') ch = 'm';
    if (ch == '.') ch = 'd';
  }
  return s;
}

void scale_to_peak(std::vector<double>& samples, double peak) {
  double top = 0.0;
  for (double x : samples) top = std::max(top, std::abs(x));
  if (top <= 0.0) return;
  const double g = peak / top;
  for (double& x : samples) x *= g;
}

dsp::MelSpectrogram linear_mel(const dsp::Waveform& wf, const DspConfig& dc) {
  return dsp::wav_to_linear_mel(wf, dc.frame_len, dc.frame_hop, dc.n_mels);
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string out;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i > 0) out += ',';
    out += ids[i];
  }
  return out;
}

std::vector<std::string> split_ids(const std::string& joined) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : joined) {
    if (ch == ',') {
      if (!cur.empty()) out.push_back(cur);
      cur.clear();
    } else {
      cur += ch;
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

Utterance build_utterance(const SyntheticSpeakerSpec& spec, const tts::SymbolSequence& text,
                          std::size_t text_index, NoiseKind kind, double snr_db,
                          const DspConfig& dc, Rng& rng, UtteranceRole role) {
  Utterance u;
  u.speaker_id = spec.id;
  u.role = role;
  u.text_index = text_index;
  u.symbols = with_markers(text);
  u.snr_db = snr_db;
  u.noise_kind = kind;
  u.utt_id = spec.id + "_t" + std::to_string(text_index) + "_" + noise_kind_name(kind) +
             "_snr" + snr_tag(snr_db);

  u.clean_wav = synthesize_speech(spec, u.symbols, dc);
  const std::size_t noise_len =
      u.clean_wav.samples.size() +
      static_cast<std::size_t>(kNoiseTailSeconds * static_cast<double>(dc.sample_rate));
  dsp::Waveform noise = synthesize_noise(kind, noise_len, dc.sample_rate, rng);
  dsp::MixResult mix = dsp::mix_at_snr(u.clean_wav, noise, snr_db, rng);
  u.noisy_wav = std::move(mix.noisy);
  u.measured_snr_db = 20.0 * std::log10(dsp::rms(u.clean_wav.samples) /
                                        dsp::rms(mix.scaled_noise.samples));

  u.clean_mel = linear_mel(u.clean_wav, dc);
  u.noisy_mel = linear_mel(u.noisy_wav, dc);
  u.noise_mel = linear_mel(mix.scaled_noise, dc);
  u.ideal = mask::ideal_mask(u.clean_mel, u.noise_mel);
  return u;
}

json dsp_obj(const DspConfig& dc) {
  json j;
  j["sample_rate"] = dc.sample_rate;
  j["frame_len"] = dc.frame_len;
  j["frame_hop"] = dc.frame_hop;
  j["n_mels"] = dc.n_mels;
  j["log_floor"] = dc.log_floor;
  return j;
}

DspConfig dsp_from_obj(const json& j) {
  DspConfig dc;
  dc.sample_rate = j.value("sample_rate", dc.sample_rate);
  dc.frame_len = j.value("frame_len", dc.frame_len);
  dc.frame_hop = j.value("frame_hop", dc.frame_hop);
  dc.n_mels = j.value("n_mels", dc.n_mels);
  dc.log_floor = j.value("log_floor", dc.log_floor);
  return dc;
}

dsp::MelSpectrogram grid_to_mel(const io::FrameGrid& g) {
  dsp::MelSpectrogram mel;
  mel.bins = g.bins;
  mel.sample_rate = g.sample_rate;
  mel.frame_hop = g.frame_hop;
  return mel;
}

dsp::MelSpectrogram wrap_mel(Matrix bins, const DspConfig& dc) {
  dsp::MelSpectrogram mel;
  mel.bins = std::move(bins);
  mel.sample_rate = dc.sample_rate;
  mel.frame_hop = dc.frame_hop;
  return mel;
}

speaker::SpeakerEmbedding embed_log_mel(const dsp::MelSpectrogram& log_mel,
                                        const PipelineConfig& p) {
  return speaker::toy_embed(log_mel, p.embed_projection_seed, p.embed_dim);
}

mask::DenoiseMask utterance_mask(const Utterance& u, const enhancer::EnhancerModel* enh) {
  if (enh != nullptr) return enhancer::enhance(*enh, u.noisy_mel);
  return u.ideal;
}

// Speaker table keyed by id, in corpus spec order. Pretrain speakers embed
// their clean renderings; speakers seen only through adapt data embed the
// enhancer-denoised (or raw noisy) log-mels.
std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> reference_embeddings_impl(
    const Corpus& corpus, const enhancer::EnhancerModel* enh, const PipelineConfig& p) {
  std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> out;
  for (const SyntheticSpeakerSpec& spec : corpus.specs) {
    std::vector<speaker::SpeakerEmbedding> embeds;
    for (const Utterance& u : corpus.utterances) {
      if (u.speaker_id != spec.id || u.role != UtteranceRole::pretrain) continue;
      embeds.push_back(embed_log_mel(dsp::log_compress(u.clean_mel, corpus.dsp.log_floor), p));
    }
    if (embeds.empty()) {
      for (const Utterance& u : corpus.utterances) {
        if (u.speaker_id != spec.id || u.role != UtteranceRole::adapt) continue;
        const dsp::MelSpectrogram denoised =
            mask::apply_mask(u.noisy_mel, utterance_mask(u, enh));
        embeds.push_back(embed_log_mel(dsp::log_compress(denoised, corpus.dsp.log_floor), p));
      }
    }
    if (embeds.empty()) continue;
    speaker::SpeakerEmbedding mu = speaker::centroid(embeds);
    out.emplace_back(spec.id, std::move(mu));
  }
  return out;
}

const speaker::SpeakerEmbedding& table_at(
    const std::vector<std::pair<std::string, speaker::SpeakerEmbedding>>& table,
    const std::string& id) {
  for (const auto& [name, emb] : table) {
    if (name == id) return emb;
  }
  throw std::runtime_error("pipeline: no embedding for speaker '" + id + "'");
}

std::vector<tts::TtsExample> pretrain_dataset(
    const Corpus& corpus, const enhancer::EnhancerModel* enh, bool baseline,
    const std::vector<std::pair<std::string, speaker::SpeakerEmbedding>>& table) {
  std::vector<tts::TtsExample> out;
  for (const Utterance& u : corpus.utterances) {
    if (u.role != UtteranceRole::pretrain || u.symbols.empty()) continue;
    const speaker::SpeakerEmbedding& spk = table_at(table, u.speaker_id);
    const Matrix clean_log = dsp::log_compress(u.clean_mel, corpus.dsp.log_floor).bins;

    tts::TtsExample clean_ex;
    clean_ex.symbols = u.symbols;
    clean_ex.spk = spk;
    clean_ex.before_target = clean_log;
    clean_ex.after_target = clean_log;
    clean_ex.noise_rep = clean_condition_grid(clean_log.rows, clean_log.cols);
    out.push_back(std::move(clean_ex));

    // The denoise-then-adapt baseline is pretrained on the clean data only;
    // the conditioned model additionally sees each noisy mixture with its
    // mask, clean speech as the before target and the mixture as the after
    // target, so the Post-Net absorbs the noise.
    if (baseline) continue;

    const Matrix noisy_log = dsp::log_compress(u.noisy_mel, corpus.dsp.log_floor).bins;
    tts::TtsExample noisy_ex;
    noisy_ex.symbols = u.symbols;
    noisy_ex.spk = spk;
    noisy_ex.before_target = clean_log;
    noisy_ex.after_target = noisy_log;
    noisy_ex.noise_rep = mask::normalize_for_conditioning(utterance_mask(u, enh)).values;
    out.push_back(std::move(noisy_ex));
  }
  return out;
}

std::vector<tts::TtsExample> adapt_dataset(
    const Corpus& corpus, const enhancer::EnhancerModel* enh, bool baseline,
    const std::vector<std::pair<std::string, speaker::SpeakerEmbedding>>& table) {
  std::vector<tts::TtsExample> out;
  for (const Utterance& u : corpus.utterances) {
    if (u.role != UtteranceRole::adapt || u.symbols.empty()) continue;
    const speaker::SpeakerEmbedding& spk = table_at(table, u.speaker_id);
    mask::DenoiseMask m = utterance_mask(u, enh);
    const Matrix denoised_log =
        dsp::log_compress(mask::apply_mask(u.noisy_mel, m), corpus.dsp.log_floor).bins;

    tts::TtsExample ex;
    ex.symbols = u.symbols;
    ex.spk = spk;
    ex.before_target = denoised_log;
    if (baseline) {
      ex.after_target = denoised_log;
      ex.noise_rep = clean_condition_grid(denoised_log.rows, denoised_log.cols);
    } else {
      ex.after_target = dsp::log_compress(u.noisy_mel, corpus.dsp.log_floor).bins;
      ex.noise_rep = mask::normalize_for_conditioning(m).values;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
  std::vector<std::vector<double>> rows;
  rows.reserve(curve.size());
  for (std::size_t i = 0; i < curve.size(); ++i) {
    rows.push_back({static_cast<double>(i), curve[i]});
  }
  io::write_csv(path, {"step", "loss"}, rows);
}

const enhancer::EnhancerModel* load_enhancer_if_needed(
    const PipelineConfig& p, const std::string& enhancer_ckpt,
    std::unique_ptr<enhancer::EnhancerModel>& holder) {
  if (p.mask_source == "ideal") return nullptr;
  if (p.mask_source != "predicted") {
    throw std::invalid_argument("pipeline: mask_source must be 'ideal' or 'predicted', got '" +
                                p.mask_source + "'");
  }
  if (enhancer_ckpt.empty()) {
    throw std::invalid_argument(
        "pipeline: mask_source 'predicted' needs an enhancer checkpoint path");
  }
  holder = std::make_unique<enhancer::EnhancerModel>(enhancer::EnhancerModel::load(enhancer_ckpt));
  return holder.get();
}

}  // namespace

std::string noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::filtered_white: return "filtered_white";
    case NoiseKind::tonal: return "tonal";
    case NoiseKind::chirp: return "chirp";
  }
  throw std::invalid_argument("noise_kind_name: bad kind");
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "filtered_white") return NoiseKind::filtered_white;
  if (name == "tonal") return NoiseKind::tonal;
  if (name == "chirp") return NoiseKind::chirp;
  throw std::invalid_argument("noise_kind_from_name: unknown kind '" + name + "'");
}

std::string role_name(UtteranceRole role) {
  switch (role) {
    case UtteranceRole::pretrain: return "pretrain";
    case UtteranceRole::adapt: return "adapt";
    case UtteranceRole::test: return "test";
  }
  throw std::invalid_argument("role_name: bad role");
}

UtteranceRole role_from_name(const std::string& name) {
  if (name == "pretrain") return UtteranceRole::pretrain;
  if (name == "adapt") return UtteranceRole::adapt;
  if (name == "test") return UtteranceRole::test;
  throw std::invalid_argument("role_from_name: unknown role '" + name + "'");
}

std::vector<SyntheticSpeakerSpec> default_speaker_specs(std::size_t n, std::uint64_t seed_base) {
  static const double kF0[] = {120.0, 210.0, 300.0, 95.0, 160.0, 260.0, 360.0, 135.0};
  static const double kTilt[] = {-9.0, -3.0, -12.0, -6.0, 0.0, -7.5, -4.5, -10.5};
  static const double kRate[] = {4.5, 5.7, 6.3, 4.1, 5.1, 5.9, 4.8, 6.7};
  static const double kDepth[] = {25.0, 45.0, 15.0, 35.0, 55.0, 20.0, 40.0, 30.0};
  std::vector<SyntheticSpeakerSpec> specs;
  specs.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    SyntheticSpeakerSpec s;
    s.id = "spk" + std::to_string(i);
    const std::size_t k = i % 8;
    // Later octets shift f0 by a semitone per lap so large rosters stay
    // distinct, clamped to the supported range.
    const double lap = static_cast<double>(i / 8);
    s.f0_base_hz = std::min(400.0, kF0[k] * std::pow(2.0, lap / 12.0));
    s.spectral_tilt_db = kTilt[k];
    s.vibrato_rate_hz = kRate[k];
    s.vibrato_depth_cents = kDepth[k];
    s.seed = seed_base + 0x9E3779B97F4A7C15ULL * (i + 1);
    specs.push_back(std::move(s));
  }
  return specs;
}

std::vector<tts::SymbolSequence> make_texts(std::size_t n, std::size_t min_symbols,
                                            std::size_t max_symbols, Rng& rng) {
  if (min_symbols == 0 || max_symbols < min_symbols) {
    throw std::invalid_argument("make_texts: need 1 <= min_symbols <= max_symbols");
  }
  std::vector<tts::SymbolSequence> texts;
  texts.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t len = min_symbols + rng.below(max_symbols - min_symbols + 1);
    tts::SymbolSequence t(len);
    for (std::size_t j = 0; j < len; ++j) t[j] = rng.below(tts::kNumBaseSymbols);
    texts.push_back(std::move(t));
  }
  return texts;
}

tts::SymbolSequence with_markers(const tts::SymbolSequence& text) {
  tts::SymbolSequence marked;
  marked.reserve(text.size() + 2);
  marked.push_back(tts::kStartSymbol);
  marked.insert(marked.end(), text.begin(), text.end());
  marked.push_back(tts::kEndSymbol);
  return marked;
}

std::size_t planned_frames(const tts::SymbolSequence& symbols) {
  std::size_t frames = 0;
  for (std::size_t s : symbols) frames += symbol_frames(s);
  return frames;
}

dsp::Waveform synthesize_speech(const SyntheticSpeakerSpec& spec,
                                const tts::SymbolSequence& symbols, const DspConfig& dc) {
  if (spec.f0_base_hz < 80.0 || spec.f0_base_hz > 400.0) {
    throw std::invalid_argument("synthesize_speech: f0_base_hz outside [80, 400]");
  }
  if (symbols.empty()) {
    throw std::invalid_argument("synthesize_speech: empty symbol sequence");
  }
  const std::size_t frames = planned_frames(symbols);
  const std::size_t n = frames * dc.frame_hop + (dc.frame_len - dc.frame_hop);
  dsp::Waveform wf;
  wf.sample_rate = dc.sample_rate;
  wf.samples.assign(n, 0.0);

  Rng color(spec.seed);
  std::vector<double> factor(kMaxHarmonics);
  for (double& f : factor) f = color.uniform(0.7, 1.3);

  const double sr = static_cast<double>(dc.sample_rate);
  const std::size_t fade = std::max<std::size_t>(1, static_cast<std::size_t>(kFadeSeconds * sr));
  const double nyq_cap = 0.45 * sr;
  double phase = 0.0;
  std::size_t cursor = 0;
  for (std::size_t s : symbols) {
    const std::size_t seg = symbol_frames(s) * dc.frame_hop;
    if (s >= tts::kNumBaseSymbols) {
      cursor += seg;  // markers render as silence
      continue;
    }
    const double f0_seg = spec.f0_base_hz * std::pow(2.0, semitone_offset(s) / 12.0);
    for (std::size_t i = 0; i < seg; ++i) {
      const double t = static_cast<double>(cursor + i) / sr;
      const double vib =
          std::pow(2.0, spec.vibrato_depth_cents / 1200.0 * std::sin(kTwoPi * spec.vibrato_rate_hz * t));
      const double f_inst = f0_seg * vib;
      phase += kTwoPi * f_inst / sr;
      double x = 0.0;
      for (std::size_t k = 1; k <= kMaxHarmonics; ++k) {
        if (static_cast<double>(k) * f_inst >= nyq_cap) break;
        const double amp =
            std::pow(10.0, spec.spectral_tilt_db * std::log2(static_cast<double>(k)) / 20.0);
        x += amp * factor[k - 1] * std::sin(static_cast<double>(k) * phase);
      }
      double w = 1.0;
      if (i < fade) {
        w = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(i) / static_cast<double>(fade)));
      } else if (i + fade >= seg) {
        w = 0.5 * (1.0 - std::cos(kPi * static_cast<double>(seg - 1 - i) / static_cast<double>(fade)));
      }
      wf.samples[cursor + i] = w * x;
    }
    cursor += seg;
  }
  scale_to_peak(wf.samples, kSpeechPeak);
  return wf;
}

dsp::Waveform synthesize_noise(NoiseKind kind, std::size_t n_samples, std::uint32_t sample_rate,
                               Rng& rng) {
  dsp::Waveform wf;
  wf.sample_rate = sample_rate;
  wf.samples.assign(n_samples, 0.0);
  const double sr = static_cast<double>(sample_rate);
  switch (kind) {
    case NoiseKind::filtered_white: {
      const double alpha = rng.uniform(0.8, 0.95);
      double y = 0.0;
      for (std::size_t i = 0; i < n_samples; ++i) {
        y = alpha * y + (1.0 - alpha) * rng.uniform(-1.0, 1.0);
        wf.samples[i] = y;
      }
      break;
    }
    case NoiseKind::tonal: {
      double freq[3], ph[3];
      for (int k = 0; k < 3; ++k) {
        freq[k] = rng.uniform(300.0, 6000.0);
        ph[k] = rng.uniform(0.0, kTwoPi);
      }
      for (std::size_t i = 0; i < n_samples; ++i) {
        const double t = static_cast<double>(i) / sr;
        double x = 0.0;
        for (int k = 0; k < 3; ++k) x += std::sin(kTwoPi * freq[k] * t + ph[k]);
        wf.samples[i] = x / 3.0;
      }
      break;
    }
    case NoiseKind::chirp: {
      const double f0 = rng.uniform(200.0, 3000.0);
      const double f1 = rng.uniform(3000.0, 7000.0);
      double phase = 0.0;
      for (std::size_t i = 0; i < n_samples; ++i) {
        const double frac =
            n_samples > 1 ? static_cast<double>(i) / static_cast<double>(n_samples - 1) : 0.0;
        phase += kTwoPi * (f0 + (f1 - f0) * frac) / sr;
        wf.samples[i] = std::sin(phase);
      }
      break;
    }
  }
  scale_to_peak(wf.samples, kNoisePeak);
  return wf;
}

Corpus generate_corpus(const std::vector<SyntheticSpeakerSpec>& specs,
                       const std::vector<tts::SymbolSequence>& texts,
                       const std::vector<NoiseKind>& noise_kinds,
                       const std::vector<double>& snr_levels, const DspConfig& dsp_cfg,
                       Rng& rng) {
  if (specs.size() < 2) {
    throw std::invalid_argument("generate_corpus: needs at least two speakers");
  }
  std::set<std::string> ids;
  for (const SyntheticSpeakerSpec& s : specs) {
    if (!ids.insert(s.id).second) {
      throw std::invalid_argument("generate_corpus: duplicate speaker id '" + s.id + "'");
    }
  }
  if (texts.empty()) throw std::invalid_argument("generate_corpus: needs at least one text");
  if (noise_kinds.empty()) throw std::invalid_argument("generate_corpus: needs a noise kind");
  if (snr_levels.empty()) throw std::invalid_argument("generate_corpus: needs an SNR level");

  Corpus corpus;
  corpus.specs = specs;
  corpus.dsp = dsp_cfg;
  std::size_t g = 0;
  for (const SyntheticSpeakerSpec& spec : specs) {
    for (std::size_t ti = 0; ti < texts.size(); ++ti) {
      const NoiseKind kind = noise_kinds[g % noise_kinds.size()];
      const double snr = snr_levels[(g / noise_kinds.size()) % snr_levels.size()];
      corpus.utterances.push_back(build_utterance(spec, texts[ti], ti, kind, snr, dsp_cfg, rng,
                                                  UtteranceRole::pretrain));
      ++g;
    }
  }
  return corpus;
}

std::vector<Utterance> generate_utterances(const SyntheticSpeakerSpec& spec,
                                           const std::vector<tts::SymbolSequence>& texts,
                                           const std::vector<NoiseKind>& noise_kinds,
                                           const std::vector<double>& snr_levels,
                                           const DspConfig& dsp_cfg, Rng& rng, UtteranceRole role,
                                           std::size_t text_index_base) {
  if (texts.empty()) throw std::invalid_argument("generate_utterances: needs at least one text");
  if (noise_kinds.empty()) throw std::invalid_argument("generate_utterances: needs a noise kind");
  if (snr_levels.empty()) throw std::invalid_argument("generate_utterances: needs an SNR level");
  std::vector<Utterance> out;
  out.reserve(texts.size());
  for (std::size_t ti = 0; ti < texts.size(); ++ti) {
    const NoiseKind kind = noise_kinds[ti % noise_kinds.size()];
    const double snr = snr_levels[(ti / noise_kinds.size()) % snr_levels.size()];
    out.push_back(build_utterance(spec, texts[ti], text_index_base + ti, kind, snr, dsp_cfg, rng,
                                  role));
  }
  return out;
}

void save_corpus(const Corpus& corpus, const std::string& dir) {
  fs::create_directories(dir);
  json manifest;
  manifest["dsp"] = dsp_obj(corpus.dsp);
  json speakers = json::array();
  for (const SyntheticSpeakerSpec& s : corpus.specs) {
    json j;
    j["id"] = s.id;
    j["f0_base_hz"] = s.f0_base_hz;
    j["spectral_tilt_db"] = s.spectral_tilt_db;
    j["vibrato_rate_hz"] = s.vibrato_rate_hz;
    j["vibrato_depth_cents"] = s.vibrato_depth_cents;
    j["seed"] = s.seed;
    speakers.push_back(std::move(j));
  }
  manifest["speakers"] = std::move(speakers);

  json utts = json::array();
  for (const Utterance& u : corpus.utterances) {
    const std::string rel = u.speaker_id + "/" + u.utt_id;
    const std::string base = dir + "/" + rel;
    fs::create_directories(base);
    if (!u.clean_wav.samples.empty()) dsp::write_wav(base + "/clean.wav", u.clean_wav);
    if (!u.noisy_wav.samples.empty()) dsp::write_wav(base + "/noisy.wav", u.noisy_wav);
    const auto sr = static_cast<std::uint32_t>(corpus.dsp.sample_rate);
    const auto hop = static_cast<std::uint32_t>(corpus.dsp.frame_hop);
    io::write_mels(base + "/clean.mels", u.clean_mel.bins, sr, hop);
    io::write_mels(base + "/noisy.mels", u.noisy_mel.bins, sr, hop);
    io::write_mels(base + "/noise.mels", u.noise_mel.bins, sr, hop);
    io::write_mask(base + "/ideal.mask", u.ideal.values, sr, hop);
    io::write_pgm(base + "/clean_log.pgm",
                  dsp::log_compress(u.clean_mel, corpus.dsp.log_floor).bins);
    io::write_pgm(base + "/noisy_log.pgm",
                  dsp::log_compress(u.noisy_mel, corpus.dsp.log_floor).bins);

    json j;
    j["speaker_id"] = u.speaker_id;
    j["utt_id"] = u.utt_id;
    j["role"] = role_name(u.role);
    j["text_index"] = u.text_index;
    j["symbols"] = u.symbols;
    j["snr_db"] = u.snr_db;
    j["measured_snr_db"] = u.measured_snr_db;
    j["noise_kind"] = noise_kind_name(u.noise_kind);
    j["dir"] = rel;
    utts.push_back(std::move(j));
  }
  manifest["utterances"] = std::move(utts);

  std::ofstream out(dir + "/manifest.json", std::ios::binary);
  if (!out) throw std::runtime_error("save_corpus: cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
  std::ifstream in(dir + "/manifest.json", std::ios::binary);
  if (!in) throw std::runtime_error("load_corpus: cannot open " + dir + "/manifest.json");
  json manifest = json::parse(in);

  Corpus corpus;
  corpus.dsp = dsp_from_obj(manifest.at("dsp"));
  for (const json& j : manifest.at("speakers")) {
    SyntheticSpeakerSpec s;
    s.id = j.at("id").get<std::string>();
    s.f0_base_hz = j.value("f0_base_hz", s.f0_base_hz);
    s.spectral_tilt_db = j.value("spectral_tilt_db", s.spectral_tilt_db);
    s.vibrato_rate_hz = j.value("vibrato_rate_hz", s.vibrato_rate_hz);
    s.vibrato_depth_cents = j.value("vibrato_depth_cents", s.vibrato_depth_cents);
    s.seed = j.value("seed", s.seed);
    corpus.specs.push_back(std::move(s));
  }
  for (const json& j : manifest.at("utterances")) {
    Utterance u;
    u.speaker_id = j.at("speaker_id").get<std::string>();
    u.utt_id = j.at("utt_id").get<std::string>();
    u.role = role_from_name(j.at("role").get<std::string>());
    u.text_index = j.at("text_index").get<std::size_t>();
    u.symbols = j.at("symbols").get<tts::SymbolSequence>();
    u.snr_db = j.at("snr_db").get<double>();
    u.measured_snr_db = j.at("measured_snr_db").get<double>();
    u.noise_kind = noise_kind_from_name(j.at("noise_kind").get<std::string>());
    const std::string base = dir + "/" + j.at("dir").get<std::string>();
    u.clean_mel = grid_to_mel(io::read_mels(base + "/clean.mels"));
    u.noisy_mel = grid_to_mel(io::read_mels(base + "/noisy.mels"));
    u.noise_mel = grid_to_mel(io::read_mels(base + "/noise.mels"));
    u.ideal.values = io::read_mask(base + "/ideal.mask").bins;
    u.ideal.kind = mask::MaskKind::ideal;
    u.clean_wav.sample_rate = corpus.dsp.sample_rate;
    u.noisy_wav.sample_rate = corpus.dsp.sample_rate;
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

Corpus augment_wav_corpus(const std::string& in_dir, const std::vector<NoiseKind>& noise_kinds,
                          const std::vector<double>& snr_levels, const DspConfig& dsp_cfg,
                          Rng& rng) {
  if (noise_kinds.empty()) throw std::invalid_argument("augment: needs a noise kind");
  if (snr_levels.empty()) throw std::invalid_argument("augment: needs an SNR level");
  std::vector<std::string> speaker_dirs;
  for (const fs::directory_entry& e : fs::directory_iterator(in_dir)) {
    if (e.is_directory()) speaker_dirs.push_back(e.path().filename().string());
  }
  std::sort(speaker_dirs.begin(), speaker_dirs.end());
  if (speaker_dirs.empty()) {
    throw std::invalid_argument("augment: no speaker directories under " + in_dir);
  }

  Corpus corpus;
  corpus.dsp = dsp_cfg;
  std::size_t g = 0;
  for (const std::string& spk : speaker_dirs) {
    std::vector<fs::path> wavs;
    for (const fs::directory_entry& e : fs::directory_iterator(in_dir + "/" + spk)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") wavs.push_back(e.path());
    }
    std::sort(wavs.begin(), wavs.end());
    if (wavs.empty()) continue;

    SyntheticSpeakerSpec spec;
    spec.id = spk;
    corpus.specs.push_back(spec);

    for (std::size_t wi = 0; wi < wavs.size(); ++wi) {
      dsp::Waveform clean = dsp::read_wav(wavs[wi].string());
      if (clean.sample_rate != dsp_cfg.sample_rate) {
        throw std::invalid_argument("augment: " + wavs[wi].string() + " has sample rate " +
                                    std::to_string(clean.sample_rate) + ", expected " +
                                    std::to_string(dsp_cfg.sample_rate));
      }
      for (double snr : snr_levels) {
        const NoiseKind kind = noise_kinds[g % noise_kinds.size()];
        ++g;
        const std::size_t noise_len =
            clean.samples.size() +
            static_cast<std::size_t>(kNoiseTailSeconds * static_cast<double>(dsp_cfg.sample_rate));
        dsp::Waveform noise = synthesize_noise(kind, noise_len, dsp_cfg.sample_rate, rng);
        dsp::MixResult mix = dsp::mix_at_snr(clean, noise, snr, rng);

        Utterance u;
        u.speaker_id = spk;
        u.role = UtteranceRole::pretrain;
        u.text_index = wi;
        u.snr_db = snr;
        u.noise_kind = kind;
        u.utt_id = wavs[wi].stem().string() + "_" + noise_kind_name(kind) + "_snr" +
                   snr_tag(snr);
        u.measured_snr_db = 20.0 * std::log10(dsp::rms(clean.samples) /
                                              dsp::rms(mix.scaled_noise.samples));
        u.clean_wav = clean;
        u.noisy_wav = std::move(mix.noisy);
        u.clean_mel = linear_mel(u.clean_wav, dsp_cfg);
        u.noisy_mel = linear_mel(u.noisy_wav, dsp_cfg);
        u.noise_mel = linear_mel(mix.scaled_noise, dsp_cfg);
        u.ideal = mask::ideal_mask(u.clean_mel, u.noise_mel);
        corpus.utterances.push_back(std::move(u));
      }
    }
  }
  if (corpus.utterances.empty()) {
    throw std::invalid_argument("augment: no .wav files found under " + in_dir);
  }
  return corpus;
}

Corpus run_datagen(const FullConfig& cfg, std::uint64_t seed, const std::string& out_dir) {
  const PipelineConfig& p = cfg.pipeline;
  if (p.heldout_texts == 0) throw std::invalid_argument("datagen: heldout_texts must be > 0");
  if (p.adapt_utterances == 0) throw std::invalid_argument("datagen: adapt_utterances must be > 0");

  Rng root(seed);
  std::vector<SyntheticSpeakerSpec> roster =
      default_speaker_specs(p.pretrain_speakers + 1, seed);
  std::vector<SyntheticSpeakerSpec> pretrain_specs(roster.begin(), roster.end() - 1);
  const SyntheticSpeakerSpec adapt_spec = roster.back();

  Rng text_rng = root.fork(1);
  const auto train_texts = make_texts(p.train_texts, p.text_min_symbols, p.text_max_symbols,
                                      text_rng);
  const auto adapt_texts = make_texts(p.adapt_utterances, p.text_min_symbols, p.text_max_symbols,
                                      text_rng);
  const auto held_texts = make_texts(p.heldout_texts, p.text_min_symbols, p.text_max_symbols,
                                     text_rng);
  const std::vector<NoiseKind> kinds = {NoiseKind::filtered_white, NoiseKind::tonal,
                                        NoiseKind::chirp};

  Rng gen_rng = root.fork(2);
  Corpus corpus = generate_corpus(pretrain_specs, train_texts, kinds, p.snr_levels, cfg.dsp,
                                  gen_rng);
  corpus.specs.push_back(adapt_spec);

  Rng adapt_rng = root.fork(3);
  auto adapt_utts = generate_utterances(adapt_spec, adapt_texts, kinds, p.adapt_snr_levels,
                                        cfg.dsp, adapt_rng, UtteranceRole::adapt, 100);
  for (Utterance& u : adapt_utts) corpus.utterances.push_back(std::move(u));

  Rng test_rng = root.fork(4);
  for (const SyntheticSpeakerSpec& spec : roster) {
    auto test_utts = generate_utterances(spec, held_texts, kinds, p.snr_levels, cfg.dsp, test_rng,
                                         UtteranceRole::test, 1000);
    for (Utterance& u : test_utts) corpus.utterances.push_back(std::move(u));
  }

  save_corpus(corpus, out_dir + "/corpus");
  return corpus;
}

TrainEnhancerResult run_train_enhancer(const FullConfig& cfg, const std::string& corpus_dir,
                                       std::uint64_t seed, const std::string& out_dir) {
  Corpus corpus = load_corpus(corpus_dir);
  std::vector<enhancer::MelPair> dataset;
  for (const Utterance& u : corpus.utterances) {
    if (u.role != UtteranceRole::pretrain) continue;
    dataset.emplace_back(u.noisy_mel, u.clean_mel);
    dataset.emplace_back(u.clean_mel, u.clean_mel);
  }
  if (dataset.empty()) {
    throw std::invalid_argument("train-enhancer: corpus has no pretrain-role utterances");
  }

  Rng root(seed);
  Rng init_rng = root.fork(11);
  Rng train_rng = root.fork(12);
  enhancer::EnhancerConfig ec = cfg.enhancer;
  ec.n_mels = cfg.dsp.n_mels;
  ec.log_floor = cfg.dsp.log_floor;
  enhancer::EnhancerModel model(ec, init_rng);
  enhancer::EnhancerTrainResult train =
      enhancer::train_enhancer(model, dataset, ec.train_steps, ec.batch_size, ec.lr, train_rng);

  fs::create_directories(out_dir);
  TrainEnhancerResult result;
  result.checkpoint_path = out_dir + "/enhancer.ckpt";
  result.loss_curve = std::move(train.loss_curve);
  model.save(result.checkpoint_path, {{"stage", "enhancer"}});
  write_loss_csv(out_dir + "/enhancer_loss.csv", result.loss_curve);
  return result;
}

std::vector<EvalEnhancerRow> eval_enhancer_with(const Corpus& corpus, const MaskFn& mask_fn) {
  std::set<double> levels;
  for (const Utterance& u : corpus.utterances) {
    if (u.role == UtteranceRole::test) levels.insert(u.snr_db);
  }
  if (levels.empty()) {
    throw std::invalid_argument("eval-enhancer: corpus has no test-role utterances");
  }
  std::vector<EvalEnhancerRow> rows;
  for (double snr : levels) {
    EvalEnhancerRow row;
    row.snr_db = snr;
    double noisy_sum = 0.0;
    double enh_sum = 0.0;
    std::size_t count = 0;
    for (const Utterance& u : corpus.utterances) {
      if (u.role != UtteranceRole::test || u.snr_db != snr) continue;
      noisy_sum += dsp::si_sdr_mel(u.clean_mel.bins, u.noisy_mel.bins);
      const dsp::MelSpectrogram enhanced = mask::apply_mask(u.noisy_mel, mask_fn(u));
      enh_sum += dsp::si_sdr_mel(u.clean_mel.bins, enhanced.bins);
      ++count;
    }
    row.noisy_sisdr_db = noisy_sum / static_cast<double>(count);
    row.enhanced_sisdr_db = enh_sum / static_cast<double>(count);
    rows.push_back(row);
  }
  return rows;
}

std::vector<EvalEnhancerRow> run_eval_enhancer(const std::string& corpus_dir,
                                               const std::string& enhancer_ckpt,
                                               const std::string& out_dir) {
  Corpus corpus = load_corpus(corpus_dir);
  enhancer::EnhancerModel model = enhancer::EnhancerModel::load(enhancer_ckpt);
  std::vector<EvalEnhancerRow> rows = eval_enhancer_with(
      corpus, [&model](const Utterance& u) { return enhancer::enhance(model, u.noisy_mel); });

  fs::create_directories(out_dir);
  std::vector<std::vector<double>> csv_rows;
  for (const EvalEnhancerRow& r : rows) {
    csv_rows.push_back({r.snr_db, r.noisy_sisdr_db, r.enhanced_sisdr_db});
  }
  io::write_csv(out_dir + "/sisdr.csv", {"snr_db", "noisy_sisdr_db", "enhanced_sisdr_db"},
                csv_rows);
  return rows;
}

std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> corpus_reference_embeddings(
    const Corpus& corpus, const enhancer::EnhancerModel* enh, const PipelineConfig& pcfg) {
  return reference_embeddings_impl(corpus, enh, pcfg);
}

PretrainResult run_pretrain(const FullConfig& cfg, const std::string& corpus_dir,
                            const std::string& enhancer_ckpt, std::uint64_t seed,
                            const std::string& out_dir) {
  const PipelineConfig& p = cfg.pipeline;
  Corpus corpus = load_corpus(corpus_dir);
  std::unique_ptr<enhancer::EnhancerModel> enh_holder;
  const enhancer::EnhancerModel* enh = load_enhancer_if_needed(p, enhancer_ckpt, enh_holder);

  auto table = reference_embeddings_impl(corpus, enh, p);
  std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> pretrain_table;
  std::vector<std::string> pretrain_ids;
  for (const auto& [id, emb] : table) {
    bool has_pretrain = false;
    for (const Utterance& u : corpus.utterances) {
      if (u.speaker_id == id && u.role == UtteranceRole::pretrain) {
        has_pretrain = true;
        break;
      }
    }
    if (has_pretrain) {
      pretrain_table.emplace_back(id, emb);
      pretrain_ids.push_back(id);
    }
  }
  std::vector<tts::TtsExample> dataset =
      pretrain_dataset(corpus, enh, p.baseline_mode, pretrain_table);
  if (dataset.empty()) {
    throw std::invalid_argument("pretrain: corpus has no pretrain-role utterances");
  }

  tts::TtsConfig tc = cfg.tts;
  tc.n_mels = cfg.dsp.n_mels;
  tc.spk_dim = p.embed_dim;
  if (p.baseline_mode) tc.condition_postnet = false;

  Rng root(seed);
  Rng init_rng = root.fork(21);
  Rng train_rng = root.fork(22);
  tts::TtsModel model(tc, init_rng);
  tts::TtsTrainResult train =
      tts::train_tts(model, dataset, p.pretrain_steps, p.pretrain_batch, p.pretrain_lr, train_rng);

  fs::create_directories(out_dir);
  PretrainResult result;
  result.checkpoint_path = out_dir + "/tts_pretrain.ckpt";
  result.embeddings_path = out_dir + "/embeddings.ckpt";
  result.loss_curve = std::move(train.loss_curve);
  model.save(result.checkpoint_path,
             {{"stage", "pretrain"},
              {"speakers", join_ids(pretrain_ids)},
              {"baseline", p.baseline_mode ? "1" : "0"}});
  speaker::save_embeddings(result.embeddings_path, pretrain_table);
  write_loss_csv(out_dir + "/pretrain_loss.csv", result.loss_curve);
  return result;
}

AdaptResult run_adapt(const FullConfig& cfg, const std::string& corpus_dir,
                      const std::string& pretrain_ckpt, const std::string& enhancer_ckpt,
                      std::uint64_t seed, const std::string& out_dir) {
  const PipelineConfig& p = cfg.pipeline;
  Corpus corpus = load_corpus(corpus_dir);
  tts::TtsModel model = tts::TtsModel::load(pretrain_ckpt);

  const std::string stage = model.params().meta("stage");
  if (stage != "pretrain") {
    throw std::invalid_argument("adapt: checkpoint stage is '" + stage +
                                "', expected 'pretrain'");
  }
  const std::vector<std::string> pretrained = split_ids(model.params().meta("speakers"));

  std::vector<std::string> adapt_ids;
  for (const Utterance& u : corpus.utterances) {
    if (u.role != UtteranceRole::adapt) continue;
    if (std::find(adapt_ids.begin(), adapt_ids.end(), u.speaker_id) == adapt_ids.end()) {
      adapt_ids.push_back(u.speaker_id);
    }
  }
  if (adapt_ids.empty()) {
    throw std::invalid_argument("adapt: corpus has no adapt-role utterances");
  }
  for (const std::string& id : adapt_ids) {
    if (std::find(pretrained.begin(), pretrained.end(), id) != pretrained.end()) {
      throw std::invalid_argument("adapt: speaker id '" + id +
                                  "' collides with a pretraining speaker");
    }
  }

  std::unique_ptr<enhancer::EnhancerModel> enh_holder;
  const enhancer::EnhancerModel* enh = load_enhancer_if_needed(p, enhancer_ckpt, enh_holder);
  const bool baseline = !model.config().condition_postnet;

  auto table = reference_embeddings_impl(corpus, enh, p);
  std::vector<tts::TtsExample> dataset = adapt_dataset(corpus, enh, baseline, table);

  Rng root(seed);
  Rng train_rng = root.fork(31);
  tts::TtsTrainResult train = tts::train_tts(model, dataset, p.adapt_steps, p.adapt_batch,
                                             p.adapt_lr, train_rng, p.adapt_frozen_prefixes);

  fs::create_directories(out_dir);
  AdaptResult result;
  result.checkpoint_path = out_dir + "/tts_adapt.ckpt";
  result.embeddings_path = out_dir + "/embeddings.ckpt";
  result.loss_curve = std::move(train.loss_curve);
  if (p.adapt_steps == 0) {
    // Nothing was updated; the checkpoint passes through untouched.
    model.save(result.checkpoint_path, {});
  } else {
    std::vector<std::string> all_ids = pretrained;
    all_ids.insert(all_ids.end(), adapt_ids.begin(), adapt_ids.end());
    model.save(result.checkpoint_path,
               {{"stage", "adapt"}, {"speakers", join_ids(all_ids)}});
  }
  speaker::save_embeddings(result.embeddings_path, table);
  write_loss_csv(out_dir + "/adapt_loss.csv", result.loss_curve);
  return result;
}

InferResult run_infer(const tts::TtsModel& model, const tts::SymbolSequence& symbols,
                      const speaker::SpeakerEmbedding& spk, MaskMode mode,
                      const mask::DenoiseMask* reference, const DspConfig& dsp_cfg,
                      const std::string& out_dir, const std::string& stem) {
  Matrix rep;
  if (mode == MaskMode::clean) {
    rep = clean_condition_grid(1, model.config().n_mels);
  } else {
    if (reference == nullptr) {
      throw std::invalid_argument("infer: reference mask mode needs a mask");
    }
    rep = mask::normalize_for_conditioning(*reference).values;
  }
  tts::DecoderOutput out = model.decode(symbols, spk, rep, nullptr);

  fs::create_directories(out_dir);
  const auto sr = static_cast<std::uint32_t>(dsp_cfg.sample_rate);
  const auto hop = static_cast<std::uint32_t>(dsp_cfg.frame_hop);
  const std::string base = out_dir + "/" + stem;
  io::write_mels(base + "_before.mels", out.before_mel, sr, hop);
  io::write_mels(base + "_after.mels", out.after_mel, sr, hop);
  io::write_pgm(base + "_before.pgm", out.before_mel);
  io::write_pgm(base + "_after.pgm", out.after_mel);
  io::write_pgm(base + "_alignment.pgm", out.alignments);

  InferResult result;
  result.before_log = std::move(out.before_mel);
  result.after_log = std::move(out.after_mel);
  result.alignments = std::move(out.alignments);
  result.kappas = std::move(out.kappas);
  result.hit_max_frames = out.hit_max_frames;
  return result;
}

std::vector<SimilarityRow> run_eval_similarity(const FullConfig& cfg,
                                               const std::string& corpus_dir,
                                               const std::string& tts_ckpt,
                                               const std::string& embeddings_path,
                                               const std::string& out_dir, bool self_test) {
  const PipelineConfig& p = cfg.pipeline;
  Corpus corpus = load_corpus(corpus_dir);
  auto refs = speaker::load_embeddings(embeddings_path);
  if (refs.empty()) {
    throw std::invalid_argument("eval-similarity: embeddings file is empty");
  }

  std::vector<SimilarityRow> rows;
  if (self_test) {
    for (const auto& [id, ref] : refs) {
      SimilarityRow row;
      row.speaker_id = id;
      row.cosine = speaker::cosine_similarity(ref, ref);
      row.same_speaker = row.cosine > kSameSpeakerThreshold;
      rows.push_back(row);
    }
  } else {
    tts::TtsModel model = tts::TtsModel::load(tts_ckpt);
    for (const auto& [id, ref] : refs) {
      std::vector<speaker::SpeakerEmbedding> synth_embeds;
      for (const Utterance& u : corpus.utterances) {
        if (u.speaker_id != id || u.role != UtteranceRole::test) continue;
        InferResult inf = run_infer(model, u.symbols, ref, MaskMode::clean, nullptr, corpus.dsp,
                                    out_dir + "/synth/" + id,
                                    "t" + std::to_string(u.text_index));
        synth_embeds.push_back(
            embed_log_mel(wrap_mel(std::move(inf.after_log), corpus.dsp), p));
      }
      if (synth_embeds.empty()) {
        throw std::invalid_argument("eval-similarity: no held-out texts for speaker '" + id +
                                    "'");
      }
      SimilarityRow row;
      row.speaker_id = id;
      row.cosine = speaker::cosine_similarity(speaker::centroid(synth_embeds), ref);
      row.same_speaker = row.cosine > kSameSpeakerThreshold;
      rows.push_back(row);
    }
  }

  fs::create_directories(out_dir);
  std::vector<std::string> labels;
  std::vector<std::vector<double>> csv_rows;
  for (const SimilarityRow& r : rows) {
    labels.push_back(r.speaker_id);
    csv_rows.push_back({r.cosine, r.same_speaker ? 1.0 : 0.0});
  }
  io::write_csv(out_dir + "/similarity.csv", {"speaker", "cosine", "same_speaker"}, labels,
                csv_rows);
  return rows;
}

double log_mel_mse(const Matrix& synth_log, const Matrix& oracle_log, double log_floor) {
  if (synth_log.cols != oracle_log.cols) {
    throw std::invalid_argument("log_mel_mse: mel dimension mismatch");
  }
  if (oracle_log.rows == 0 || oracle_log.cols == 0) {
    throw std::invalid_argument("log_mel_mse: empty oracle");
  }
  const double pad = std::log(log_floor);
  double acc = 0.0;
  for (std::size_t r = 0; r < oracle_log.rows; ++r) {
    for (std::size_t c = 0; c < oracle_log.cols; ++c) {
      const double s = r < synth_log.rows ? synth_log.at(r, c) : pad;
      const double d = s - oracle_log.at(r, c);
      acc += d * d;
    }
  }
  return acc / static_cast<double>(oracle_log.rows * oracle_log.cols);
}

Matrix clean_condition_grid(std::size_t frames, std::size_t n_mels) {
  return Matrix::full(frames, n_mels, mask::normalize_element(1.0));
}

}  // namespace melmask::pipeline
