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

#ifndef MELMASK_PIPELINE_HPP_
#define MELMASK_PIPELINE_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "melmask/config.hpp"
#include "melmask/dsp.hpp"
#include "melmask/enhancer.hpp"
#include "melmask/mask.hpp"
#include "melmask/rng.hpp"
#include "melmask/speaker.hpp"
#include "melmask/tts.hpp"

namespace melmask::pipeline {

// A synthetic "voice": harmonic source with fixed per-speaker traits. Every
// utterance from the same spec is a deterministic function of (spec, symbols).
struct SyntheticSpeakerSpec {
  std::string id;
  double f0_base_hz = 160.0;       // fundamental, kept inside [80, 400]
  double spectral_tilt_db = -6.0;  // harmonic rolloff in dB per octave
  double vibrato_rate_hz = 5.0;
  double vibrato_depth_cents = 30.0;
  std::uint64_t seed = 0;  // per-speaker harmonic coloration
};

enum class NoiseKind { filtered_white, tonal, chirp };

std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

enum class UtteranceRole { pretrain, adapt, test };

std::string role_name(UtteranceRole role);
UtteranceRole role_from_name(const std::string& name);

// One corpus entry: a clean rendering of a text and one noisy mixture of it,
// with mel features and the oracle mask precomputed on aligned frames.
struct Utterance {
  std::string speaker_id;
  std::string utt_id;
  UtteranceRole role = UtteranceRole::pretrain;
  std::size_t text_index = 0;
  tts::SymbolSequence symbols;  // includes start/end markers
  double snr_db = 0.0;
  double measured_snr_db = 0.0;
  NoiseKind noise_kind = NoiseKind::filtered_white;

  dsp::Waveform clean_wav;  // empty after load_corpus
  dsp::Waveform noisy_wav;  // empty after load_corpus
  dsp::MelSpectrogram clean_mel;  // linear energies
  dsp::MelSpectrogram noisy_mel;  // linear energies
  dsp::MelSpectrogram noise_mel;  // linear energies of the scaled noise crop
  mask::DenoiseMask ideal;
};

struct Corpus {
  std::vector<SyntheticSpeakerSpec> specs;
  std::vector<Utterance> utterances;
  DspConfig dsp;
};

// Deterministic speaker roster with well-separated f0 and tilt values.
std::vector<SyntheticSpeakerSpec> default_speaker_specs(std::size_t n, std::uint64_t seed_base);

// Random symbol sequences (without start/end markers) drawn from the base
// alphabet; lengths are uniform in [min_symbols, max_symbols].
std::vector<tts::SymbolSequence> make_texts(std::size_t n, std::size_t min_symbols,
                                            std::size_t max_symbols, Rng& rng);

tts::SymbolSequence with_markers(const tts::SymbolSequence& text);

// Mel frame count the rendered waveform will produce for a marked sequence.
std::size_t planned_frames(const tts::SymbolSequence& symbols);

// Harmonic rendering of a marked symbol sequence: per-symbol pitch offsets
// and durations, vibrato, tilt-shaped harmonic amplitudes, short edge fades,
// silence for the start/end markers, peak 0.2, and a tail pad so the frame
// count matches planned_frames exactly.
dsp::Waveform synthesize_speech(const SyntheticSpeakerSpec& spec,
                                const tts::SymbolSequence& symbols, const DspConfig& dsp);

// filtered_white: one-pole lowpassed uniform noise; tonal: three sinusoids
// at random frequencies; chirp: one linear sweep. Peak 0.3.
dsp::Waveform synthesize_noise(NoiseKind kind, std::size_t n_samples, std::uint32_t sample_rate,
                               Rng& rng);

// Renders every (speaker, text) pair once, cycling noise kinds and SNR levels
// deterministically. Requires >= 2 speakers with unique ids, >= 1 text,
// >= 1 noise kind, and >= 1 SNR level.
Corpus generate_corpus(const std::vector<SyntheticSpeakerSpec>& specs,
                       const std::vector<tts::SymbolSequence>& texts,
                       const std::vector<NoiseKind>& noise_kinds,
                       const std::vector<double>& snr_levels, const DspConfig& dsp, Rng& rng);

// Single-speaker variant used for adaptation and held-out sets.
std::vector<Utterance> generate_utterances(const SyntheticSpeakerSpec& spec,
                                           const std::vector<tts::SymbolSequence>& texts,
                                           const std::vector<NoiseKind>& noise_kinds,
                                           const std::vector<double>& snr_levels,
                                           const DspConfig& dsp, Rng& rng, UtteranceRole role,
                                           std::size_t text_index_base);

// On-disk layout: <dir>/manifest.json plus per-utterance WAV/MELS/MASK files
// and log-mel PGM previews under <dir>/<speaker>/<utt_id>/.
void save_corpus(const Corpus& corpus, const std::string& dir);

// Reads the manifest and feature grids; waveforms are left empty (the mel
// and mask files carry everything the training stages consume).
Corpus load_corpus(const std::string& dir);

// Ingestion path for real recordings: scans <in_dir>/<speaker>/*.wav, mixes
// synthetic noise at the configured SNR levels, and writes the same corpus
// layout (no symbol sequences, so records are marked for enhancer use only).
Corpus augment_wav_corpus(const std::string& in_dir, const std::vector<NoiseKind>& noise_kinds,
                          const std::vector<double>& snr_levels, const DspConfig& dsp, Rng& rng);

// The datagen stage: pretrain speakers x train texts, one adapt speaker x
// its own texts (noisy-only consumption), and all speakers x held-out texts
// for evaluation. Writes the corpus and returns it.
Corpus run_datagen(const FullConfig& cfg, std::uint64_t seed, const std::string& out_dir);

inline std::string adapt_speaker_id(const Corpus& corpus) {
  return corpus.specs.back().id;
}

struct TrainEnhancerResult {
  std::string checkpoint_path;
  std::vector<double> loss_curve;
};

TrainEnhancerResult run_train_enhancer(const FullConfig& cfg, const std::string& corpus_dir,
                                       std::uint64_t seed, const std::string& out_dir);

struct EvalEnhancerRow {
  double snr_db = 0.0;
  double noisy_sisdr_db = 0.0;
  double enhanced_sisdr_db = 0.0;
};

// Mean SI-SDR of masked reconstructions against the clean mel on test-role
// utterances, one row per SNR level, next to the unprocessed baseline.
// Writes sisdr.csv.
std::vector<EvalEnhancerRow> run_eval_enhancer(const std::string& corpus_dir,
                                               const std::string& enhancer_ckpt,
                                               const std::string& out_dir);

// The same table computed with an arbitrary mask function, for oracle and
// identity probes.
using MaskFn = std::function<mask::DenoiseMask(const Utterance&)>;
std::vector<EvalEnhancerRow> eval_enhancer_with(const Corpus& corpus, const MaskFn& mask_fn);

struct PretrainResult {
  std::string checkpoint_path;
  std::string embeddings_path;
  std::vector<double> loss_curve;
};

// Multi-speaker pretraining on clean and noisy utterances. Clean utterances
// are conditioned on the all-ones mask; noisy ones on their ideal or
// enhancer-predicted mask (cfg.pipeline.mask_source). Pass an empty
// enhancer_ckpt to force ideal masks.
PretrainResult run_pretrain(const FullConfig& cfg, const std::string& corpus_dir,
                            const std::string& enhancer_ckpt, std::uint64_t seed,
                            const std::string& out_dir);

struct AdaptResult {
  std::string checkpoint_path;
  std::string embeddings_path;
  std::vector<double> loss_curve;
};

// Fine-tunes a pretrain-stage checkpoint on the adapt speaker's noisy
// utterances only. Rejects checkpoints whose stage is not "pretrain" and
// adapt speakers whose id collides with a pretraining speaker.
AdaptResult run_adapt(const FullConfig& cfg, const std::string& corpus_dir,
                      const std::string& pretrain_ckpt, const std::string& enhancer_ckpt,
                      std::uint64_t seed, const std::string& out_dir);

enum class MaskMode { clean, reference };

struct InferResult {
  Matrix before_log;  // [T, n_mels]
  Matrix after_log;   // [T, n_mels]
  Matrix alignments;  // [steps, n_symbols]
  std::vector<Matrix> kappas;
  bool hit_max_frames = false;
};

// Free-running synthesis. MaskMode::clean conditions on the all-ones mask;
// MaskMode::reference uses the caller-supplied mask. Writes before/after
// MELS files plus PGM previews and the alignment image under out_dir/<stem>.
InferResult run_infer(const tts::TtsModel& model, const tts::SymbolSequence& symbols,
                      const speaker::SpeakerEmbedding& spk, MaskMode mode,
                      const mask::DenoiseMask* reference, const DspConfig& dsp,
                      const std::string& out_dir, const std::string& stem);

struct SimilarityRow {
  std::string speaker_id;
  double cosine = 0.0;
  bool same_speaker = false;  // cosine > kSameSpeakerThreshold
};

inline constexpr double kSameSpeakerThreshold = 0.70;

// Synthesizes every held-out text for every speaker in the embeddings file,
// embeds the outputs, and compares the synthesized centroid against the
// reference centroid from the training data. self_test compares the
// reference centroid with itself. Writes similarity.csv.
std::vector<SimilarityRow> run_eval_similarity(const FullConfig& cfg,
                                               const std::string& corpus_dir,
                                               const std::string& tts_ckpt,
                                               const std::string& embeddings_path,
                                               const std::string& out_dir, bool self_test);

// Reference (training-data) speaker centroids: clean log-mels for pretrain
// speakers, enhancer-denoised log-mels for the adapt speaker (its clean
// renderings are off limits to the pipeline).
std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> corpus_reference_embeddings(
    const Corpus& corpus, const enhancer::EnhancerModel* enh, const PipelineConfig& pcfg);

// Mean squared error between a synthesized log-mel and an oracle log-mel;
// the synthesized grid is padded with log-floor frames or truncated to the
// oracle's frame count first.
double log_mel_mse(const Matrix& synth_log, const Matrix& oracle_log, double log_floor);

// Normalized conditioning grid for a given frame count in clean-mask mode.
Matrix clean_condition_grid(std::size_t frames, std::size_t n_mels);

}  // namespace melmask::pipeline

#endif  // MELMASK_PIPELINE_HPP_
