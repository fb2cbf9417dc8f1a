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

// Microbenchmarks for the hot paths: feature extraction, enhancer inference
// and training, and TTS decoding.

#include <cstddef>
#include <vector>

#include <benchmark/benchmark.h>

#include "melmask/dsp.hpp"
#include "melmask/enhancer.hpp"
#include "melmask/rng.hpp"
#include "melmask/tts.hpp"

namespace {

using namespace melmask;

dsp::Waveform make_wave(std::size_t n_samples, std::uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform wf;
  wf.sample_rate = 16000;
  wf.samples.resize(n_samples);
  for (double& s : wf.samples) s = rng.uniform(-0.3, 0.3);
  return wf;
}

dsp::MelSpectrogram make_mel(std::size_t frames, std::size_t n_mels, std::uint64_t seed) {
  Rng rng(seed);
  dsp::MelSpectrogram mel;
  mel.sample_rate = 16000;
  mel.frame_hop = 128;
  mel.bins = Matrix(frames, n_mels);
  for (double& x : mel.bins.v) x = rng.uniform(1e-4, 1.0);
  return mel;
}

void BM_Stft(benchmark::State& state) {
  const dsp::Waveform wf = make_wave(16000, 11);  // one second
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsp::stft(wf, 512, 128));
  }
}
BENCHMARK(BM_Stft);

void BM_MelProject(benchmark::State& state) {
  const dsp::Waveform wf = make_wave(16000, 12);
  const dsp::Spectrogram spec = dsp::stft(wf, 512, 128);
  const dsp::MelFilterbank fb = dsp::make_mel_filterbank(40, 257, 16000, 0.0, 8000.0);
  for (auto _ : state) {
    benchmark::DoNotOptimize(dsp::mel_project(spec, fb));
  }
}
BENCHMARK(BM_MelProject);

void BM_EnhancerPredict(benchmark::State& state) {
  enhancer::EnhancerConfig cfg;  // default 40-mel stack
  Rng rng(13);
  const enhancer::EnhancerModel model(cfg, rng);
  const dsp::MelSpectrogram noisy = make_mel(60, cfg.n_mels, 14);
  for (auto _ : state) {
    benchmark::DoNotOptimize(enhancer::enhance(model, noisy));
  }
}
BENCHMARK(BM_EnhancerPredict);

void BM_EnhancerTrainStep(benchmark::State& state) {
  enhancer::EnhancerConfig cfg;
  Rng rng(15);
  enhancer::EnhancerModel model(cfg, rng);
  const std::vector<enhancer::MelPair> dataset = {
      {make_mel(40, cfg.n_mels, 16), make_mel(40, cfg.n_mels, 17)}};
  Rng train_rng(18);
  for (auto _ : state) {
    benchmark::DoNotOptimize(enhancer::train_enhancer(model, dataset, 1, 1, 1e-3, train_rng));
  }
}
BENCHMARK(BM_EnhancerTrainStep);

void BM_TtsTeacherDecode(benchmark::State& state) {
  tts::TtsConfig cfg;  // default 40-mel model
  Rng rng(19);
  const tts::TtsModel model(cfg, rng);
  const tts::SymbolSequence symbols = {tts::kStartSymbol, 2, 9, 5, 11, 3, 7, tts::kEndSymbol};

  speaker::SpeakerEmbedding spk;
  spk.v.assign(cfg.spk_dim, 0.0);
  Rng spk_rng(20);
  double norm = 0.0;
  for (double& x : spk.v) {
    x = spk_rng.uniform(-1.0, 1.0);
    norm += x * x;
  }
  for (double& x : spk.v) x /= std::sqrt(norm);

  Rng feat_rng(21);
  Matrix teacher(20, cfg.n_mels);
  Matrix rep(20, cfg.n_mels);
  for (double& x : teacher.v) x = feat_rng.uniform(-8.0, 0.0);
  for (double& x : rep.v) x = feat_rng.uniform(-4.0, 4.0);

  for (auto _ : state) {
    benchmark::DoNotOptimize(model.decode(symbols, spk, rep, &teacher));
  }
}
BENCHMARK(BM_TtsTeacherDecode);

}  // namespace

BENCHMARK_MAIN();
