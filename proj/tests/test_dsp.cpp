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

#include <cmath>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

#include <doctest.h>

#include "melmask/dsp.hpp"
#include "melmask/matrix.hpp"
#include "melmask/rng.hpp"

namespace {

using melmask::Matrix;
using melmask::Rng;
namespace dsp = melmask::dsp;

// Direct O(n^2) DFT magnitude of one windowed frame, the oracle behind the
// fast transform in stft().
std::vector<double> naive_dft_mag(const std::vector<double>& frame) {
  const std::size_t n = frame.size();
  std::vector<double> mag(n / 2 + 1);
  for (std::size_t k = 0; k <= n / 2; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k * i) /
                           static_cast<double>(n);
      acc += frame[i] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    mag[k] = std::abs(acc);
  }
  return mag;
}

std::filesystem::path temp_dir() {
  auto p = std::filesystem::temp_directory_path() / "melmask_test_dsp";
  std::filesystem::create_directories(p);
  return p;
}

TEST_SUITE("dsp") {

TEST_CASE("stft magnitudes match a direct DFT") {
  Rng rng(201);
  dsp::Waveform wf;
  wf.sample_rate = 16000;
  wf.samples.resize(700);
  for (double& s : wf.samples) s = rng.uniform(-0.5, 0.5);

  const std::size_t frame_len = 256;
  const std::size_t hop = 128;
  dsp::Spectrogram spec = dsp::stft(wf, frame_len, hop);

  const std::size_t expect_frames = 1 + (wf.samples.size() - frame_len) / hop;
  REQUIRE(spec.bins.rows == expect_frames);
  REQUIRE(spec.bins.cols == frame_len / 2 + 1);

  std::vector<double> window = dsp::hann_window(frame_len);
  for (std::size_t f = 0; f < expect_frames; ++f) {
    std::vector<double> frame(frame_len);
    for (std::size_t i = 0; i < frame_len; ++i)
      frame[i] = wf.samples[f * hop + i] * window[i];
    std::vector<double> oracle = naive_dft_mag(frame);
    for (std::size_t k = 0; k < oracle.size(); ++k) {
      CHECK(spec.bins.at(f, k) == doctest::Approx(oracle[k]).epsilon(1e-9));
    }
  }
}

TEST_CASE("stft of a bin-centered sine concentrates energy in that bin") {
  const std::size_t frame_len = 512;
  const std::size_t bin = 32;
  dsp::Waveform wf;
  wf.sample_rate = 16000;
  wf.samples.resize(frame_len);
  for (std::size_t i = 0; i < frame_len; ++i) {
    wf.samples[i] = std::sin(2.0 * std::numbers::pi * static_cast<double>(bin * i) /
                             static_cast<double>(frame_len));
  }
  dsp::Spectrogram spec = dsp::stft(wf, frame_len, 128);
  REQUIRE(spec.bins.rows == 1);

  std::size_t peak = 0;
  for (std::size_t k = 0; k < spec.bins.cols; ++k)
    if (spec.bins.at(0, k) > spec.bins.at(0, peak)) peak = k;
  CHECK(peak == bin);
  // The Hann window spreads energy into the two adjacent bins only; two bins
  // away the leakage must be far down.
  CHECK(spec.bins.at(0, bin + 2) < 1e-6 * spec.bins.at(0, bin));
}

TEST_CASE("stft rejects waveforms shorter than one frame") {
  dsp::Waveform wf;
  wf.samples.resize(100, 0.1);
  CHECK_THROWS(dsp::stft(wf, 256, 128));
}

TEST_CASE("hann window is periodic and symmetric around n/2") {
  std::vector<double> w = dsp::hann_window(8);
  REQUIRE(w.size() == 8);
  CHECK(w[0] == doctest::Approx(0.0).epsilon(1e-15));
  // Periodic form: w[i] = 0.5 - 0.5 cos(2 pi i / n).
  for (std::size_t i = 0; i < 8; ++i) {
    const double expect = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / 8.0);
    CHECK(w[i] == doctest::Approx(expect).epsilon(1e-12));
  }
  CHECK(w[3] == doctest::Approx(w[5]).epsilon(1e-12));
}

TEST_CASE("mel scale round-trips and is monotone") {
  for (double hz : {0.0, 100.0, 440.0, 1000.0, 4000.0, 7999.0}) {
    CHECK(dsp::mel_to_hz(dsp::hz_to_mel(hz)) == doctest::Approx(hz).epsilon(1e-9));
  }
  CHECK(dsp::hz_to_mel(1000.0) == doctest::Approx(1000.0).epsilon(1e-3));
  CHECK(dsp::hz_to_mel(200.0) < dsp::hz_to_mel(300.0));
}

TEST_CASE("mel filterbank rows are triangles with the right support") {
  const std::size_t n_mels = 40;
  const std::size_t n_freq = 257;
  dsp::MelFilterbank fb = dsp::make_mel_filterbank(n_mels, n_freq, 16000, 0.0, 8000.0);
  REQUIRE(fb.weights.rows == n_mels);
  REQUIRE(fb.weights.cols == n_freq);

  for (std::size_t m = 0; m < n_mels; ++m) {
    double peak = 0.0;
    double total = 0.0;
    bool rising = true;
    bool ok_shape = true;
    double prev = 0.0;
    for (std::size_t k = 0; k < n_freq; ++k) {
      const double w = fb.weights.at(m, k);
      CHECK(w >= 0.0);
      peak = std::max(peak, w);
      total += w;
      if (w < prev - 1e-12) rising = false;
      if (!rising && w > prev + 1e-12) ok_shape = false;
      prev = w;
    }
    CHECK(total > 0.0);            // no empty filters
    CHECK(peak <= 1.0 + 1e-12);    // unnormalized triangles peak at 1
    CHECK(ok_shape);               // one rise then one fall
  }

  // Adjacent filters overlap: each interior center carries weight in the
  // neighbor row as well.
  std::size_t overlaps = 0;
  for (std::size_t k = 0; k < n_freq; ++k) {
    if (fb.weights.at(10, k) > 0.0 && fb.weights.at(11, k) > 0.0) ++overlaps;
  }
  CHECK(overlaps > 0);
}

TEST_CASE("mel filterbank rejects unresolvable resolution") {
  CHECK_THROWS(dsp::make_mel_filterbank(200, 33, 16000, 0.0, 8000.0));
}

TEST_CASE("mel projection is the documented quadratic form") {
  Rng rng(202);
  dsp::Spectrogram spec;
  spec.frame_len = 16;
  spec.frame_hop = 8;
  spec.sample_rate = 16000;
  spec.bins = Matrix(3, 9);
  for (std::size_t i = 0; i < spec.bins.v.size(); ++i) spec.bins.v[i] = rng.uniform(0.0, 2.0);

  dsp::MelFilterbank fb = dsp::make_mel_filterbank(4, 9, 16000, 0.0, 8000.0);
  dsp::MelSpectrogram mel = dsp::mel_project(spec, fb);
  REQUIRE(mel.frames() == 3);
  REQUIRE(mel.n_mels() == 4);
  for (std::size_t t = 0; t < 3; ++t) {
    for (std::size_t m = 0; m < 4; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < 9; ++k)
        acc += spec.bins.at(t, k) * spec.bins.at(t, k) * fb.weights.at(m, k);
      CHECK(mel.bins.at(t, m) == doctest::Approx(acc).epsilon(1e-12));
    }
  }
}

TEST_CASE("log compression floors and exp expansion inverts") {
  dsp::MelSpectrogram mel;
  mel.sample_rate = 16000;
  mel.frame_hop = 128;
  mel.bins = Matrix(1, 4);
  mel.bins.v = {0.0, 1e-9, 1e-3, 2.5};

  dsp::MelSpectrogram lg = dsp::log_compress(mel, 1e-5);
  CHECK(lg.bins.v[0] == doctest::Approx(std::log(1e-5)).epsilon(1e-12));
  CHECK(lg.bins.v[1] == doctest::Approx(std::log(1e-5)).epsilon(1e-12));
  CHECK(lg.bins.v[2] == doctest::Approx(std::log(1e-3)).epsilon(1e-12));
  CHECK(lg.bins.v[3] == doctest::Approx(std::log(2.5)).epsilon(1e-12));

  dsp::MelSpectrogram back = dsp::exp_expand(lg);
  CHECK(back.bins.v[2] == doctest::Approx(1e-3).epsilon(1e-12));
  CHECK(back.bins.v[3] == doctest::Approx(2.5).epsilon(1e-12));
  CHECK_THROWS(dsp::log_compress(mel, 0.0));
}

TEST_CASE("rms matches the closed form for a sine") {
  std::vector<double> s(16000);
  for (std::size_t i = 0; i < s.size(); ++i)
    s[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 100.0 * static_cast<double>(i) / 16000.0);
  // Exactly 100 cycles, so the discrete mean square is the ideal a^2/2.
  CHECK(dsp::rms(s) == doctest::Approx(0.5 / std::sqrt(2.0)).epsilon(1e-9));
}

TEST_CASE("wav round-trip preserves quantized samples exactly") {
  Rng rng(203);
  dsp::Waveform wf;
  wf.sample_rate = 16000;
  wf.samples.resize(333);
  for (double& s : wf.samples) s = rng.uniform(-0.9, 0.9);

  auto path = (temp_dir() / "roundtrip.wav").string();
  dsp::write_wav(path, wf);
  dsp::Waveform back = dsp::read_wav(path);
  REQUIRE(back.samples.size() == wf.samples.size());
  CHECK(back.sample_rate == wf.sample_rate);
  for (std::size_t i = 0; i < wf.samples.size(); ++i) {
    const double q = std::round(wf.samples[i] * 32768.0) / 32768.0;
    CHECK(back.samples[i] == doctest::Approx(q).epsilon(1e-12));
  }
  // A second write/read of the already-quantized signal is bit-stable.
  auto path2 = (temp_dir() / "roundtrip2.wav").string();
  dsp::write_wav(path2, back);
  dsp::Waveform again = dsp::read_wav(path2);
  for (std::size_t i = 0; i < back.samples.size(); ++i) {
    CHECK(again.samples[i] == back.samples[i]);
  }
}

TEST_CASE("mix_at_snr hits the requested ratio exactly") {
  Rng rng(204);
  dsp::Waveform clean;
  clean.sample_rate = 16000;
  clean.samples.resize(4000);
  for (std::size_t i = 0; i < clean.samples.size(); ++i)
    clean.samples[i] = 0.3 * std::sin(2.0 * std::numbers::pi * 220.0 * i / 16000.0);

  dsp::Waveform noise;
  noise.sample_rate = 16000;
  noise.samples.resize(9000);
  for (double& s : noise.samples) s = rng.uniform(-0.4, 0.4);

  for (double snr : {-5.0, 0.0, 5.0, 12.5}) {
    dsp::MixResult mix = dsp::mix_at_snr(clean, noise, snr, rng);
    REQUIRE(mix.noisy.samples.size() == clean.samples.size());
    REQUIRE(mix.scaled_noise.samples.size() == clean.samples.size());
    const double measured =
        20.0 * std::log10(dsp::rms(clean.samples) / dsp::rms(mix.scaled_noise.samples));
    CHECK(measured == doctest::Approx(snr).epsilon(1e-9));
    for (std::size_t i = 0; i < clean.samples.size(); ++i) {
      CHECK(mix.noisy.samples[i] ==
            doctest::Approx(clean.samples[i] + mix.scaled_noise.samples[i]).epsilon(1e-12));
    }
    CHECK(mix.noise_offset + clean.samples.size() <= noise.samples.size());
  }
}

TEST_CASE("mix_at_snr rejects short or silent inputs") {
  Rng rng(205);
  dsp::Waveform clean;
  clean.samples.resize(100, 0.1);
  dsp::Waveform shorter;
  shorter.samples.resize(50, 0.1);
  CHECK_THROWS(dsp::mix_at_snr(clean, shorter, 0.0, rng));

  dsp::Waveform silent;
  silent.samples.resize(200, 0.0);
  CHECK_THROWS(dsp::mix_at_snr(clean, silent, 0.0, rng));
  CHECK_THROWS(dsp::mix_at_snr(silent, clean, 0.0, rng));
}

TEST_CASE("si_sdr_mel is scale invariant and clamps degenerate cases") {
  Rng rng(206);
  Matrix ref(5, 8);
  for (double& x : ref.v) x = rng.uniform(0.1, 2.0);

  // Any positive rescaling of the reference is a perfect estimate.
  Matrix scaled = ref;
  for (double& x : scaled.v) x *= 3.7;
  CHECK(dsp::si_sdr_mel(ref, scaled) == doctest::Approx(100.0));
  CHECK(dsp::si_sdr_mel(ref, ref) == doctest::Approx(100.0));

  // Orthogonal estimate carries no signal; the clamp floors it.
  Matrix junk(5, 8);
  for (double& x : junk.v) x = 0.0;
  CHECK(dsp::si_sdr_mel(ref, junk) == doctest::Approx(-100.0));
}

TEST_CASE("si_sdr_mel matches the projection formula on a known mixture") {
  Rng rng(207);
  Matrix ref(4, 6);
  Matrix noise(4, 6);
  for (double& x : ref.v) x = rng.uniform(-1.0, 1.0);
  for (double& x : noise.v) x = rng.uniform(-1.0, 1.0);

  Matrix est = ref;
  for (std::size_t i = 0; i < est.v.size(); ++i) est.v[i] += noise.v[i];

  // Project the estimate on the reference by hand.
  double dot = 0.0;
  double ref2 = 0.0;
  for (std::size_t i = 0; i < ref.v.size(); ++i) {
    dot += est.v[i] * ref.v[i];
    ref2 += ref.v[i] * ref.v[i];
  }
  const double alpha = dot / ref2;
  double sig = 0.0;
  double err = 0.0;
  for (std::size_t i = 0; i < ref.v.size(); ++i) {
    const double s = alpha * ref.v[i];
    const double e = est.v[i] - s;
    sig += s * s;
    err += e * e;
  }
  const double expect = 10.0 * std::log10(sig / err);
  CHECK(dsp::si_sdr_mel(ref, est) == doctest::Approx(expect).epsilon(1e-9));
}

TEST_CASE("wav_to_linear_mel agrees with the composed stages") {
  Rng rng(208);
  dsp::Waveform wf;
  wf.sample_rate = 16000;
  wf.samples.resize(1200);
  for (double& s : wf.samples) s = rng.uniform(-0.3, 0.3);

  dsp::MelSpectrogram direct = dsp::wav_to_linear_mel(wf, 512, 128, 40);
  dsp::Spectrogram spec = dsp::stft(wf, 512, 128);
  dsp::MelFilterbank fb = dsp::make_mel_filterbank(40, 257, 16000, 0.0, 8000.0);
  dsp::MelSpectrogram staged = dsp::mel_project(spec, fb);

  REQUIRE(direct.frames() == staged.frames());
  for (std::size_t i = 0; i < direct.bins.v.size(); ++i) {
    CHECK(direct.bins.v[i] == doctest::Approx(staged.bins.v[i]).epsilon(1e-12));
  }

  dsp::MelSpectrogram lg = dsp::wav_to_log_mel(wf, 512, 128, 40, 1e-5);
  dsp::MelSpectrogram staged_log = dsp::log_compress(staged, 1e-5);
  for (std::size_t i = 0; i < lg.bins.v.size(); ++i) {
    CHECK(lg.bins.v[i] == doctest::Approx(staged_log.bins.v[i]).epsilon(1e-12));
  }
}

}  // TEST_SUITE

}  // namespace
