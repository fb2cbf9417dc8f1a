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

#ifndef MELMASK_DSP_HPP_
#define MELMASK_DSP_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "melmask/matrix.hpp"
#include "melmask/rng.hpp"

namespace melmask::dsp {

// Below this RMS a signal counts as silent; mixing with it is refused.
inline constexpr double kSilenceRms = 1e-9;
// Log-compression floor; ln(1e-5) is the "silence" value of log-mel space.
inline constexpr double kLogFloor = 1e-5;

struct Waveform {
  std::vector<double> samples;  // amplitudes in [-1, 1]
  std::uint32_t sample_rate = 16000;
};

struct Spectrogram {
  Matrix bins;  // frames x freq, magnitudes
  std::size_t frame_len = 0;
  std::size_t frame_hop = 0;
  std::uint32_t sample_rate = 0;
};

struct MelSpectrogram {
  Matrix bins;  // frames x n_mels; linear energies or log values by context
  std::uint32_t sample_rate = 0;
  std::size_t frame_hop = 0;

  std::size_t frames() const { return bins.rows; }
  std::size_t n_mels() const { return bins.cols; }
};

struct MelFilterbank {
  Matrix weights;  // n_mels x freq
  double f_min = 0.0;
  double f_max = 0.0;
};

// 16-bit PCM mono RIFF/WAVE. Amplitudes scale by 1/32768 on read; writing
// rounds to the nearest step and clamps to the int16 range.
Waveform read_wav(const std::string& path);
void write_wav(const std::string& path, const Waveform& wf);

double rms(const std::vector<double>& samples);

// Periodic Hann window of length n.
std::vector<double> hann_window(std::size_t n);

// Magnitude STFT. frames = 1 + floor((len - frame_len) / frame_hop), no end
// padding; freq = frame_len/2 + 1 one-sided bins. Throws if the waveform is
// shorter than one frame.
Spectrogram stft(const Waveform& wf, std::size_t frame_len, std::size_t frame_hop);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Triangular filters on the HTK mel scale, area-unnormalized. n_freq is the
// one-sided bin count (frame_len/2 + 1). Throws if any filter row ends up
// empty (mel resolution finer than the FFT grid).
MelFilterbank make_mel_filterbank(std::size_t n_mels, std::size_t n_freq,
                                  std::uint32_t sample_rate, double f_min, double f_max);

// Power-domain projection: mel[t][m] = sum_f mag[t][f]^2 * weights[m][f].
MelSpectrogram mel_project(const Spectrogram& spec, const MelFilterbank& fb);

// Each bin becomes ln(max(bin, floor)); floor must be positive.
MelSpectrogram log_compress(const MelSpectrogram& mel, double floor = kLogFloor);
// Inverse of log_compress up to the floor: bin = exp(value).
MelSpectrogram exp_expand(const MelSpectrogram& log_mel);

// stft + mel_project + log_compress with one filterbank build.
MelSpectrogram wav_to_log_mel(const Waveform& wf, std::size_t frame_len, std::size_t frame_hop,
                              std::size_t n_mels, double log_floor = kLogFloor);
MelSpectrogram wav_to_linear_mel(const Waveform& wf, std::size_t frame_len,
                                 std::size_t frame_hop, std::size_t n_mels);

struct MixResult {
  Waveform noisy;
  Waveform scaled_noise;
  std::size_t noise_offset = 0;
  double gain = 0.0;
};

// Crops noise at a seeded offset, scales it so that
// 10*log10(||clean||^2 / ||g*noise||^2) = snr_db exactly, and adds it to the
// clean signal. Requires noise at least as long as clean and both nonsilent.
MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db, Rng& rng);

// Scale-invariant SDR over flattened mel grids, no mean removal, clamped to
// [-100, 100] dB. Reference must not be all-zero.
double si_sdr_mel(const Matrix& reference, const Matrix& estimate);

}  // namespace melmask::dsp

#endif  // MELMASK_DSP_HPP_
