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

#include "melmask/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include "melmask/io.hpp"

namespace melmask::dsp {

namespace {

constexpr double kPi = std::numbers::pi;

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey; x.size() must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(x[i], x[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * kPi / static_cast<double>(len);
    const std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = x[i + k];
        const std::complex<double> v = x[i + k + len / 2] * w;
        x[i + k] = u + v;
        x[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
}

// O(n^2) fallback for non-power-of-two frame lengths.
std::vector<std::complex<double>> dft_naive(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * kPi * static_cast<double>(k) * static_cast<double>(t) /
                         static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

std::uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("unexpected end of file while reading u16");
  return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

void put_u16(std::ostream& os, std::uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

}  // namespace

Waveform read_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char tag[4];
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "RIFF", 4) != 0)
    throw std::runtime_error("not a RIFF file: " + path);
  io::get_u32(is);  // riff size, unused
  is.read(tag, 4);
  if (!is || std::memcmp(tag, "WAVE", 4) != 0)
    throw std::runtime_error("not a WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t channels = 0, bits = 0;
  std::uint32_t sample_rate = 0;
  std::vector<char> data;
  while (is.read(tag, 4)) {
    const std::uint32_t chunk_size = io::get_u32(is);
    if (std::memcmp(tag, "fmt ", 4) == 0) {
      const std::uint16_t format = get_u16(is);
      channels = get_u16(is);
      sample_rate = io::get_u32(is);
      io::get_u32(is);  // byte rate
      get_u16(is);      // block align
      bits = get_u16(is);
      if (chunk_size > 16) is.ignore(chunk_size - 16);
      if (format != 1) throw std::runtime_error("unsupported WAV encoding in " + path);
      have_fmt = true;
    } else if (std::memcmp(tag, "data", 4) == 0) {
      data.resize(chunk_size);
      is.read(data.data(), chunk_size);
      if (!is) throw std::runtime_error("truncated data chunk in " + path);
      break;
    } else {
      // Skip other chunks; pad byte keeps chunks 16-bit aligned.
      is.ignore(chunk_size + (chunk_size & 1));
    }
  }
  if (!have_fmt) throw std::runtime_error("missing fmt chunk in " + path);
  if (channels != 1) throw std::runtime_error("expected mono WAV: " + path);
  if (bits != 16) throw std::runtime_error("expected 16-bit WAV: " + path);
  if (data.size() < 2) throw std::runtime_error("zero-length data chunk in " + path);

  Waveform wf;
  wf.sample_rate = sample_rate;
  const std::size_t n = data.size() / 2;
  wf.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::int16_t s = static_cast<std::int16_t>(
        static_cast<unsigned char>(data[2 * i]) |
        (static_cast<unsigned char>(data[2 * i + 1]) << 8));
    wf.samples[i] = static_cast<double>(s) / 32768.0;
  }
  return wf;
}

void write_wav(const std::string& path, const Waveform& wf) {
  if (wf.samples.empty()) throw std::invalid_argument("write_wav: empty waveform");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  const std::uint32_t data_size = static_cast<std::uint32_t>(wf.samples.size() * 2);
  os.write("RIFF", 4);
  io::put_u32(os, 36 + data_size);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  io::put_u32(os, 16);
  put_u16(os, 1);  // PCM
  put_u16(os, 1);  // mono
  io::put_u32(os, wf.sample_rate);
  io::put_u32(os, wf.sample_rate * 2);
  put_u16(os, 2);
  put_u16(os, 16);
  os.write("data", 4);
  io::put_u32(os, data_size);
  for (double x : wf.samples) {
    long q = std::lrint(x * 32768.0);
    q = std::clamp(q, -32768L, 32767L);
    put_u16(os, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

double rms(const std::vector<double>& samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (double x : samples) acc += x * x;
  return std::sqrt(acc / static_cast<double>(samples.size()));
}

std::vector<double> hann_window(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(n));
  return w;
}

Spectrogram stft(const Waveform& wf, std::size_t frame_len, std::size_t frame_hop) {
  if (frame_hop < 1 || frame_len < frame_hop)
    throw std::invalid_argument("stft: need frame_len >= frame_hop >= 1");
  if (wf.samples.size() < frame_len)
    throw std::invalid_argument("stft: waveform shorter than one frame");
  const std::size_t n_frames = 1 + (wf.samples.size() - frame_len) / frame_hop;
  const std::size_t n_freq = frame_len / 2 + 1;
  const std::vector<double> window = hann_window(frame_len);

  Spectrogram out;
  out.bins = Matrix(n_frames, n_freq);
  out.frame_len = frame_len;
  out.frame_hop = frame_hop;
  out.sample_rate = wf.sample_rate;

  std::vector<double> frame(frame_len);
  std::vector<std::complex<double>> buf(frame_len);
  for (std::size_t t = 0; t < n_frames; ++t) {
    const std::size_t start = t * frame_hop;
    for (std::size_t i = 0; i < frame_len; ++i) frame[i] = wf.samples[start + i] * window[i];
    if (is_power_of_two(frame_len)) {
      for (std::size_t i = 0; i < frame_len; ++i) buf[i] = std::complex<double>(frame[i], 0.0);
      fft_radix2(buf);
      for (std::size_t k = 0; k < n_freq; ++k) out.bins.at(t, k) = std::abs(buf[k]);
    } else {
      const auto spec = dft_naive(frame);
      for (std::size_t k = 0; k < n_freq; ++k) out.bins.at(t, k) = std::abs(spec[k]);
    }
  }
  return out;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MelFilterbank make_mel_filterbank(std::size_t n_mels, std::size_t n_freq,
                                  std::uint32_t sample_rate, double f_min, double f_max) {
  if (n_mels == 0 || n_freq < 2) throw std::invalid_argument("make_mel_filterbank: bad sizes");
  if (!(f_min >= 0.0) || !(f_max > f_min))
    throw std::invalid_argument("make_mel_filterbank: need 0 <= f_min < f_max");
  const double mel_lo = hz_to_mel(f_min);
  const double mel_hi = hz_to_mel(f_max);
  std::vector<double> edges(n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                      static_cast<double>(n_mels + 1));

  // One-sided bin k sits at k * sr / frame_len; frame_len = 2 * (n_freq - 1).
  const double bin_hz = static_cast<double>(sample_rate) / (2.0 * static_cast<double>(n_freq - 1));

  MelFilterbank fb;
  fb.weights = Matrix(n_mels, n_freq);
  fb.f_min = f_min;
  fb.f_max = f_max;
  for (std::size_t m = 0; m < n_mels; ++m) {
    const double lo = edges[m], mid = edges[m + 1], hi = edges[m + 2];
    bool nonzero = false;
    for (std::size_t k = 0; k < n_freq; ++k) {
      const double f = bin_hz * static_cast<double>(k);
      double w = 0.0;
      if (f > lo && f < hi) {
        w = f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
      }
      fb.weights.at(m, k) = w;
      nonzero = nonzero || w > 0.0;
    }
    if (!nonzero)
      throw std::invalid_argument("make_mel_filterbank: filter " + std::to_string(m) +
                                  " covers no FFT bin; lower n_mels or raise frame_len");
  }
  return fb;
}

MelSpectrogram mel_project(const Spectrogram& spec, const MelFilterbank& fb) {
  if (spec.bins.cols != fb.weights.cols)
    throw std::invalid_argument("mel_project: freq dimension mismatch");
  const std::size_t n_frames = spec.bins.rows;
  const std::size_t n_freq = spec.bins.cols;
  const std::size_t n_mels = fb.weights.rows;
  MelSpectrogram out;
  out.bins = Matrix(n_frames, n_mels);
  out.sample_rate = spec.sample_rate;
  out.frame_hop = spec.frame_hop;
  for (std::size_t t = 0; t < n_frames; ++t) {
    for (std::size_t m = 0; m < n_mels; ++m) {
      double acc = 0.0;
      for (std::size_t k = 0; k < n_freq; ++k) {
        const double mag = spec.bins.at(t, k);
        acc += mag * mag * fb.weights.at(m, k);
      }
      out.bins.at(t, m) = acc;
    }
  }
  return out;
}

MelSpectrogram log_compress(const MelSpectrogram& mel, double floor) {
  if (!(floor > 0.0)) throw std::invalid_argument("log_compress: floor must be positive");
  MelSpectrogram out = mel;
  for (double& x : out.bins.v) x = std::log(std::max(x, floor));
  return out;
}

MelSpectrogram exp_expand(const MelSpectrogram& log_mel) {
  MelSpectrogram out = log_mel;
  for (double& x : out.bins.v) x = std::exp(x);
  return out;
}

MelSpectrogram wav_to_linear_mel(const Waveform& wf, std::size_t frame_len,
                                 std::size_t frame_hop, std::size_t n_mels) {
  const Spectrogram spec = stft(wf, frame_len, frame_hop);
  const MelFilterbank fb = make_mel_filterbank(n_mels, frame_len / 2 + 1, wf.sample_rate, 0.0,
                                               static_cast<double>(wf.sample_rate) / 2.0);
  return mel_project(spec, fb);
}

MelSpectrogram wav_to_log_mel(const Waveform& wf, std::size_t frame_len, std::size_t frame_hop,
                              std::size_t n_mels, double log_floor) {
  return log_compress(wav_to_linear_mel(wf, frame_len, frame_hop, n_mels), log_floor);
}

MixResult mix_at_snr(const Waveform& clean, const Waveform& noise, double snr_db, Rng& rng) {
  if (clean.sample_rate != noise.sample_rate)
    throw std::invalid_argument("mix_at_snr: sample rate mismatch");
  if (noise.samples.size() < clean.samples.size())
    throw std::invalid_argument("mix_at_snr: noise shorter than clean signal");
  const std::size_t span = noise.samples.size() - clean.samples.size() + 1;
  const std::size_t offset = static_cast<std::size_t>(rng.below(span));

  std::vector<double> crop(noise.samples.begin() + static_cast<std::ptrdiff_t>(offset),
                           noise.samples.begin() +
                               static_cast<std::ptrdiff_t>(offset + clean.samples.size()));
  const double rms_clean = rms(clean.samples);
  const double rms_noise = rms(crop);
  if (rms_clean < kSilenceRms) throw std::invalid_argument("mix_at_snr: silent clean signal");
  if (rms_noise < kSilenceRms) throw std::invalid_argument("mix_at_snr: silent noise crop");
  const double gain = rms_clean / (rms_noise * std::pow(10.0, snr_db / 20.0));

  MixResult out;
  out.noise_offset = offset;
  out.gain = gain;
  out.scaled_noise.sample_rate = clean.sample_rate;
  out.scaled_noise.samples.resize(crop.size());
  out.noisy.sample_rate = clean.sample_rate;
  out.noisy.samples.resize(clean.samples.size());
  for (std::size_t i = 0; i < crop.size(); ++i) {
    out.scaled_noise.samples[i] = gain * crop[i];
    out.noisy.samples[i] = clean.samples[i] + out.scaled_noise.samples[i];
  }
  return out;
}

double si_sdr_mel(const Matrix& reference, const Matrix& estimate) {
  require_same_shape(reference, estimate, "si_sdr_mel");
  double rr = 0.0, er = 0.0;
  for (std::size_t i = 0; i < reference.v.size(); ++i) {
    rr += reference.v[i] * reference.v[i];
    er += estimate.v[i] * reference.v[i];
  }
  if (rr == 0.0) throw std::invalid_argument("si_sdr_mel: all-zero reference");
  const double alpha = er / rr;
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < reference.v.size(); ++i) {
    const double target = alpha * reference.v[i];
    const double resid = target - estimate.v[i];
    num += target * target;
    den += resid * resid;
  }
  if (num == 0.0) return -100.0;
  if (den == 0.0) return 100.0;
  return std::clamp(10.0 * std::log10(num / den), -100.0, 100.0);
}

}  // namespace melmask::dsp
