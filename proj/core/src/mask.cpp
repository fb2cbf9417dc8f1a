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

#include "melmask/mask.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace melmask::mask {

namespace {
const double kLnClip = std::log(0.1);
}

DenoiseMask ideal_mask(const dsp::MelSpectrogram& clean_mel,
                       const dsp::MelSpectrogram& noise_mel) {
  require_same_shape(clean_mel.bins, noise_mel.bins, "ideal_mask");
  DenoiseMask out;
  out.kind = MaskKind::ideal;
  out.values = Matrix(clean_mel.bins.rows, clean_mel.bins.cols);
  for (std::size_t i = 0; i < out.values.v.size(); ++i) {
    const double es = clean_mel.bins.v[i];
    const double en = noise_mel.bins.v[i];
    if (es < 0.0 || en < 0.0) throw std::invalid_argument("ideal_mask: negative energy bin");
    const double e = es + en;
    out.values.v[i] = e > 0.0 ? es / e : 1.0;
  }
  return out;
}

DenoiseMask ideal_mask_from_mixture(const dsp::MelSpectrogram& clean_mel,
                                    const dsp::MelSpectrogram& mixture_mel) {
  require_same_shape(clean_mel.bins, mixture_mel.bins, "ideal_mask_from_mixture");
  DenoiseMask out;
  out.kind = MaskKind::ideal;
  out.values = Matrix(clean_mel.bins.rows, clean_mel.bins.cols);
  for (std::size_t i = 0; i < out.values.v.size(); ++i) {
    const double es = clean_mel.bins.v[i];
    const double e = mixture_mel.bins.v[i];
    if (es < 0.0 || e < 0.0)
      throw std::invalid_argument("ideal_mask_from_mixture: negative energy bin");
    out.values.v[i] = e > 0.0 ? std::clamp(es / e, 0.0, 1.0) : 1.0;
  }
  return out;
}

DenoiseMask clean_mask(std::size_t frames, std::size_t n_mels) {
  if (frames == 0 || n_mels == 0) throw std::invalid_argument("clean_mask: zero dimension");
  DenoiseMask out;
  out.kind = MaskKind::clean;
  out.values = Matrix::full(frames, n_mels, 1.0);
  return out;
}

dsp::MelSpectrogram apply_mask(const dsp::MelSpectrogram& mel, const DenoiseMask& m) {
  require_same_shape(mel.bins, m.values, "apply_mask");
  dsp::MelSpectrogram out = mel;
  for (std::size_t i = 0; i < out.bins.v.size(); ++i) out.bins.v[i] *= m.values.v[i];
  return out;
}

double mask_mse_loss(const dsp::MelSpectrogram& noisy, const DenoiseMask& m,
                     const dsp::MelSpectrogram& clean) {
  require_same_shape(noisy.bins, m.values, "mask_mse_loss");
  require_same_shape(noisy.bins, clean.bins, "mask_mse_loss");
  double acc = 0.0;
  for (std::size_t i = 0; i < noisy.bins.v.size(); ++i) {
    const double d = noisy.bins.v[i] * m.values.v[i] - clean.bins.v[i];
    acc += d * d;
  }
  return acc / static_cast<double>(noisy.bins.v.size());
}

double normalize_element(double m) {
  const double c = std::clamp(m, 0.1, 1.0);
  const double x = std::log(c);
  return -4.0 + 8.0 * (x - kLnClip) / (0.0 - kLnClip);
}

NormalizedNoiseRepresentation normalize_for_conditioning(const DenoiseMask& m) {
  NormalizedNoiseRepresentation out;
  out.values = Matrix(m.values.rows, m.values.cols);
  for (std::size_t i = 0; i < m.values.v.size(); ++i)
    out.values.v[i] = normalize_element(m.values.v[i]);
  return out;
}

}  // namespace melmask::mask
