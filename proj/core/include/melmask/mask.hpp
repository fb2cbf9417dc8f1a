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

#ifndef MELMASK_MASK_HPP_
#define MELMASK_MASK_HPP_

#include <cstddef>

#include "melmask/dsp.hpp"
#include "melmask/matrix.hpp"

namespace melmask::mask {

enum class MaskKind { ideal, predicted, clean };

// Per-bin speech fraction in [0, 1]. A clean mask is all ones.
struct DenoiseMask {
  Matrix values;  // frames x n_mels
  MaskKind kind = MaskKind::ideal;
};

// Mask after the clip / log / affine pipeline; values in [-4, 4].
struct NormalizedNoiseRepresentation {
  Matrix values;  // frames x n_mels
};

// M = E_s / (E_s + E_n) per bin; a bin with no energy at all gets mask 1
// (there is nothing to remove). Inputs are linear-domain mel energies.
DenoiseMask ideal_mask(const dsp::MelSpectrogram& clean_mel, const dsp::MelSpectrogram& noise_mel);

// Mixture-referenced variant: M = E_s / E_mix, clamped to [0, 1]. Phase
// interaction in the mixture STFT can push the raw ratio past 1, so this mode
// is for realism experiments; the additive form above is the oracle.
DenoiseMask ideal_mask_from_mixture(const dsp::MelSpectrogram& clean_mel,
                                    const dsp::MelSpectrogram& mixture_mel);

DenoiseMask clean_mask(std::size_t frames, std::size_t n_mels);

// Element-wise product S ⊙ M.
dsp::MelSpectrogram apply_mask(const dsp::MelSpectrogram& mel, const DenoiseMask& m);

// (Σ (S_noise ⊙ M − S_clean)²) / n over all TF bins.
double mask_mse_loss(const dsp::MelSpectrogram& noisy, const DenoiseMask& m,
                     const dsp::MelSpectrogram& clean);

// clip to [0.1, 1], natural log, affine to [-4, 4]:
// y = -4 + 8 (ln c − ln 0.1) / (0 − ln 0.1).
NormalizedNoiseRepresentation normalize_for_conditioning(const DenoiseMask& m);
double normalize_element(double m);

}  // namespace melmask::mask

#endif  // MELMASK_MASK_HPP_
