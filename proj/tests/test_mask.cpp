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
#include <vector>

#include <doctest.h>

#include "melmask/dsp.hpp"
#include "melmask/mask.hpp"
#include "melmask/rng.hpp"

namespace {

using melmask::Matrix;
using melmask::Rng;
namespace dsp = melmask::dsp;
namespace mask = melmask::mask;

dsp::MelSpectrogram random_mel(std::size_t frames, std::size_t n_mels, Rng& rng, double lo,
                               double hi) {
  dsp::MelSpectrogram mel;
  mel.sample_rate = 16000;
  mel.frame_hop = 128;
  mel.bins = Matrix(frames, n_mels);
  for (double& x : mel.bins.v) x = rng.uniform(lo, hi);
  return mel;
}

TEST_SUITE("mask") {

TEST_CASE("ideal mask is the energy ratio bin by bin") {
  Rng rng(301);
  dsp::MelSpectrogram clean = random_mel(6, 10, rng, 0.0, 3.0);
  dsp::MelSpectrogram noise = random_mel(6, 10, rng, 0.0, 3.0);

  mask::DenoiseMask m = mask::ideal_mask(clean, noise);
  REQUIRE(m.values.rows == 6);
  REQUIRE(m.values.cols == 10);
  for (std::size_t i = 0; i < m.values.v.size(); ++i) {
    const double s = clean.bins.v[i];
    const double n = noise.bins.v[i];
    const double expect = (s + n) > 0.0 ? s / (s + n) : 1.0;
    CHECK(m.values.v[i] == doctest::Approx(expect).epsilon(1e-12));
    CHECK(m.values.v[i] >= 0.0);
    CHECK(m.values.v[i] <= 1.0);
  }
}

TEST_CASE("ideal mask edge cases: silence, pure speech, pure noise") {
  dsp::MelSpectrogram clean;
  clean.bins = Matrix(1, 3);
  clean.bins.v = {0.0, 2.0, 0.0};
  dsp::MelSpectrogram noise;
  noise.bins = Matrix(1, 3);
  noise.bins.v = {0.0, 0.0, 1.5};

  mask::DenoiseMask m = mask::ideal_mask(clean, noise);
  CHECK(m.values.v[0] == doctest::Approx(1.0));  // nothing to remove
  CHECK(m.values.v[1] == doctest::Approx(1.0));  // pure speech passes
  CHECK(m.values.v[2] == doctest::Approx(0.0));  // pure noise is removed
}

TEST_CASE("ideal mask reconstructs the clean mel from the additive mixture") {
  Rng rng(302);
  dsp::MelSpectrogram clean = random_mel(8, 12, rng, 0.01, 4.0);
  dsp::MelSpectrogram noise = random_mel(8, 12, rng, 0.01, 4.0);

  dsp::MelSpectrogram noisy = clean;
  for (std::size_t i = 0; i < noisy.bins.v.size(); ++i) noisy.bins.v[i] += noise.bins.v[i];

  mask::DenoiseMask m = mask::ideal_mask(clean, noise);
  dsp::MelSpectrogram rec = mask::apply_mask(noisy, m);
  for (std::size_t i = 0; i < rec.bins.v.size(); ++i) {
    CHECK(rec.bins.v[i] ==
          doctest::Approx(clean.bins.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("mixture-referenced mask clamps phase overshoot") {
  dsp::MelSpectrogram clean;
  clean.bins = Matrix(1, 2);
  clean.bins.v = {2.0, 1.0};
  dsp::MelSpectrogram mixture;
  mixture.bins = Matrix(1, 2);
  // First bin suffered destructive interference: mixture < clean.
  mixture.bins.v = {1.5, 4.0};

  mask::DenoiseMask m = mask::ideal_mask_from_mixture(clean, mixture);
  CHECK(m.values.v[0] == doctest::Approx(1.0));
  CHECK(m.values.v[1] == doctest::Approx(0.25));
}

TEST_CASE("clean mask is all ones") {
  mask::DenoiseMask m = mask::clean_mask(4, 5);
  REQUIRE(m.values.rows == 4);
  REQUIRE(m.values.cols == 5);
  for (double x : m.values.v) CHECK(x == 1.0);
}

TEST_CASE("apply_mask is the elementwise product") {
  Rng rng(303);
  dsp::MelSpectrogram mel = random_mel(3, 4, rng, 0.0, 2.0);
  mask::DenoiseMask m;
  m.values = Matrix(3, 4);
  for (double& x : m.values.v) x = rng.uniform(0.0, 1.0);

  dsp::MelSpectrogram out = mask::apply_mask(mel, m);
  for (std::size_t i = 0; i < out.bins.v.size(); ++i) {
    CHECK(out.bins.v[i] == doctest::Approx(mel.bins.v[i] * m.values.v[i]).epsilon(1e-12));
  }
  CHECK(out.sample_rate == mel.sample_rate);
  CHECK(out.frame_hop == mel.frame_hop);
}

TEST_CASE("mask_mse_loss matches the direct sum") {
  Rng rng(304);
  dsp::MelSpectrogram noisy = random_mel(5, 6, rng, 0.0, 2.0);
  dsp::MelSpectrogram clean = random_mel(5, 6, rng, 0.0, 2.0);
  mask::DenoiseMask m;
  m.values = Matrix(5, 6);
  for (double& x : m.values.v) x = rng.uniform(0.0, 1.0);

  double acc = 0.0;
  for (std::size_t i = 0; i < noisy.bins.v.size(); ++i) {
    const double d = noisy.bins.v[i] * m.values.v[i] - clean.bins.v[i];
    acc += d * d;
  }
  acc /= static_cast<double>(noisy.bins.v.size());
  CHECK(mask::mask_mse_loss(noisy, m, clean) == doctest::Approx(acc).epsilon(1e-12));
}

TEST_CASE("conditioning normalization hits the documented anchor points") {
  // The affine map sends the clip ceiling to +4, the clip floor to -4, and
  // the geometric midpoint sqrt(0.1) to exactly 0.
  CHECK(std::fabs(mask::normalize_element(1.0) - 4.0) < 1e-9);
  CHECK(std::fabs(mask::normalize_element(0.1) - (-4.0)) < 1e-9);
  CHECK(std::fabs(mask::normalize_element(std::sqrt(0.1))) < 1e-9);
  // Values past the clip range saturate.
  CHECK(mask::normalize_element(1.7) == doctest::Approx(4.0));
  CHECK(mask::normalize_element(0.01) == doctest::Approx(-4.0));
  CHECK(mask::normalize_element(0.0) == doctest::Approx(-4.0));
}

TEST_CASE("conditioning normalization is monotone and matches the closed form") {
  Rng rng(305);
  double prev_in = 0.1;
  double prev_out = mask::normalize_element(prev_in);
  for (int i = 1; i <= 100; ++i) {
    const double c = 0.1 + 0.9 * static_cast<double>(i) / 100.0;
    const double y = mask::normalize_element(c);
    const double expect = -4.0 + 8.0 * (std::log(c) - std::log(0.1)) / (0.0 - std::log(0.1));
    CHECK(y == doctest::Approx(expect).epsilon(1e-12));
    CHECK(y >= prev_out);
    prev_in = c;
    prev_out = y;
  }

  mask::DenoiseMask m;
  m.values = Matrix(2, 3);
  m.values.v = {1.0, 0.5, 0.1, 0.99, 0.2, 0.0};
  mask::NormalizedNoiseRepresentation rep = mask::normalize_for_conditioning(m);
  for (std::size_t i = 0; i < m.values.v.size(); ++i) {
    CHECK(rep.values.v[i] == doctest::Approx(mask::normalize_element(m.values.v[i])));
    CHECK(rep.values.v[i] >= -4.0);
    CHECK(rep.values.v[i] <= 4.0);
  }
}

TEST_CASE("shape mismatches are rejected") {
  Rng rng(306);
  dsp::MelSpectrogram a = random_mel(3, 4, rng, 0.0, 1.0);
  dsp::MelSpectrogram b = random_mel(3, 5, rng, 0.0, 1.0);
  CHECK_THROWS(mask::ideal_mask(a, b));

  mask::DenoiseMask m;
  m.values = Matrix(2, 4);
  CHECK_THROWS(mask::apply_mask(a, m));
}

}  // TEST_SUITE

}  // namespace
