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

#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include <doctest.h>

#include "melmask/autodiff.hpp"
#include "melmask/enhancer.hpp"
#include "melmask/mask.hpp"
#include "melmask/params.hpp"
#include "melmask/gradcheck.hpp"
#include "melmask/rng.hpp"

namespace {

using melmask::Matrix;
using melmask::ParamStore;
using melmask::Rng;
using melmask::TapeBinding;
namespace ad = melmask::ad;
namespace dsp = melmask::dsp;
namespace enh = melmask::enhancer;

enh::EnhancerConfig tiny_config() {
  enh::EnhancerConfig cfg;
  cfg.n_mels = 6;
  cfg.conv_layers = 1;
  cfg.conv_channels = 8;
  cfg.conv_kernel = 3;
  cfg.dfsmn_layers = 1;
  cfg.dfsmn_channels = 8;
  cfg.lookback = 2;
  cfg.lookahead = 1;
  return cfg;
}

dsp::MelSpectrogram random_mel(std::size_t frames, std::size_t n_mels, Rng& rng) {
  dsp::MelSpectrogram mel;
  mel.sample_rate = 16000;
  mel.frame_hop = 128;
  mel.bins = Matrix(frames, n_mels);
  for (double& x : mel.bins.v) x = rng.uniform(0.01, 2.0);
  return mel;
}

std::string temp_path(const std::string& stem) {
  return std::string("enh_test_") + stem + ".ckpt";
}

TEST_SUITE("enhancer") {

TEST_CASE("dfsmn memory block matches the tap formula") {
  const std::size_t T = 6, C = 2;
  const std::size_t s1 = 1, s2 = 2;
  ad::Tensor h({T, C});
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t ch = 0; ch < C; ++ch)
      h.at(t, ch) = 0.1 * static_cast<double>(t + 1) + 0.7 * static_cast<double>(ch);
  ad::Tensor a({3, C});  // lookback taps a_0..a_2
  a.data() = {0.5, -0.2, 0.3, 0.1, -0.4, 0.25};
  ad::Tensor c({2, C});  // lookahead taps c_1..c_2
  c.data() = {0.6, -0.15, -0.35, 0.2};

  ad::Tape tape;
  ad::Value vh = tape.constant(h);
  ad::Value va = tape.constant(a);
  ad::Value vc = tape.constant(c);
  ad::Value out = enh::dfsmn_memory(tape, vh, va, vc, s1, s2);
  const ad::Tensor& got = tape.val(out);

  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t ch = 0; ch < C; ++ch) {
      double expect = h.at(t, ch);
      for (std::size_t i = 0; i < 3; ++i) {
        if (t < i * s1) break;
        expect += a.at(i, ch) * h.at(t - i * s1, ch);
      }
      for (std::size_t j = 1; j <= 2; ++j) {
        const std::size_t src = t + j * s2;
        if (src >= T) break;
        expect += c.at(j - 1, ch) * h.at(src, ch);
      }
      CHECK(got.at(t, ch) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("dfsmn memory gradients agree with finite differences") {
  Rng rng(401);
  std::vector<ad::Tensor> inputs = {ad::Tensor::uniform({5, 3}, 0.8, rng),
                                    ad::Tensor::uniform({2, 3}, 0.8, rng),
                                    ad::Tensor::uniform({1, 3}, 0.8, rng)};
  ad::Tensor weights = ad::Tensor::uniform({5, 3}, 1.0, rng);

  auto build = [&weights](ad::Tape& tape, const std::vector<ad::Value>& in) {
    ad::Value mem = enh::dfsmn_memory(tape, in[0], in[1], in[2], 2, 1);
    return tape.sum(tape.mul(mem, tape.constant(weights)));
  };
  ad::GradCheckReport r = ad::grad_check(build, inputs);
  INFO(r.summary());
  CHECK(r.max_rel_err < 1e-6);
}

TEST_CASE("dfsmn memory rejects bad operands") {
  ad::Tape tape;
  ad::Value h = tape.constant(ad::Tensor::zeros({4, 3}));
  ad::Value a = tape.constant(ad::Tensor::zeros({2, 3}));
  ad::Value c = tape.constant(ad::Tensor::zeros({1, 2}));  // channel mismatch
  CHECK_THROWS_AS(enh::dfsmn_memory(tape, h, a, c, 1, 1), std::invalid_argument);
  ad::Value c_ok = tape.constant(ad::Tensor::zeros({1, 3}));
  CHECK_THROWS_AS(enh::dfsmn_memory(tape, h, a, c_ok, 0, 1), std::invalid_argument);
}

TEST_CASE("untrained model predicts masks strictly inside (0, 1)") {
  Rng init(402);
  enh::EnhancerModel model(tiny_config(), init);
  Rng data(403);
  dsp::MelSpectrogram noisy = random_mel(9, 6, data);

  melmask::mask::DenoiseMask m = enh::enhance(model, noisy);
  CHECK(m.kind == melmask::mask::MaskKind::predicted);
  REQUIRE(m.values.rows == 9);
  REQUIRE(m.values.cols == 6);
  for (double x : m.values.v) {
    CHECK(x > 0.0);
    CHECK(x < 1.0);
  }
}

TEST_CASE("initialization and prediction are seed-deterministic") {
  Rng a1(404), a2(404), b(405);
  enh::EnhancerModel ma(tiny_config(), a1);
  enh::EnhancerModel mb(tiny_config(), a2);
  enh::EnhancerModel mc(tiny_config(), b);
  Rng data(406);
  dsp::MelSpectrogram noisy = random_mel(7, 6, data);

  const Matrix pa = enh::enhance(ma, noisy).values;
  const Matrix pb = enh::enhance(mb, noisy).values;
  const Matrix pc = enh::enhance(mc, noisy).values;
  CHECK(pa.v == pb.v);
  CHECK(pa.v != pc.v);
}

TEST_CASE("prediction at frame t only sees the configured context window") {
  // With no conv front-end and one DFSMN layer (lookback 2, lookahead 1,
  // stride 1), output row t depends on input rows [t-2, t+1] only.
  enh::EnhancerConfig cfg = tiny_config();
  cfg.conv_layers = 0;
  cfg.dfsmn_layers = 1;
  cfg.lookback = 2;
  cfg.lookahead = 1;
  Rng init(407);
  enh::EnhancerModel model(cfg, init);
  // Zero-initialized taps would hide the temporal paths; open them.
  for (double& x : model.params().get("dfsmn0.a").data()) x = 0.3;
  for (double& x : model.params().get("dfsmn0.c").data()) x = -0.2;

  Rng data(408);
  Matrix features(12, 6);
  for (double& x : features.v) x = data.uniform(-1.0, 1.0);
  Matrix perturbed = features;
  perturbed.at(11, 2) += 0.5;

  ad::Tape t1;
  TapeBinding p1(t1, model.params(), /*trainable=*/false);
  const Matrix m1 = t1.val(model.predict_mask(t1, p1, features)).to_matrix();
  ad::Tape t2;
  TapeBinding p2(t2, model.params(), /*trainable=*/false);
  const Matrix m2 = t2.val(model.predict_mask(t2, p2, perturbed)).to_matrix();

  bool tail_changed = false;
  for (std::size_t r = 0; r < 12; ++r) {
    for (std::size_t c = 0; c < 6; ++c) {
      if (r <= 9) {
        CHECK(m1.at(r, c) == m2.at(r, c));
      } else if (m1.at(r, c) != m2.at(r, c)) {
        tail_changed = true;
      }
    }
  }
  CHECK(tail_changed);
}

TEST_CASE("training reduces the masking loss on a learnable target") {
  Rng init(409);
  enh::EnhancerModel model(tiny_config(), init);
  Rng data(410);
  std::vector<enh::MelPair> dataset;
  for (int i = 0; i < 2; ++i) {
    dsp::MelSpectrogram noisy = random_mel(8, 6, data);
    dsp::MelSpectrogram clean = noisy;
    for (double& x : clean.bins.v) x *= 0.4;  // the optimal mask is 0.4
    dataset.emplace_back(noisy, clean);
  }

  Rng train(411);
  enh::EnhancerTrainResult r = enh::train_enhancer(model, dataset, 150, 2, 5e-3, train);
  REQUIRE(r.loss_curve.size() == 150);
  CHECK(r.loss_curve.back() < r.loss_curve.front());
  CHECK(r.loss_curve.back() < 0.5 * r.loss_curve.front());
}

TEST_CASE("training is deterministic for a fixed seed") {
  Rng data(412);
  std::vector<enh::MelPair> dataset;
  for (int i = 0; i < 3; ++i) {
    dsp::MelSpectrogram noisy = random_mel(6, 6, data);
    dsp::MelSpectrogram clean = noisy;
    for (double& x : clean.bins.v) x *= 0.1 + 0.3 * static_cast<double>(i);
    dataset.emplace_back(noisy, clean);
  }

  Rng i1(413), i2(413), i3(413);
  enh::EnhancerModel m1(tiny_config(), i1);
  enh::EnhancerModel m2(tiny_config(), i2);
  enh::EnhancerModel m3(tiny_config(), i3);
  Rng t1(414), t2(414), t3(415);
  const auto r1 = enh::train_enhancer(m1, dataset, 40, 1, 1e-3, t1);
  const auto r2 = enh::train_enhancer(m2, dataset, 40, 1, 1e-3, t2);
  const auto r3 = enh::train_enhancer(m3, dataset, 40, 1, 1e-3, t3);

  CHECK(r1.loss_curve == r2.loss_curve);
  CHECK(r1.loss_curve != r3.loss_curve);
  for (std::size_t i : m1.params().trainable_indices()) {
    CHECK(m1.params().at(i).data() == m2.params().at(i).data());
  }
}

TEST_CASE("checkpoint round-trip preserves config, meta, and predictions") {
  Rng init(416);
  enh::EnhancerModel model(tiny_config(), init);
  Rng data(417);
  dsp::MelSpectrogram noisy = random_mel(5, 6, data);
  const Matrix before = enh::enhance(model, noisy).values;

  const std::string path = temp_path("roundtrip");
  model.save(path, {{"note", "hello"}});
  enh::EnhancerModel loaded = enh::EnhancerModel::load(path);
  std::remove(path.c_str());

  CHECK(loaded.config().n_mels == model.config().n_mels);
  CHECK(loaded.config().dfsmn_layers == model.config().dfsmn_layers);
  CHECK(loaded.params().meta("note") == "hello");
  CHECK(enh::enhance(loaded, noisy).values.v == before.v);
}

TEST_CASE("load rejects checkpoints from other model kinds") {
  ParamStore store;
  store.create("dummy", ad::Tensor::zeros({1, 1}));
  store.set_meta("model", "tts");
  const std::string path = temp_path("wrong_kind");
  store.save(path);
  CHECK_THROWS_AS(enh::EnhancerModel::load(path), std::runtime_error);
  std::remove(path.c_str());
}

TEST_CASE("construction rejects stores with missing or misshapen parameters") {
  Rng init(418);
  enh::EnhancerConfig small = tiny_config();
  enh::EnhancerModel donor(small, init);

  enh::EnhancerConfig bigger = small;
  bigger.dfsmn_layers = 2;  // wants dfsmn1.* that the donor store lacks
  CHECK_THROWS_AS(enh::EnhancerModel(bigger, donor.params()), std::runtime_error);

  enh::EnhancerConfig wider = small;
  wider.dfsmn_channels = 16;  // same names, wrong shapes
  CHECK_THROWS_AS(enh::EnhancerModel(wider, donor.params()), std::runtime_error);
}

TEST_CASE("config validation rejects degenerate settings") {
  Rng rng(419);
  enh::EnhancerConfig even = tiny_config();
  even.conv_kernel = 4;
  CHECK_THROWS_AS(enh::EnhancerModel(even, rng), std::invalid_argument);

  enh::EnhancerConfig stride0 = tiny_config();
  stride0.stride1 = 0;
  CHECK_THROWS_AS(enh::EnhancerModel(stride0, rng), std::invalid_argument);

  enh::EnhancerConfig nomels = tiny_config();
  nomels.n_mels = 0;
  CHECK_THROWS_AS(enh::EnhancerModel(nomels, rng), std::invalid_argument);
}

TEST_CASE("prediction and training validate their inputs") {
  Rng init(420);
  enh::EnhancerModel model(tiny_config(), init);
  Rng data(421);

  dsp::MelSpectrogram wrong_cols = random_mel(4, 5, data);
  CHECK_THROWS_AS(enh::enhance(model, wrong_cols), std::invalid_argument);

  Rng train(422);
  std::vector<enh::MelPair> empty;
  CHECK_THROWS_AS(enh::train_enhancer(model, empty, 1, 1, 1e-3, train),
                  std::invalid_argument);

  std::vector<enh::MelPair> mismatched = {{random_mel(4, 6, data), random_mel(5, 6, data)}};
  CHECK_THROWS_AS(enh::train_enhancer(model, mismatched, 1, 1, 1e-3, train),
                  std::invalid_argument);

  std::vector<enh::MelPair> ok = {{random_mel(4, 6, data), random_mel(4, 6, data)}};
  CHECK_THROWS_AS(enh::train_enhancer(model, ok, 1, 0, 1e-3, train), std::invalid_argument);
}

}  // TEST_SUITE

}  // namespace
