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
#include <filesystem>
#include <vector>

#include <doctest.h>

#include "melmask/dsp.hpp"
#include "melmask/rng.hpp"
#include "melmask/speaker.hpp"

namespace {

using melmask::Matrix;
using melmask::Rng;
namespace dsp = melmask::dsp;
namespace speaker = melmask::speaker;

dsp::MelSpectrogram random_log_mel(std::size_t frames, std::size_t n_mels, Rng& rng) {
  dsp::MelSpectrogram mel;
  mel.sample_rate = 16000;
  mel.frame_hop = 128;
  mel.bins = Matrix(frames, n_mels);
  for (double& x : mel.bins.v) x = rng.uniform(-11.5, 1.0);
  return mel;
}

double norm(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x * x;
  return std::sqrt(acc);
}

TEST_SUITE("speaker") {

TEST_CASE("toy_embed is deterministic and unit norm") {
  Rng rng(501);
  dsp::MelSpectrogram mel = random_log_mel(20, 40, rng);

  speaker::SpeakerEmbedding a = speaker::toy_embed(mel, 7777, 32);
  speaker::SpeakerEmbedding b = speaker::toy_embed(mel, 7777, 32);
  REQUIRE(a.v.size() == 32);
  CHECK(norm(a.v) == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);

  // A different projection seed gives a genuinely different embedding.
  speaker::SpeakerEmbedding c = speaker::toy_embed(mel, 1234, 32);
  double max_diff = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i)
    max_diff = std::max(max_diff, std::fabs(a.v[i] - c.v[i]));
  CHECK(max_diff > 1e-3);
}

TEST_CASE("toy_embed depends on the input statistics, not frame order noise") {
  // Two grids with identical per-channel mean and std must embed identically;
  // the stand-in encoder sees only those statistics.
  Matrix bins(4, 2);
  bins.v = {0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0};
  dsp::MelSpectrogram mel;
  mel.bins = bins;

  Matrix permuted(4, 2);
  // Swap frames 0 and 2, and 1 and 3: same column statistics.
  permuted.v = {4.0, 5.0, 6.0, 7.0, 0.0, 1.0, 2.0, 3.0};
  dsp::MelSpectrogram mel2;
  mel2.bins = permuted;

  speaker::SpeakerEmbedding a = speaker::toy_embed(mel, 42, 16);
  speaker::SpeakerEmbedding b = speaker::toy_embed(mel2, 42, 16);
  for (std::size_t i = 0; i < a.v.size(); ++i) {
    CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-12));
  }
}

TEST_CASE("toy_embed requires at least two frames") {
  Rng rng(502);
  dsp::MelSpectrogram one = random_log_mel(1, 8, rng);
  CHECK_THROWS(speaker::toy_embed(one, 1, 8));
}

TEST_CASE("cosine similarity matches the dot product on unit vectors") {
  speaker::SpeakerEmbedding a;
  a.v = {1.0, 0.0, 0.0};
  speaker::SpeakerEmbedding b;
  b.v = {0.0, 1.0, 0.0};
  speaker::SpeakerEmbedding c;
  c.v = {-1.0, 0.0, 0.0};

  CHECK(speaker::cosine_similarity(a, a) == doctest::Approx(1.0));
  CHECK(speaker::cosine_similarity(a, b) == doctest::Approx(0.0));
  CHECK(speaker::cosine_similarity(a, c) == doctest::Approx(-1.0));

  const double inv = 1.0 / std::sqrt(2.0);
  speaker::SpeakerEmbedding d;
  d.v = {inv, inv, 0.0};
  CHECK(speaker::cosine_similarity(a, d) == doctest::Approx(inv).epsilon(1e-12));
}

TEST_CASE("centroid is the normalized vector sum") {
  speaker::SpeakerEmbedding a;
  a.v = {1.0, 0.0};
  speaker::SpeakerEmbedding b;
  b.v = {0.0, 1.0};

  speaker::SpeakerEmbedding mu = speaker::centroid({a, b});
  const double inv = 1.0 / std::sqrt(2.0);
  CHECK(mu.v[0] == doctest::Approx(inv).epsilon(1e-12));
  CHECK(mu.v[1] == doctest::Approx(inv).epsilon(1e-12));
  CHECK(mu.level == speaker::SpeakerEmbedding::Level::speaker);

  CHECK_THROWS(speaker::centroid({}));

  speaker::SpeakerEmbedding neg;
  neg.v = {-1.0, 0.0};
  CHECK_THROWS(speaker::centroid({a, neg}));  // zero sum has no direction
}

TEST_CASE("self-similarity of a centroid is exactly one") {
  Rng rng(503);
  std::vector<speaker::SpeakerEmbedding> embs;
  for (int i = 0; i < 6; ++i) {
    embs.push_back(speaker::toy_embed(random_log_mel(12, 20, rng), 7777, 16));
  }
  speaker::SpeakerEmbedding mu = speaker::centroid(embs);
  CHECK(std::fabs(speaker::cosine_similarity(mu, mu) - 1.0) <= 1e-9);
}

TEST_CASE("embeddings save and load round-trip") {
  Rng rng(504);
  std::vector<std::pair<std::string, speaker::SpeakerEmbedding>> table;
  for (int i = 0; i < 3; ++i) {
    table.emplace_back("spk" + std::to_string(i),
                       speaker::toy_embed(random_log_mel(10, 16, rng), 7777, 24));
  }

  auto dir = std::filesystem::temp_directory_path() / "melmask_test_speaker";
  std::filesystem::create_directories(dir);
  auto path = (dir / "emb.ckpt").string();
  speaker::save_embeddings(path, table);
  auto back = speaker::load_embeddings(path);

  REQUIRE(back.size() == table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    CHECK(back[i].first == table[i].first);
    REQUIRE(back[i].second.v.size() == table[i].second.v.size());
    for (std::size_t k = 0; k < table[i].second.v.size(); ++k) {
      CHECK(back[i].second.v[k] == table[i].second.v[k]);
    }
  }
}

}  // TEST_SUITE

}  // namespace
