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

#ifndef MELMASK_SPEAKER_HPP_
#define MELMASK_SPEAKER_HPP_

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "melmask/dsp.hpp"

namespace melmask::speaker {

inline constexpr std::size_t kDefaultEmbeddingDim = 32;

struct SpeakerEmbedding {
  enum class Level { utterance, speaker };
  std::vector<double> v;  // unit L2 norm
  Level level = Level::utterance;
};

// Deterministic stand-in for a trained speaker encoder: per-channel mean and
// sample standard deviation of a log-domain mel (2 * n_mels stats), projected
// to dim by a seeded Gaussian matrix, then L2-normalized. Needs >= 2 frames
// for the std to exist.
SpeakerEmbedding toy_embed(const dsp::MelSpectrogram& log_mel, std::uint64_t projection_seed,
                           std::size_t dim = kDefaultEmbeddingDim);

// mu = sum(x_i) / ||sum(x_i)||. Throws on an empty list or a zero sum.
SpeakerEmbedding centroid(const std::vector<SpeakerEmbedding>& embeddings);

// Plain dot product; both inputs are unit-norm by construction.
double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b);

// Embeddings ride in the checkpoint container, one named parameter each.
void save_embeddings(const std::string& path,
                     const std::vector<std::pair<std::string, SpeakerEmbedding>>& embeddings);
std::vector<std::pair<std::string, SpeakerEmbedding>> load_embeddings(const std::string& path);

}  // namespace melmask::speaker

#endif  // MELMASK_SPEAKER_HPP_
