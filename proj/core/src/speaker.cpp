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

#include "melmask/speaker.hpp"

#include <cmath>
#include <stdexcept>

#include "melmask/params.hpp"
#include "melmask/rng.hpp"

namespace melmask::speaker {

namespace {
void normalize_unit(std::vector<double>& v, const char* who) {
  double n2 = 0.0;
  for (double x : v) n2 += x * x;
  const double n = std::sqrt(n2);
  if (n < 1e-30) throw std::invalid_argument(std::string(who) + ": zero-norm vector");
  for (double& x : v) x /= n;
}
}  // namespace

SpeakerEmbedding toy_embed(const dsp::MelSpectrogram& log_mel, std::uint64_t projection_seed,
                           std::size_t dim) {
  const std::size_t frames = log_mel.frames();
  const std::size_t n_mels = log_mel.n_mels();
  if (frames < 2)
    throw std::invalid_argument("toy_embed: need at least 2 frames for channel statistics");
  if (dim == 0) throw std::invalid_argument("toy_embed: zero embedding dim");

  std::vector<double> stats(2 * n_mels, 0.0);
  for (std::size_t m = 0; m < n_mels; ++m) {
    double mean = 0.0;
    for (std::size_t t = 0; t < frames; ++t) mean += log_mel.bins.at(t, m);
    mean /= static_cast<double>(frames);
    double var = 0.0;
    for (std::size_t t = 0; t < frames; ++t) {
      const double d = log_mel.bins.at(t, m) - mean;
      var += d * d;
    }
    var /= static_cast<double>(frames - 1);
    stats[m] = mean;
    stats[n_mels + m] = std::sqrt(var);
  }

  // Projection depends only on the seed and the sizes, never on the input.
  Rng rng(projection_seed);
  SpeakerEmbedding e;
  e.level = SpeakerEmbedding::Level::utterance;
  e.v.assign(dim, 0.0);
  for (std::size_t s = 0; s < stats.size(); ++s)
    for (std::size_t d = 0; d < dim; ++d) e.v[d] += stats[s] * rng.normal();
  normalize_unit(e.v, "toy_embed");
  return e;
}

SpeakerEmbedding centroid(const std::vector<SpeakerEmbedding>& embeddings) {
  if (embeddings.empty()) throw std::invalid_argument("centroid: empty embedding list");
  const std::size_t dim = embeddings.front().v.size();
  SpeakerEmbedding out;
  out.level = SpeakerEmbedding::Level::speaker;
  out.v.assign(dim, 0.0);
  for (const SpeakerEmbedding& e : embeddings) {
    if (e.v.size() != dim) throw std::invalid_argument("centroid: dimension mismatch");
    for (std::size_t i = 0; i < dim; ++i) out.v[i] += e.v[i];
  }
  normalize_unit(out.v, "centroid");
  return out;
}

double cosine_similarity(const SpeakerEmbedding& a, const SpeakerEmbedding& b) {
  if (a.v.size() != b.v.size())
    throw std::invalid_argument("cosine_similarity: dimension mismatch");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.v.size(); ++i) dot += a.v[i] * b.v[i];
  return dot;
}

void save_embeddings(const std::string& path,
                     const std::vector<std::pair<std::string, SpeakerEmbedding>>& embeddings) {
  ParamStore store;
  for (const auto& [name, e] : embeddings) {
    ad::Tensor t({e.v.size()}, e.v);
    const std::string prefix =
        e.level == SpeakerEmbedding::Level::speaker ? "speaker." : "utterance.";
    store.create(prefix + name, std::move(t));
  }
  store.save(path);
}

std::vector<std::pair<std::string, SpeakerEmbedding>> load_embeddings(const std::string& path) {
  ParamStore store = ParamStore::load(path);
  std::vector<std::pair<std::string, SpeakerEmbedding>> out;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const std::string& full = store.name_at(i);
    SpeakerEmbedding e;
    std::string name;
    if (full.rfind("speaker.", 0) == 0) {
      e.level = SpeakerEmbedding::Level::speaker;
      name = full.substr(8);
    } else if (full.rfind("utterance.", 0) == 0) {
      e.level = SpeakerEmbedding::Level::utterance;
      name = full.substr(10);
    } else {
      continue;  // metadata or foreign parameter
    }
    const ad::Tensor& t = store.at(i);
    e.v.assign(t.data().begin(), t.data().end());
    out.emplace_back(std::move(name), std::move(e));
  }
  return out;
}

}  // namespace melmask::speaker
