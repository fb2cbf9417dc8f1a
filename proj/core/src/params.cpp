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

#include "melmask/params.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include "melmask/io.hpp"

namespace melmask {

namespace {
constexpr const char* kMetaPrefix = "__meta.";

bool is_meta_name(const std::string& name) {
  return name.rfind(kMetaPrefix, 0) == 0;
}
}  // namespace

ad::Tensor& ParamStore::create(const std::string& name, ad::Tensor init) {
  if (name.empty()) throw std::invalid_argument("ParamStore: empty parameter name");
  if (index_.count(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
  index_[name] = entries_.size();
  entries_.push_back(Entry{name, std::move(init)});
  return entries_.back().tensor;
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

ad::Tensor& ParamStore::get(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return entries_[it->second].tensor;
}

const ad::Tensor& ParamStore::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::out_of_range("ParamStore: no parameter " + name);
  return entries_[it->second].tensor;
}

std::vector<std::size_t> ParamStore::trainable_indices() const {
  std::vector<std::size_t> out;
  out.reserve(entries_.size());
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (!is_meta_name(entries_[i].name)) out.push_back(i);
  return out;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const Entry& e : entries_)
    if (!is_meta_name(e.name)) n += e.tensor.size();
  return n;
}

void ParamStore::set_meta(const std::string& key, const std::string& value) {
  const std::string name = kMetaPrefix + key;
  ad::Tensor t({value.size()});
  for (std::size_t i = 0; i < value.size(); ++i)
    t[i] = static_cast<double>(static_cast<unsigned char>(value[i]));
  auto it = index_.find(name);
  if (it != index_.end()) {
    entries_[it->second].tensor = std::move(t);
  } else {
    create(name, std::move(t));
  }
}

bool ParamStore::has_meta(const std::string& key) const { return has(kMetaPrefix + key); }

std::string ParamStore::meta(const std::string& key) const {
  auto it = index_.find(kMetaPrefix + key);
  if (it == index_.end()) return std::string();
  const ad::Tensor& t = entries_[it->second].tensor;
  std::string out(t.size(), '\0');
  for (std::size_t i = 0; i < t.size(); ++i)
    out[i] = static_cast<char>(static_cast<unsigned char>(t[i]));
  return out;
}

void ParamStore::save(const std::string& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write("CKPT", 4);
  io::put_u32(os, 1);
  io::put_u32(os, static_cast<std::uint32_t>(entries_.size()));
  for (const Entry& e : entries_) {
    io::put_u32(os, static_cast<std::uint32_t>(e.name.size()));
    os.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    const auto& shape = e.tensor.shape();
    io::put_u32(os, static_cast<std::uint32_t>(shape.size()));
    for (std::size_t d : shape) io::put_u32(os, static_cast<std::uint32_t>(d));
    for (std::size_t i = 0; i < e.tensor.size(); ++i) io::put_f64(os, e.tensor[i]);
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

TapeBinding::TapeBinding(ad::Tape& tape, const ParamStore& store, bool trainable) {
  const std::vector<std::size_t> idx = store.trainable_indices();
  leaves_.reserve(idx.size());
  for (std::size_t i : idx) {
    ad::Tensor t = store.at(i);
    t.set_requires_grad(trainable);
    const ad::Value v = tape.leaf(std::move(t));
    leaves_.push_back(v);
    by_name_[store.name_at(i)] = v;
  }
}

ad::Value TapeBinding::operator[](const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw std::out_of_range("TapeBinding: no parameter " + name);
  return it->second;
}

std::vector<ad::Tensor> TapeBinding::grads(const ad::Tape& tape) const {
  std::vector<ad::Tensor> out;
  out.reserve(leaves_.size());
  for (ad::Value v : leaves_) out.push_back(tape.grad(v));
  return out;
}

ParamStore ParamStore::load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "CKPT", 4) != 0) throw std::runtime_error("bad magic in " + path);
  const std::uint32_t version = io::get_u32(is);
  if (version != 1)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t count = io::get_u32(is);
  ParamStore store;
  for (std::uint32_t p = 0; p < count; ++p) {
    const std::uint32_t name_len = io::get_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("truncated name in " + path);
    const std::uint32_t rank = io::get_u32(is);
    std::vector<std::size_t> shape(rank);
    for (std::uint32_t d = 0; d < rank; ++d) shape[d] = io::get_u32(is);
    ad::Tensor t(shape);
    for (std::size_t i = 0; i < t.size(); ++i) t[i] = io::get_f64(is);
    store.create(name, std::move(t));
  }
  return store;
}

}  // namespace melmask
