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

#ifndef MELMASK_PARAMS_HPP_
#define MELMASK_PARAMS_HPP_

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "melmask/autodiff.hpp"
#include "melmask/tensor.hpp"

namespace melmask {

// Named parameter collection with stable insertion order. Serializes to the
// "CKPT" container: magic, u32 version, u32 count, then per parameter
// {u32 name length, utf-8 name, u32 rank, u32 dims, f64 data}, little-endian.
//
// String metadata (stage lineage, config echo) rides along as parameters named
// "__meta.<key>" whose data is the utf-8 bytes, one f64 per byte. Readers that
// only care about tensors can ignore them by prefix.
class ParamStore {
 public:
  ad::Tensor& create(const std::string& name, ad::Tensor init);
  bool has(const std::string& name) const;
  ad::Tensor& get(const std::string& name);
  const ad::Tensor& get(const std::string& name) const;

  std::size_t size() const { return entries_.size(); }
  const std::string& name_at(std::size_t i) const { return entries_[i].name; }
  ad::Tensor& at(std::size_t i) { return entries_[i].tensor; }
  const ad::Tensor& at(std::size_t i) const { return entries_[i].tensor; }

  // Indices of parameters that are real tensors (skips "__meta." entries).
  std::vector<std::size_t> trainable_indices() const;
  std::size_t total_elements() const;  // over trainable parameters

  void set_meta(const std::string& key, const std::string& value);
  bool has_meta(const std::string& key) const;
  std::string meta(const std::string& key) const;  // empty string if absent

  void save(const std::string& path) const;
  static ParamStore load(const std::string& path);

 private:
  struct Entry {
    std::string name;
    ad::Tensor tensor;
  };
  std::vector<Entry> entries_;
  std::map<std::string, std::size_t> index_;
};

// Registers every trainable parameter of a store as a leaf on a tape, so a
// model forward can look values up by name and a training step can collect
// the matching gradients afterwards.
class TapeBinding {
 public:
  TapeBinding(ad::Tape& tape, const ParamStore& store, bool trainable);

  ad::Value operator[](const std::string& name) const;
  const std::vector<ad::Value>& leaves() const { return leaves_; }

  // Gradients aligned with store.trainable_indices(); call after backward().
  std::vector<ad::Tensor> grads(const ad::Tape& tape) const;

 private:
  std::map<std::string, ad::Value> by_name_;
  std::vector<ad::Value> leaves_;
};

}  // namespace melmask

#endif  // MELMASK_PARAMS_HPP_
