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

#ifndef MELMASK_IO_HPP_
#define MELMASK_IO_HPP_

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "melmask/matrix.hpp"

namespace melmask::io {

// Little-endian scalar I/O. Explicit byte order so files match across hosts.
void put_u32(std::ostream& os, std::uint32_t v);
void put_f32(std::ostream& os, float v);
void put_f64(std::ostream& os, double v);
std::uint32_t get_u32(std::istream& is);
float get_f32(std::istream& is);
double get_f64(std::istream& is);

// Frame grid container. Magic "MELS" for spectrograms, "MASK" for masks;
// header u32 fields {version=1, n_frames, n_mels, sample_rate, frame_hop},
// payload f32 frame-major.
struct FrameGrid {
  Matrix bins;  // frames x n_mels
  std::uint32_t sample_rate = 0;
  std::uint32_t frame_hop = 0;
};

void write_grid(const std::string& path, const char magic[4], const Matrix& bins,
                std::uint32_t sample_rate, std::uint32_t frame_hop);
FrameGrid read_grid(const std::string& path, const char expect_magic[4]);

void write_mels(const std::string& path, const Matrix& bins, std::uint32_t sample_rate,
                std::uint32_t frame_hop);
FrameGrid read_mels(const std::string& path);
void write_mask(const std::string& path, const Matrix& values, std::uint32_t sample_rate,
                std::uint32_t frame_hop);
FrameGrid read_mask(const std::string& path);

// 8-bit binary PGM (P5) of a time-major grid: image row = column index of the
// grid (mel bin or symbol), image column = frame. Values scaled linearly from
// [min, max] to [0, 255]; min and max recorded in "<path>.scale.txt".
void write_pgm(const std::string& path, const Matrix& time_major);

// CSV with a header row; every numeric cell formatted "%.6f".
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows);
// Variant with one leading string column (e.g. a speaker id) per row.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::string>& row_labels,
               const std::vector<std::vector<double>>& rows);

std::string format_fixed6(double v);

}  // namespace melmask::io

#endif  // MELMASK_IO_HPP_
