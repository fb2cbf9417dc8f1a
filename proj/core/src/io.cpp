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

#include "melmask/io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

namespace melmask::io {

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f32(std::ostream& os, float v) { put_u32(os, std::bit_cast<std::uint32_t>(v)); }

void put_f64(std::ostream& os, double v) {
  const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
  put_u32(os, static_cast<std::uint32_t>(u & 0xffffffffu));
  put_u32(os, static_cast<std::uint32_t>(u >> 32));
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("unexpected end of file while reading u32");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

float get_f32(std::istream& is) { return std::bit_cast<float>(get_u32(is)); }

double get_f64(std::istream& is) {
  const std::uint32_t lo = get_u32(is);
  const std::uint32_t hi = get_u32(is);
  return std::bit_cast<double>((static_cast<std::uint64_t>(hi) << 32) | lo);
}

void write_grid(const std::string& path, const char magic[4], const Matrix& bins,
                std::uint32_t sample_rate, std::uint32_t frame_hop) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os.write(magic, 4);
  put_u32(os, 1);  // version
  put_u32(os, static_cast<std::uint32_t>(bins.rows));
  put_u32(os, static_cast<std::uint32_t>(bins.cols));
  put_u32(os, sample_rate);
  put_u32(os, frame_hop);
  for (double x : bins.v) put_f32(os, static_cast<float>(x));
  if (!os) throw std::runtime_error("write failed: " + path);
}

FrameGrid read_grid(const std::string& path, const char expect_magic[4]) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open for reading: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, expect_magic, 4) != 0)
    throw std::runtime_error("bad magic in " + path);
  const std::uint32_t version = get_u32(is);
  if (version != 1)
    throw std::runtime_error("unsupported version " + std::to_string(version) + " in " + path);
  const std::uint32_t n_frames = get_u32(is);
  const std::uint32_t n_mels = get_u32(is);
  FrameGrid g;
  g.sample_rate = get_u32(is);
  g.frame_hop = get_u32(is);
  g.bins = Matrix(n_frames, n_mels);
  for (double& x : g.bins.v) x = static_cast<double>(get_f32(is));
  if (!is) throw std::runtime_error("truncated payload in " + path);
  return g;
}

void write_mels(const std::string& path, const Matrix& bins, std::uint32_t sample_rate,
                std::uint32_t frame_hop) {
  write_grid(path, "MELS", bins, sample_rate, frame_hop);
}

FrameGrid read_mels(const std::string& path) { return read_grid(path, "MELS"); }

void write_mask(const std::string& path, const Matrix& values, std::uint32_t sample_rate,
                std::uint32_t frame_hop) {
  write_grid(path, "MASK", values, sample_rate, frame_hop);
}

FrameGrid read_mask(const std::string& path) { return read_grid(path, "MASK"); }

void write_pgm(const std::string& path, const Matrix& time_major) {
  const std::size_t width = time_major.rows;   // frames
  const std::size_t height = time_major.cols;  // mel bins / symbols
  if (width == 0 || height == 0) throw std::invalid_argument("write_pgm: empty matrix");
  double lo = time_major.v[0], hi = time_major.v[0];
  for (double x : time_major.v) {
    if (x < lo) lo = x;
    if (x > hi) hi = x;
  }
  const double span = hi - lo;
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  os << "P5\n" << width << " " << height << "\n255\n";
  std::vector<unsigned char> row(width);
  for (std::size_t c = 0; c < height; ++c) {
    for (std::size_t r = 0; r < width; ++r) {
      const double x = time_major.at(r, c);
      const double scaled = span > 0.0 ? (x - lo) / span * 255.0 : 0.0;
      row[r] = static_cast<unsigned char>(scaled + 0.5);
    }
    os.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(width));
  }
  if (!os) throw std::runtime_error("write failed: " + path);

  std::ofstream side(path + ".scale.txt");
  if (!side) throw std::runtime_error("cannot open for writing: " + path + ".scale.txt");
  char buf[96];
  std::snprintf(buf, sizeof(buf), "min %.9g\nmax %.9g\n", lo, hi);
  side << buf;
}

std::string format_fixed6(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return std::string(buf);
}

namespace {
void write_csv_impl(const std::string& path, const std::vector<std::string>& header,
                    const std::vector<std::string>* row_labels,
                    const std::vector<std::vector<double>>& rows) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) os << ",";
    os << header[i];
  }
  os << "\n";
  for (std::size_t r = 0; r < rows.size(); ++r) {
    bool first = true;
    if (row_labels) {
      os << (*row_labels)[r];
      first = false;
    }
    for (double v : rows[r]) {
      if (!first) os << ",";
      os << format_fixed6(v);
      first = false;
    }
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}
}  // namespace

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<double>>& rows) {
  write_csv_impl(path, header, nullptr, rows);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::string>& row_labels,
               const std::vector<std::vector<double>>& rows) {
  write_csv_impl(path, header, &row_labels, rows);
}

}  // namespace melmask::io
