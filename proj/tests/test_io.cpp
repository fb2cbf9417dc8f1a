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

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "melmask/io.hpp"
#include "melmask/matrix.hpp"
#include "melmask/rng.hpp"

namespace {

using melmask::Matrix;
using melmask::Rng;
namespace io = melmask::io;
namespace fs = std::filesystem;

fs::path temp_dir() {
  auto p = fs::temp_directory_path() / "melmask_test_io";
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TEST_SUITE("io") {

TEST_CASE("mels round-trip preserves f32-quantized values and metadata") {
  Rng rng(401);
  Matrix grid(7, 5);
  for (double& x : grid.v) x = rng.uniform(-10.0, 10.0);

  auto path = (temp_dir() / "grid.mels").string();
  io::write_mels(path, grid, 16000, 128);
  io::FrameGrid back = io::read_mels(path);

  REQUIRE(back.bins.rows == 7);
  REQUIRE(back.bins.cols == 5);
  CHECK(back.sample_rate == 16000);
  CHECK(back.frame_hop == 128);
  for (std::size_t i = 0; i < grid.v.size(); ++i) {
    CHECK(back.bins.v[i] == static_cast<double>(static_cast<float>(grid.v[i])));
  }

  // Writing the read-back grid again is byte-identical: the format is a
  // fixed point of its own round trip.
  auto path2 = (temp_dir() / "grid2.mels").string();
  io::write_mels(path2, back.bins, back.sample_rate, back.frame_hop);
  CHECK(slurp(path) == slurp(path2));
}

TEST_CASE("mask files use their own magic and reject the wrong one") {
  Matrix grid(2, 3);
  grid.v = {0.0, 0.25, 0.5, 0.75, 1.0, 0.9};

  auto mask_path = (temp_dir() / "m.mask").string();
  io::write_mask(mask_path, grid, 16000, 128);
  io::FrameGrid back = io::read_mask(mask_path);
  CHECK(back.bins.v[3] == 0.75);

  CHECK_THROWS(io::read_mels(mask_path));

  auto mels_path = (temp_dir() / "m.mels").string();
  io::write_mels(mels_path, grid, 16000, 128);
  CHECK_THROWS(io::read_mask(mels_path));
}

TEST_CASE("truncated and corrupted grid files are rejected") {
  Matrix grid(4, 4, 1.0);
  auto path = (temp_dir() / "t.mels").string();
  io::write_mels(path, grid, 16000, 128);

  std::string bytes = slurp(path);
  auto cut = (temp_dir() / "cut.mels").string();
  {
    std::ofstream out(cut, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS(io::read_mels(cut));

  auto missing = (temp_dir() / "missing.mels").string();
  CHECK_THROWS(io::read_mels(missing));
}

TEST_CASE("csv uses a header row and fixed six-decimal cells") {
  auto path = (temp_dir() / "table.csv").string();
  io::write_csv(path, {"snr_db", "value"}, {{-5.0, 1.0 / 3.0}, {5.0, 2.0}});

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "snr_db,value");
  std::getline(in, line);
  CHECK(line == "-5.000000,0.333333");
  std::getline(in, line);
  CHECK(line == "5.000000,2.000000");
  CHECK_FALSE(std::getline(in, line));
}

TEST_CASE("labeled csv keeps the label as the first column") {
  auto path = (temp_dir() / "labeled.csv").string();
  io::write_csv(path, {"speaker", "cosine"}, {"spk0", "spk1"}, {{0.91}, {0.87}});

  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "speaker,cosine");
  std::getline(in, line);
  CHECK(line == "spk0,0.910000");
  std::getline(in, line);
  CHECK(line == "spk1,0.870000");
}

TEST_CASE("format_fixed6 matches printf semantics") {
  CHECK(io::format_fixed6(0.0) == "0.000000");
  CHECK(io::format_fixed6(-1.5) == "-1.500000");
  CHECK(io::format_fixed6(1.0000004) == "1.000000");
  CHECK(io::format_fixed6(1.0000005) == "1.000001");
  CHECK(io::format_fixed6(123456.789012345) == "123456.789012");
}

TEST_CASE("pgm writes the advertised dimensions and scale sidecar") {
  // Grid rows are frames, columns are mel bins; the image transposes this so
  // a row of the image is one mel bin across time.
  Matrix tm(3, 9);  // 3 frames, 9 bins
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 9; ++c) tm.at(r, c) = static_cast<double>(r * 9 + c);

  auto path = (temp_dir() / "img.pgm").string();
  io::write_pgm(path, tm);

  std::ifstream in(path, std::ios::binary);
  std::string magic;
  in >> magic;
  CHECK(magic == "P5");
  std::size_t w = 0;
  std::size_t h = 0;
  int maxval = 0;
  in >> w >> h >> maxval;
  CHECK(w == 3);  // image width = frames
  CHECK(h == 9);  // image height = bins
  CHECK(maxval == 255);
  in.get();  // single whitespace before payload
  std::vector<unsigned char> px(w * h);
  in.read(reinterpret_cast<char*>(px.data()), static_cast<std::streamsize>(px.size()));
  REQUIRE(in.gcount() == static_cast<std::streamsize>(px.size()));
  // Linear min-max scaling: value 0 -> 0 and 26 -> 255. The first image row
  // is bin 0 over frames {0, 1, 2}; the last pixel is bin 8 at frame 2.
  CHECK(px.front() == 0);
  CHECK(px.back() == 255);

  std::ifstream side(path + ".scale.txt");
  REQUIRE(side.good());
  std::string tag;
  double mn = 1.0;
  double mx = -1.0;
  side >> tag >> mn;
  CHECK(tag == "min");
  side >> tag >> mx;
  CHECK(tag == "max");
  CHECK(mn == doctest::Approx(0.0));
  CHECK(mx == doctest::Approx(26.0));
}

TEST_CASE("pgm of a constant grid does not divide by zero") {
  Matrix tm(2, 4, 3.5);
  auto path = (temp_dir() / "flat.pgm").string();
  io::write_pgm(path, tm);
  std::string bytes = slurp(path);
  CHECK_FALSE(bytes.empty());
}

}  // TEST_SUITE

}  // namespace
