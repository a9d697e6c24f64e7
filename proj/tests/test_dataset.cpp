// Copyright 2026 The spikeprune Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>

#include "spikeprune/dataset.hpp"

using namespace spikeprune;

namespace {

DatasetConfig synth_cfg() {
  DatasetConfig cfg;
  cfg.train_size = 24;
  cfg.eval_size = 12;
  cfg.image_hw = 16;
  cfg.token_grid = 4;
  cfg.num_classes = 4;
  return cfg;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  f.write(data.data(), static_cast<std::streamsize>(data.size()));
}

}  // namespace

TEST_CASE("synthetic generation is bitwise deterministic per seed") {
  DatasetConfig cfg = synth_cfg();
  std::mt19937_64 a(77), b(77);
  Dataset da = generate_synthetic(cfg, a);
  Dataset db = generate_synthetic(cfg, b);
  REQUIRE(da.train.size() == db.train.size());
  for (std::size_t i = 0; i < da.train.size(); ++i) {
    CHECK(da.train[i].label == db.train[i].label);
    CHECK(da.train[i].image.v == db.train[i].image.v);
    CHECK(da.train[i].foreground_tokens == db.train[i].foreground_tokens);
  }
}

TEST_CASE("foreground occupies about a quarter of the tokens and classes balance") {
  DatasetConfig cfg = synth_cfg();
  std::mt19937_64 rng(79);
  Dataset d = generate_synthetic(cfg, rng);
  std::vector<int> counts(4, 0);
  for (const auto& s : d.train) {
    counts[static_cast<std::size_t>(s.label)]++;
    CHECK(s.foreground_tokens.size() == 4);  // 2x2 block of 16 tokens
    CHECK(!s.foreground_tokens.empty());
    CHECK(s.foreground_tokens.size() < 16);
    for (auto t : s.foreground_tokens) {
      CHECK(t >= 0);
      CHECK(t < 16);
    }
  }
  for (int c : counts) CHECK(c == 6);
}

TEST_CASE("foreground pixels carry more energy than background") {
  DatasetConfig cfg = synth_cfg();
  std::mt19937_64 rng(81);
  Dataset d = generate_synthetic(cfg, rng);
  const auto& s = d.train.front();
  const std::int64_t tok_px = cfg.image_hw / cfg.token_grid;
  double fg = 0.0, bg = 0.0;
  std::int64_t fg_n = 0, bg_n = 0;
  for (std::int64_t tok = 0; tok < 16; ++tok) {
    const bool is_fg = std::find(s.foreground_tokens.begin(), s.foreground_tokens.end(),
                                 tok) != s.foreground_tokens.end();
    const std::int64_t ty = tok / 4, tx = tok % 4;
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t y = ty * tok_px; y < (ty + 1) * tok_px; ++y)
        for (std::int64_t x = tx * tok_px; x < (tx + 1) * tok_px; ++x) {
          const float v = s.image.v[(c * 16 + y) * 16 + x];
          (is_fg ? fg : bg) += v;
          (is_fg ? fg_n : bg_n)++;
        }
  }
  CHECK(fg / fg_n > bg / bg_n);
}

TEST_CASE("cifar batches parse the 3073-byte record layout") {
  const std::string dir = "/tmp/spikeprune_cifar_test";
  std::filesystem::create_directories(dir);
  // Two records: labels 3 and 9; first pixel bytes distinct per channel.
  std::string data(2 * 3073, '\0');
  data[0] = 3;
  data[1] = 17;          // R(0,0) of record 0
  data[1 + 1024] = 34;   // G(0,0)
  data[1 + 2048] = 51;   // B(0,0)
  data[3073] = 9;
  data[3074] = static_cast<char>(255);
  write_file(dir + "/data_batch_1.bin", data);

  Dataset d = load_cifar10_binary(dir);
  REQUIRE(d.train.size() == 2);
  CHECK(d.eval_set.empty());
  CHECK(d.num_classes == 10);
  CHECK(d.train[0].label == 3);
  CHECK(d.train[1].label == 9);
  CHECK(d.train[0].image.v[0] == doctest::Approx(17.0 / 255.0));
  CHECK(d.train[0].image.v[1024] == doctest::Approx(34.0 / 255.0));
  CHECK(d.train[0].image.v[2048] == doctest::Approx(51.0 / 255.0));
  CHECK(d.train[1].image.v[0] == doctest::Approx(1.0));
  std::filesystem::remove_all(dir);
}

TEST_CASE("test batches land in the evaluation split") {
  const std::string dir = "/tmp/spikeprune_cifar_test2";
  std::filesystem::create_directories(dir);
  std::string rec(3073, '\0');
  rec[0] = 1;
  write_file(dir + "/data_batch_1.bin", rec);
  rec[0] = 2;
  write_file(dir + "/test_batch.bin", rec);
  Dataset d = load_cifar10_binary(dir);
  REQUIRE(d.train.size() == 1);
  REQUIRE(d.eval_set.size() == 1);
  CHECK(d.train[0].label == 1);
  CHECK(d.eval_set[0].label == 2);
  std::filesystem::remove_all(dir);
}

TEST_CASE("truncated cifar files report the offset of the incomplete record") {
  const std::string dir = "/tmp/spikeprune_cifar_test3";
  std::filesystem::create_directories(dir);
  std::string data(3073 + 100, '\0');  // one full record plus garbage
  write_file(dir + "/data_batch_1.bin", data);
  try {
    load_cifar10_binary(dir);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset == 3073);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("out-of-range labels report the byte offset") {
  const std::string dir = "/tmp/spikeprune_cifar_test4";
  std::filesystem::create_directories(dir);
  std::string data(2 * 3073, '\0');
  data[3073] = 11;  // second record label invalid
  write_file(dir + "/data_batch_1.bin", data);
  try {
    load_cifar10_binary(dir);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(e.offset == 3073);
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("tensor frames round trip through the on-disk format") {
  const std::string dir = "/tmp/spikeprune_frames_test";
  std::filesystem::create_directories(dir);
  write_file(dir + "/meta.json",
             "{\"version\":1,\"train_count\":2,\"eval_count\":1,\"timesteps\":2,"
             "\"channels\":1,\"height\":2,\"width\":2,\"classes\":3}");
  // 3 samples x 2 timesteps x 1 channel x 2 x 2 floats, little endian.
  std::string frames;
  for (int i = 0; i < 24; ++i) {
    const float v = 0.25f * static_cast<float>(i);
    std::uint32_t u;
    std::memcpy(&u, &v, 4);
    for (int b = 0; b < 4; ++b) frames.push_back(static_cast<char>((u >> (8 * b)) & 0xff));
  }
  write_file(dir + "/frames.bin", frames);
  write_file(dir + "/labels.bin", std::string("\x00\x02\x01", 3));

  Dataset d = load_tensor_frames(dir);
  REQUIRE(d.train.size() == 2);
  REQUIRE(d.eval_set.size() == 1);
  CHECK(d.num_classes == 3);
  CHECK(d.train[0].image.shape == std::vector<std::int64_t>{2, 1, 2, 2});
  CHECK(d.train[0].image.v[0] == 0.0f);
  CHECK(d.train[0].image.v[7] == doctest::Approx(0.25 * 7));
  CHECK(d.train[1].label == 2);
  CHECK(d.eval_set[0].label == 1);
  CHECK(d.eval_set[0].image.v[0] == doctest::Approx(0.25 * 16));
  std::filesystem::remove_all(dir);
}

TEST_CASE("tensor frames with wrong extents fail closed") {
  const std::string dir = "/tmp/spikeprune_frames_test2";
  std::filesystem::create_directories(dir);
  write_file(dir + "/meta.json",
             "{\"version\":1,\"train_count\":2,\"eval_count\":0,\"timesteps\":1,"
             "\"channels\":1,\"height\":2,\"width\":2,\"classes\":2}");
  write_file(dir + "/frames.bin", std::string(10, '\0'));  // wrong size
  write_file(dir + "/labels.bin", std::string(2, '\0'));
  CHECK_THROWS_AS(load_tensor_frames(dir), FormatError);
  std::filesystem::remove_all(dir);
}
