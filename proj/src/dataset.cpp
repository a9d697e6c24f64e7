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

#include "spikeprune/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace spikeprune {

namespace {

// Unit channel signatures, one per class. Nonnegative so images stay in a
// natural intensity range.
constexpr float kSig[8][3] = {
    {1.0f, 0.0f, 0.0f},       {0.0f, 1.0f, 0.0f},       {0.0f, 0.0f, 1.0f},
    {0.5774f, 0.5774f, 0.5774f}, {0.7071f, 0.7071f, 0.0f}, {0.7071f, 0.0f, 0.7071f},
    {0.0f, 0.7071f, 0.7071f}, {0.9636f, 0.1482f, 0.2224f}};

Sample make_synthetic_sample(const DatasetConfig& cfg, int label,
                             std::mt19937_64& rng) {
  const std::int64_t hw = cfg.image_hw;
  const std::int64_t g = cfg.token_grid;
  const std::int64_t tok_px = hw / g;
  const auto fb = std::max<std::int64_t>(
      1, static_cast<std::int64_t>(std::llround(
             static_cast<double>(g) * std::sqrt(cfg.fg_token_frac))));

  std::uniform_int_distribution<std::int64_t> pos(0, g - fb);
  const std::int64_t r0 = pos(rng);
  const std::int64_t c0 = pos(rng);

  std::uniform_real_distribution<float> bg(0.0f, static_cast<float>(cfg.bg_noise));
  std::uniform_real_distribution<float> fgn(-static_cast<float>(cfg.fg_noise),
                                            static_cast<float>(cfg.fg_noise));

  Sample s;
  s.label = label;
  s.image = Tensor({cfg.channels, hw, hw});
  // Label-independent background noise everywhere first. Draw order is fixed
  // (channel, row, col) so the dataset is bitwise reproducible.
  for (std::int64_t c = 0; c < cfg.channels; ++c)
    for (std::int64_t y = 0; y < hw; ++y)
      for (std::int64_t x = 0; x < hw; ++x)
        s.image.v[(c * hw + y) * hw + x] = bg(rng);

  const float* sig = kSig[label % 8];
  for (std::int64_t ty = r0; ty < r0 + fb; ++ty)
    for (std::int64_t tx = c0; tx < c0 + fb; ++tx) {
      s.foreground_tokens.push_back(ty * g + tx);
      for (std::int64_t py = ty * tok_px; py < (ty + 1) * tok_px; ++py)
        for (std::int64_t px = tx * tok_px; px < (tx + 1) * tok_px; ++px) {
          const float checker = ((py + px) % 2 == 0) ? 1.0f : 0.6f;
          for (std::int64_t c = 0; c < cfg.channels; ++c) {
            float v = static_cast<float>(cfg.fg_gain) * sig[c] * checker + fgn(rng);
            if (v < 0.0f) v = 0.0f;
            s.image.v[(c * hw + py) * hw + px] = v;
          }
        }
    }
  std::sort(s.foreground_tokens.begin(), s.foreground_tokens.end());
  return s;
}

std::vector<Sample> synthetic_split(const DatasetConfig& cfg, std::int64_t count,
                                    std::mt19937_64& rng) {
  std::vector<Sample> out;
  out.reserve(static_cast<std::size_t>(count));
  for (std::int64_t i = 0; i < count; ++i)
    out.push_back(make_synthetic_sample(cfg, static_cast<int>(i % cfg.num_classes), rng));
  std::shuffle(out.begin(), out.end(), rng);
  return out;
}

std::string read_binary_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw FormatError("cannot open " + path, 0);
  return std::string((std::istreambuf_iterator<char>(f)),
                     std::istreambuf_iterator<char>());
}

std::vector<Sample> parse_cifar_batch(const std::string& path) {
  constexpr std::int64_t kRecord = 3073;
  constexpr std::int64_t kPlane = 1024;
  const std::string buf = read_binary_file(path);
  const auto size = static_cast<std::int64_t>(buf.size());
  if (size % kRecord != 0)
    throw FormatError("truncated record in " + path, (size / kRecord) * kRecord);

  std::vector<Sample> out;
  for (std::int64_t off = 0; off < size; off += kRecord) {
    const auto label = static_cast<unsigned char>(buf[static_cast<std::size_t>(off)]);
    if (label > 9)
      throw FormatError("label byte out of range in " + path, off);
    Sample s;
    s.label = label;
    s.image = Tensor({3, 32, 32});
    for (std::int64_t c = 0; c < 3; ++c)
      for (std::int64_t i = 0; i < kPlane; ++i) {
        const auto byte = static_cast<unsigned char>(
            buf[static_cast<std::size_t>(off + 1 + c * kPlane + i)]);
        s.image.v[c * kPlane + i] = static_cast<float>(byte) / 255.0f;
      }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace

Dataset generate_synthetic(const DatasetConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  Dataset d;
  d.num_classes = cfg.num_classes;
  d.train = synthetic_split(cfg, cfg.train_size, rng);
  d.eval_set = synthetic_split(cfg, cfg.eval_size, rng);
  return d;
}

Dataset load_cifar10_binary(const std::string& dir) {
  namespace fs = std::filesystem;
  if (!fs::is_directory(dir)) throw FormatError("not a directory: " + dir, 0);
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.path().extension() == ".bin") files.push_back(e.path().string());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw FormatError("no .bin batches under " + dir, 0);

  Dataset d;
  d.num_classes = 10;
  for (const auto& f : files) {
    auto samples = parse_cifar_batch(f);
    const bool is_test =
        fs::path(f).filename().string().find("test") != std::string::npos;
    auto& dst = is_test ? d.eval_set : d.train;
    for (auto& s : samples) dst.push_back(std::move(s));
  }
  return d;
}

Dataset load_tensor_frames(const std::string& dir) {
  using nlohmann::json;
  json meta;
  try {
    meta = json::parse(read_binary_file(dir + "/meta.json"));
  } catch (const json::exception& e) {
    throw FormatError("bad meta.json: " + std::string(e.what()), 0);
  }
  for (const char* key : {"version", "train_count", "eval_count", "timesteps",
                          "channels", "height", "width", "classes"})
    if (!meta.contains(key)) throw FormatError(std::string("meta.json missing ") + key, 0);
  if (meta["version"].get<int>() != 1) throw FormatError("unsupported frames version", 0);

  const std::int64_t train_n = meta["train_count"].get<std::int64_t>();
  const std::int64_t eval_n = meta["eval_count"].get<std::int64_t>();
  const std::int64_t t = meta["timesteps"].get<std::int64_t>();
  const std::int64_t c = meta["channels"].get<std::int64_t>();
  const std::int64_t h = meta["height"].get<std::int64_t>();
  const std::int64_t w = meta["width"].get<std::int64_t>();
  const std::int64_t total = train_n + eval_n;
  const std::int64_t frame_floats = t * c * h * w;

  const std::string frames = read_binary_file(dir + "/frames.bin");
  if (static_cast<std::int64_t>(frames.size()) != total * frame_floats * 4)
    throw FormatError("frames.bin extent mismatch", static_cast<std::int64_t>(frames.size()));
  const std::string labels = read_binary_file(dir + "/labels.bin");
  if (static_cast<std::int64_t>(labels.size()) != total)
    throw FormatError("labels.bin extent mismatch", static_cast<std::int64_t>(labels.size()));

  Dataset d;
  d.num_classes = meta["classes"].get<std::int64_t>();
  auto read_sample = [&](std::int64_t idx) {
    Sample s;
    s.label = static_cast<unsigned char>(labels[static_cast<std::size_t>(idx)]);
    if (s.label >= d.num_classes)
      throw FormatError("label out of range in labels.bin", idx);
    s.image = Tensor({t, c, h, w});
    for (std::int64_t j = 0; j < frame_floats; ++j) {
      const std::size_t at = static_cast<std::size_t>((idx * frame_floats + j) * 4);
      std::uint32_t u = 0;
      for (int b = 3; b >= 0; --b)
        u = (u << 8) | static_cast<unsigned char>(frames[at + static_cast<std::size_t>(b)]);
      float x;
      std::memcpy(&x, &u, 4);
      s.image.v[j] = x;
    }
    return s;
  };
  for (std::int64_t i = 0; i < train_n; ++i) d.train.push_back(read_sample(i));
  for (std::int64_t i = 0; i < eval_n; ++i) d.eval_set.push_back(read_sample(train_n + i));
  return d;
}

Dataset load_dataset(const DatasetConfig& cfg, std::mt19937_64& rng) {
  cfg.validate();
  switch (cfg.kind) {
    case DatasetKind::synthetic_fg_bg:
      return generate_synthetic(cfg, rng);
    case DatasetKind::cifar10_binary:
      return load_cifar10_binary(cfg.dir);
    case DatasetKind::tensor_frames:
      return load_tensor_frames(cfg.dir);
  }
  throw ConfigError("unknown dataset kind");
}

}  // namespace spikeprune
