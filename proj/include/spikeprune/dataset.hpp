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

#pragma once

#include <random>
#include <string>
#include <vector>

#include "spikeprune/tensor.hpp"

namespace spikeprune {

enum class DatasetKind { synthetic_fg_bg, cifar10_binary, tensor_frames };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::synthetic_fg_bg;
  std::int64_t train_size = 512;
  std::int64_t eval_size = 256;
  std::int64_t image_hw = 32;
  std::int64_t channels = 3;
  std::int64_t num_classes = 4;
  std::int64_t token_grid = 8;  // spatial token grid of the consuming model
  double fg_token_frac = 0.25;
  double fg_gain = 1.0;
  double fg_noise = 0.15;
  double bg_noise = 0.35;
  std::string dir;  // cifar10_binary / tensor_frames source directory

  void validate() const {
    check_config(train_size >= 1 && eval_size >= 0, "dataset sizes must be positive");
    if (kind == DatasetKind::synthetic_fg_bg) {
      check_config(channels == 3, "synthetic generator uses 3 channels");
      check_config(num_classes >= 2 && num_classes <= 8, "synthetic supports 2..8 classes");
      check_config(token_grid >= 2, "token grid too small");
      check_config(image_hw % token_grid == 0, "image size not divisible by token grid");
      check_config(fg_token_frac > 0.0 && fg_token_frac < 1.0,
                   "foreground fraction must be in (0, 1)");
    }
  }
};

struct Sample {
  Tensor image;  // [C, H, W] static or [T, C, H, W] frames
  int label = 0;
  std::vector<std::int64_t> foreground_tokens;  // empty when unknown
};

struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> eval_set;
  std::int64_t num_classes = 0;
};

// Class-discriminative block of foreground tokens at a random grid-aligned
// position over label-independent background noise. Balanced classes;
// bitwise reproducible from the RNG.
Dataset generate_synthetic(const DatasetConfig& cfg, std::mt19937_64& rng);

// Standard binary batches: 3073-byte records, 1 label byte + 3072 pixel
// bytes (channel-major R,G,B, row-major 32x32), pixels scaled to [0, 1].
// data_batch* files become training samples, test_batch* evaluation samples.
Dataset load_cifar10_binary(const std::string& dir);

// Pre-tensorized frame sequences: meta.json + frames.bin (f32 LE,
// [count, T, C, H, W]) + labels.bin (one byte per sample).
Dataset load_tensor_frames(const std::string& dir);

Dataset load_dataset(const DatasetConfig& cfg, std::mt19937_64& rng);

}  // namespace spikeprune
