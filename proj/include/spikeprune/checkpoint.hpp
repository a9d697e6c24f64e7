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

#include <string>
#include <vector>

#include "spikeprune/tape.hpp"

namespace spikeprune {

// Checkpoint layout: a directory holding
//   manifest.json  parameter names, shapes, byte offsets, mask bit offsets
//   weights.bin    flat little-endian f32 values in manifest order
//   masks.bin      packed bits (LSB first) for prunable parameters
// The manifest carries a mandatory version field; loading verifies names and
// shapes and fails closed on drift.

void save_checkpoint(const std::string& dir, const std::vector<const Parameter*>& params);

void load_checkpoint(const std::string& dir, const std::vector<Parameter*>& params);

}  // namespace spikeprune
