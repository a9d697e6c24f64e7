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

#include "spikeprune/model.hpp"

namespace spikeprune {

struct LayerCost {
  std::string name;
  std::uint64_t flops = 0;
  std::int64_t token_count = 0;
  std::int64_t alive_weights = 0;
};

struct CostReport {
  std::vector<LayerCost> per_layer;
  std::uint64_t total_flops = 0;       // primary: 1 MAC = 1 FLOP, T-inclusive
  std::uint64_t total_flops_mac2 = 0;  // secondary column: 1 MAC = 2 FLOPs
  std::string convention;
  std::vector<double> firing_rates;    // filled by measured paths only
  double wall_throughput = 0.0;        // images/s, informational
  std::string to_json() const;
};

// Token counts driving the analytic count: per encoder block, per selector
// application (scored token sets), and at the head.
struct KeepSchedule {
  std::vector<std::int64_t> block_tokens;
  std::vector<std::int64_t> selector_tokens;
  std::int64_t head_tokens = 0;

  // No token pruning anywhere, no selector modules.
  static KeepSchedule dense(const ModelConfig& cfg);
  // Token reduction applied from the second block on: the last
  // selector-count blocks run at the composed [rho, rho^2, ...] counts.
  static KeepSchedule entry_gated(const ModelConfig& cfg, double rho);
  // Selectors placed after the configured layers: reductions reach the
  // following blocks and the head (the runtime placement).
  static KeepSchedule exit_gated(const ModelConfig& cfg, double rho);

  void validate(const ModelConfig& cfg) const;
};

// Analytic cost of one forward pass under the schedule. Counts
// multiply-accumulates of every conv, linear, and attention product, once
// per timestep (the head runs once, after temporal pooling). weight_sparsity
// scales prunable-layer counts by (1 - sparsity) only when sparse_exec is
// set; masks are dense-with-zeros at this scale, so the default accounting
// charges full dense cost.
CostReport count_flops(const ModelConfig& cfg, const KeepSchedule& schedule,
                       double weight_sparsity = 0.0, bool sparse_exec = false);

// Per-token firing rate: mean over timesteps and channels.
std::vector<double> firing_rate_map(const SpikeTensor& x);

struct ThroughputResult {
  double images_per_sec = 0.0;  // median over repeats
  double spread = 0.0;          // max - min across repeats
  int repeats = 0;
};

// Wall-clock inference throughput of the model on the given image batch.
// One warmup pass, then `repeats` timed passes; median reported.
ThroughputResult throughput_bench(const Model& model, const Tensor& images,
                                  int repeats, const EvalOptions& opts);

// Heat map of per-token rates on an h x w grid: P6 portable pixmap (red high,
// blue low) plus a CSV twin next to it. Byte-reproducible given equal inputs.
void export_attention_map(const std::vector<double>& map, std::int64_t grid_h,
                          std::int64_t grid_w, const std::string& ppm_path,
                          int cell_px = 16);

}  // namespace spikeprune
