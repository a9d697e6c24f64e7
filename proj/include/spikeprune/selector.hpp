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

#include <optional>
#include <random>
#include <vector>

#include "spikeprune/tape.hpp"
#include "spikeprune/tensor.hpp"

namespace spikeprune {

// Per-token keep/drop probabilities. Column 0 is the keep probability,
// column 1 the drop probability; rows sum to 1.
struct TokenScore {
  Tensor s;  // [N, 2]

  std::int64_t tokens() const { return s.numel() == 0 ? 0 : s.dim(0); }
  float keep_prob(std::int64_t n) const { return s.v[2 * n]; }
};

// Cumulative keep decision over N tokens. hard holds exact {0,1}; soft holds
// the relaxed keep probabilities used on the backward path. layer_history
// records the cumulative hard decision after each composition.
struct TokenDecision {
  std::vector<float> hard;
  std::vector<float> soft;
  std::vector<std::vector<float>> layer_history;

  static TokenDecision all_ones(std::int64_t n) {
    TokenDecision d;
    d.hard.assign(static_cast<std::size_t>(n), 1.0f);
    d.soft.assign(static_cast<std::size_t>(n), 1.0f);
    return d;
  }

  std::int64_t tokens() const { return static_cast<std::int64_t>(hard.size()); }
  std::int64_t alive() const {
    std::int64_t n = 0;
    for (float h : hard) n += h != 0.0f ? 1 : 0;
    return n;
  }
};

enum class TemperatureSchedule { constant, linear_anneal };

struct SelectorConfig {
  double rho = 0.7;
  double gumbel_temperature = 1.0;
  TemperatureSchedule temperature_schedule = TemperatureSchedule::constant;
  std::int64_t hidden_width = 0;  // 0 resolves to embed_dim / 2

  void validate() const {
    check_config(rho > 0.0 && rho <= 1.0, "keep ratio must be in (0, 1]");
    check_config(gumbel_temperature > 0.0, "gumbel temperature must be positive");
  }
};

enum class SelectorMode { train, eval };

// The two-linear-layer scorer of one selector application. Views into
// model-owned parameters.
struct ScorerView {
  Parameter* w1 = nullptr;
  Parameter* b1 = nullptr;
  Parameter* w2 = nullptr;
  Parameter* b2 = nullptr;
};

// Firing rate per token and channel: mean over the temporal axis.
Tensor temporal_gap(const SpikeTensor& x);

// Softmax(MLP(gap)) with a ReLU between the two linear layers.
TokenScore score_tokens(const Tensor& gap, const ScorerView& scorer);

// Train mode: per-token Gumbel-max keep/drop sample, hard in {0,1}, soft the
// tempered relaxation. Eval mode: deterministic top-ceil(rho * alive) by keep
// probability among alive tokens, ties broken toward the lower index. alive
// defaults to all tokens.
TokenDecision sample_keep_decision(const TokenScore& s, const SelectorConfig& cfg,
                                   SelectorMode mode, std::mt19937_64* rng,
                                   const std::vector<float>* alive = nullptr);

// Hadamard composition: a token dropped anywhere stays dropped.
TokenDecision compose_decision(const TokenDecision& prev, const TokenDecision& next);

// Expected kept token counts after each selector application, using the
// top-ceil(rho * alive) rule per stage.
std::vector<std::int64_t> keep_schedule(double rho, const std::vector<int>& selector_layers,
                                        std::int64_t tokens);

// ceil(rho * alive) with a tolerance for binary rounding of rho itself.
std::int64_t kept_count(double rho, std::int64_t alive);

// Top-k keep-probability selection among alive tokens of one sample; returns
// a {0,1} mask of length n. Scores indexed [n], alive same length.
std::vector<float> topk_keep_mask(const float* keep_probs, const float* alive,
                                  std::int64_t n, double rho);

}  // namespace spikeprune
