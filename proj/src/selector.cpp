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

#include "spikeprune/selector.hpp"

#include <algorithm>
#include <cmath>

#include "spikeprune/kernels.hpp"

namespace spikeprune {

Tensor temporal_gap(const SpikeTensor& x) {
  check_dim(x.timesteps >= 1, "temporal_gap needs at least one timestep");
  Tensor out({x.tokens, x.channels});
  kern::axis0_mean(x.data.data(), out.data(), x.timesteps, x.tokens * x.channels);
  return out;
}

TokenScore score_tokens(const Tensor& gap, const ScorerView& scorer) {
  check_dim(gap.rank() == 2, "score_tokens expects [N, D] features");
  const std::int64_t n = gap.dim(0);
  const std::int64_t d = gap.dim(1);
  check_dim(scorer.w1 && scorer.w2, "scorer parameters missing");
  check_dim(scorer.w1->value.dim(0) == d, "scorer input width vs features");
  const std::int64_t hidden = scorer.w1->value.dim(1);
  check_dim(scorer.w2->value.dim(0) == hidden && scorer.w2->value.dim(1) == 2,
            "scorer output must have 2 classes");

  Tensor h({n, hidden});
  kern::matmul(gap.data(), scorer.w1->value.data(), h.data(), n, d, hidden, false,
               false, false);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t j = 0; j < hidden; ++j) h.v[r * hidden + j] += scorer.b1->value.v[j];
  kern::vrelu(h.data(), h.data(), h.numel());

  Tensor logits({n, 2});
  kern::matmul(h.data(), scorer.w2->value.data(), logits.data(), n, hidden, 2, false,
               false, false);
  TokenScore out;
  out.s = Tensor({n, 2});
  for (std::int64_t r = 0; r < n; ++r) {
    const float l0 = logits.v[2 * r] + scorer.b2->value.v[0];
    const float l1 = logits.v[2 * r + 1] + scorer.b2->value.v[1];
    const float mx = std::max(l0, l1);
    const float e0 = std::exp(l0 - mx);
    const float e1 = std::exp(l1 - mx);
    out.s.v[2 * r] = e0 / (e0 + e1);
    out.s.v[2 * r + 1] = e1 / (e0 + e1);
  }
  return out;
}

std::int64_t kept_count(double rho, std::int64_t alive) {
  if (alive <= 0) return 0;
  return static_cast<std::int64_t>(
      std::ceil(rho * static_cast<double>(alive) - 1e-9));
}

std::vector<float> topk_keep_mask(const float* keep_probs, const float* alive,
                                  std::int64_t n, double rho) {
  std::vector<std::int64_t> idx;
  idx.reserve(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    if (alive == nullptr || alive[i] != 0.0f) idx.push_back(i);
  const std::int64_t k = kept_count(rho, static_cast<std::int64_t>(idx.size()));
  std::stable_sort(idx.begin(), idx.end(), [&](std::int64_t a, std::int64_t b) {
    if (keep_probs[a] != keep_probs[b]) return keep_probs[a] > keep_probs[b];
    return a < b;
  });
  std::vector<float> mask(static_cast<std::size_t>(n), 0.0f);
  for (std::int64_t j = 0; j < k; ++j) mask[static_cast<std::size_t>(idx[j])] = 1.0f;
  return mask;
}

TokenDecision sample_keep_decision(const TokenScore& s, const SelectorConfig& cfg,
                                   SelectorMode mode, std::mt19937_64* rng,
                                   const std::vector<float>* alive) {
  cfg.validate();
  check_dim(s.s.rank() == 2 && s.s.dim(1) == 2, "token score must be [N, 2]");
  const std::int64_t n = s.s.dim(0);
  if (alive)
    check_dim(static_cast<std::int64_t>(alive->size()) == n,
              "alive mask length vs token count");

  TokenDecision d;
  d.hard.assign(static_cast<std::size_t>(n), 0.0f);
  d.soft.assign(static_cast<std::size_t>(n), 0.0f);

  if (mode == SelectorMode::eval) {
    std::vector<float> keep_probs(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i)
      keep_probs[static_cast<std::size_t>(i)] = s.s.v[2 * i];
    d.hard = topk_keep_mask(keep_probs.data(), alive ? alive->data() : nullptr, n,
                            cfg.rho);
    d.soft = d.hard;
    return d;
  }

  check_config(rng != nullptr, "train-mode sampling needs an RNG");
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  const double tau = cfg.gumbel_temperature;
  for (std::int64_t i = 0; i < n; ++i) {
    // Gumbel-max over the two classes is an exact categorical sample.
    const double gk = -std::log(-std::log(uni(*rng)));
    const double gd = -std::log(-std::log(uni(*rng)));
    const double zk = std::log(static_cast<double>(s.s.v[2 * i])) + gk;
    const double zd = std::log(static_cast<double>(s.s.v[2 * i + 1])) + gd;
    d.hard[static_cast<std::size_t>(i)] = zk >= zd ? 1.0f : 0.0f;
    const double m = std::max(zk, zd);
    const double ek = std::exp((zk - m) / tau);
    const double ed = std::exp((zd - m) / tau);
    d.soft[static_cast<std::size_t>(i)] = static_cast<float>(ek / (ek + ed));
  }
  return d;
}

TokenDecision compose_decision(const TokenDecision& prev, const TokenDecision& next) {
  check_dim(prev.hard.size() == next.hard.size(),
            "compose_decision token count mismatch");
  TokenDecision out;
  const std::size_t n = prev.hard.size();
  out.hard.resize(n);
  out.soft.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.hard[i] = prev.hard[i] * next.hard[i];
    out.soft[i] = prev.soft[i] * next.soft[i];
  }
  out.layer_history = prev.layer_history;
  out.layer_history.push_back(out.hard);
  return out;
}

std::vector<std::int64_t> keep_schedule(double rho, const std::vector<int>& selector_layers,
                                        std::int64_t tokens) {
  check_config(rho > 0.0 && rho <= 1.0, "keep ratio must be in (0, 1]");
  std::vector<std::int64_t> counts;
  std::int64_t alive = tokens;
  for (std::size_t s = 0; s < selector_layers.size(); ++s) {
    alive = kept_count(rho, alive);
    counts.push_back(alive);
  }
  return counts;
}

}  // namespace spikeprune
