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

#include "spikeprune/pruning.hpp"

#include <algorithm>
#include <cmath>

namespace spikeprune {

namespace {

struct Candidate {
  float magnitude;
  std::int32_t param;
  std::int64_t offset;
};

std::vector<Parameter*> prunable_of(const std::vector<Parameter*>& params) {
  std::vector<Parameter*> out;
  for (Parameter* p : params)
    if (p->prunable) out.push_back(p);
  return out;
}

// Alive candidates sorted by (|w|, param order, flat index).
std::vector<Candidate> sorted_alive(const std::vector<Parameter*>& prunable) {
  std::vector<Candidate> cands;
  for (std::size_t pi = 0; pi < prunable.size(); ++pi) {
    const Parameter* p = prunable[pi];
    for (std::int64_t i = 0; i < p->numel(); ++i) {
      if (p->mask.v[i] == 0.0f) continue;
      cands.push_back({std::fabs(p->value.v[i]), static_cast<std::int32_t>(pi), i});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    if (a.param != b.param) return a.param < b.param;
    return a.offset < b.offset;
  });
  return cands;
}

void remove_candidates(const std::vector<Parameter*>& prunable,
                       const std::vector<Candidate>& cands, std::int64_t count) {
  for (std::int64_t i = 0; i < count; ++i) {
    Parameter* p = prunable[static_cast<std::size_t>(cands[i].param)];
    p->mask.v[cands[i].offset] = 0.0f;
    p->value.v[cands[i].offset] = 0.0f;
  }
}

}  // namespace

TicketSnapshot take_snapshot(const std::vector<Parameter*>& params) {
  TicketSnapshot snap;
  for (const Parameter* p : params) {
    snap.names.push_back(p->name);
    snap.weights.push_back(p->value);
  }
  return snap;
}

void magnitude_prune(const std::vector<Parameter*>& params, double p,
                     PruneScope scope) {
  check_config(p > 0.0 && p < 1.0, "prune fraction must be in (0, 1)");
  auto prunable = prunable_of(params);
  if (scope == PruneScope::global) {
    auto cands = sorted_alive(prunable);
    if (cands.empty()) throw UsageError("pruning saturated: no alive weights left");
    const auto remove =
        static_cast<std::int64_t>(std::floor(p * static_cast<double>(cands.size())));
    remove_candidates(prunable, cands, remove);
    return;
  }
  bool any_alive = false;
  for (Parameter* p_one : prunable) {
    std::vector<Parameter*> one{p_one};
    auto cands = sorted_alive(one);
    if (cands.empty()) continue;
    any_alive = true;
    const auto remove =
        static_cast<std::int64_t>(std::floor(p * static_cast<double>(cands.size())));
    remove_candidates(one, cands, remove);
  }
  if (!any_alive) throw UsageError("pruning saturated: no alive weights left");
}

void rewind(const std::vector<Parameter*>& params, const TicketSnapshot& snapshot) {
  if (snapshot.weights.size() != params.size())
    throw CheckpointError("snapshot parameter count drift");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter* p = params[i];
    if (snapshot.names[i] != p->name)
      throw CheckpointError("snapshot name drift: " + snapshot.names[i] + " vs " +
                            p->name);
    if (!snapshot.weights[i].same_shape(p->value))
      throw CheckpointError("snapshot shape drift for " + p->name);
    if (p->prunable) {
      for (std::int64_t j = 0; j < p->numel(); ++j)
        p->value.v[j] = p->mask.v[j] != 0.0f ? snapshot.weights[i].v[j] : 0.0f;
    } else {
      p->value.v = snapshot.weights[i].v;
    }
  }
}

void rewind_weights_only(const std::vector<Parameter*>& params,
                         const TicketSnapshot& snapshot) {
  if (snapshot.weights.size() != params.size())
    throw CheckpointError("snapshot parameter count drift");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (snapshot.names[i] != params[i]->name)
      throw CheckpointError("snapshot name drift: " + snapshot.names[i]);
    if (!snapshot.weights[i].same_shape(params[i]->value))
      throw CheckpointError("snapshot shape drift for " + params[i]->name);
    params[i]->value.v = snapshot.weights[i].v;
  }
}

void random_reinit(const std::vector<Parameter*>& params, std::mt19937_64& rng) {
  for (Parameter* p : params) {
    const float b = p->init.uniform_bound;
    if (b == 0.0f) {
      std::fill(p->value.v.begin(), p->value.v.end(), 0.0f);
    } else {
      std::uniform_real_distribution<float> dist(-b, b);
      for (auto& x : p->value.v) x = dist(rng);
    }
    if (p->prunable) {
      for (std::int64_t j = 0; j < p->numel(); ++j)
        if (p->mask.v[j] == 0.0f) p->value.v[j] = 0.0f;
    }
  }
}

double measured_sparsity(const std::vector<Parameter*>& params) {
  std::int64_t total = 0, masked = 0;
  for (const Parameter* p : params) {
    if (!p->prunable) continue;
    total += p->numel();
    for (float m : p->mask.v) masked += m == 0.0f ? 1 : 0;
  }
  return total == 0 ? 0.0 : static_cast<double>(masked) / static_cast<double>(total);
}

std::int64_t alive_weight_count(const std::vector<Parameter*>& params) {
  std::int64_t alive = 0;
  for (const Parameter* p : params)
    if (p->prunable) alive += p->alive_count();
  return alive;
}

std::vector<std::uint8_t> mask_fingerprint(const std::vector<Parameter*>& params) {
  std::vector<std::uint8_t> out;
  for (const Parameter* p : params) {
    if (!p->prunable) continue;
    for (float m : p->mask.v) out.push_back(m != 0.0f ? 1 : 0);
  }
  return out;
}

std::vector<std::uint8_t> candidate_mask_at_sparsity(
    const std::vector<Parameter*>& params, double target_sparsity) {
  check_config(target_sparsity >= 0.0 && target_sparsity < 1.0,
               "target sparsity must be in [0, 1)");
  auto prunable = prunable_of(params);
  std::int64_t total = 0;
  for (const Parameter* p : prunable) total += p->numel();
  // Rank every weight (ignoring current masks) by magnitude and drop the
  // bottom share.
  std::vector<Candidate> cands;
  cands.reserve(static_cast<std::size_t>(total));
  for (std::size_t pi = 0; pi < prunable.size(); ++pi) {
    const Parameter* p = prunable[pi];
    for (std::int64_t i = 0; i < p->numel(); ++i)
      cands.push_back({std::fabs(p->value.v[i]), static_cast<std::int32_t>(pi), i});
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    if (a.param != b.param) return a.param < b.param;
    return a.offset < b.offset;
  });
  const auto remove = static_cast<std::int64_t>(
      std::floor(target_sparsity * static_cast<double>(total)));

  std::vector<std::vector<std::uint8_t>> per(prunable.size());
  for (std::size_t pi = 0; pi < prunable.size(); ++pi)
    per[pi].assign(static_cast<std::size_t>(prunable[pi]->numel()), 1);
  for (std::int64_t i = 0; i < remove; ++i)
    per[static_cast<std::size_t>(cands[i].param)][static_cast<std::size_t>(
        cands[i].offset)] = 0;

  std::vector<std::uint8_t> out;
  out.reserve(static_cast<std::size_t>(total));
  for (const auto& v : per) out.insert(out.end(), v.begin(), v.end());
  return out;
}

void apply_mask_fingerprint(const std::vector<Parameter*>& params,
                            const std::vector<std::uint8_t>& fingerprint) {
  std::size_t at = 0;
  for (Parameter* p : params) {
    if (!p->prunable) continue;
    check_dim(at + static_cast<std::size_t>(p->numel()) <= fingerprint.size(),
              "mask fingerprint too short");
    for (std::int64_t i = 0; i < p->numel(); ++i, ++at) {
      p->mask.v[i] = fingerprint[at] ? 1.0f : 0.0f;
      if (!fingerprint[at]) p->value.v[i] = 0.0f;
    }
  }
  check_dim(at == fingerprint.size(), "mask fingerprint too long");
}

double mask_hamming_distance(const std::vector<std::uint8_t>& a,
                             const std::vector<std::uint8_t>& b) {
  check_dim(a.size() == b.size(), "mask fingerprints differ in length");
  check_dim(!a.empty(), "empty mask fingerprint");
  std::int64_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += a[i] != b[i] ? 1 : 0;
  return static_cast<double>(diff) / static_cast<double>(a.size());
}

std::optional<int> eb_detect(const std::vector<std::vector<std::uint8_t>>& mask_history,
                             const PruneConfig& cfg) {
  cfg.validate();
  if (mask_history.empty()) throw UsageError("eb_detect needs a nonempty mask history");
  const int w = cfg.eb_window;
  for (int e = w - 1; e < static_cast<int>(mask_history.size()); ++e) {
    double max_d = 0.0;
    for (int i = e - w + 1; i <= e; ++i)
      for (int j = i + 1; j <= e; ++j)
        max_d = std::max(max_d, mask_hamming_distance(mask_history[static_cast<std::size_t>(i)],
                                                      mask_history[static_cast<std::size_t>(j)]));
    if (max_d < cfg.eb_distance_threshold) return e;
  }
  return std::nullopt;
}

TicketSnapshot imp_loop(Model& model, const PruneConfig& cfg, const ImpHooks& hooks) {
  cfg.validate();
  check_config(static_cast<bool>(hooks.train) && static_cast<bool>(hooks.evaluate),
               "imp_loop needs train and evaluate hooks");
  auto params = model.parameters();

  TicketSnapshot snap = take_snapshot(params);
  // Round 0: converge the dense model.
  RoundMetrics dense;
  dense.round = 0;
  dense.train_loss = hooks.train(model, 0);
  dense.eval_acc = hooks.evaluate(model);
  dense.sparsity = measured_sparsity(params);
  dense.alive_params = alive_weight_count(params);
  snap.metrics.push_back(dense);
  if (cfg.rewind_point == RewindPoint::epoch_k) {
    // Late-rewind variant: the snapshot is re-taken after the dense round,
    // which the round-k hook trainer interprets as its rewind epoch state.
    TicketSnapshot late = take_snapshot(params);
    snap.names = std::move(late.names);
    snap.weights = std::move(late.weights);
  }

  for (int k = 1; k <= cfg.rounds; ++k) {
    magnitude_prune(params, cfg.p, cfg.scope);
    snap.round_masks.push_back(mask_fingerprint(params));
    rewind(params, snap);
    RoundMetrics rm;
    rm.round = k;
    rm.train_loss = hooks.train(model, k);
    rm.eval_acc = hooks.evaluate(model);
    rm.sparsity = measured_sparsity(params);
    rm.alive_params = alive_weight_count(params);
    snap.metrics.push_back(rm);
  }
  return snap;
}

}  // namespace spikeprune
