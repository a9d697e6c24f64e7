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

#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "spikeprune/model.hpp"

namespace spikeprune {

enum class PruneMethod { imp_rewind, random_reinit, early_bird };
enum class RewindPoint { init, epoch_k };
enum class PruneScope { global, per_layer };

struct PruneConfig {
  double p = 0.25;  // fraction of alive weights removed per round
  int rounds = 15;  // K
  PruneMethod method = PruneMethod::imp_rewind;
  RewindPoint rewind_point = RewindPoint::init;
  int rewind_epoch = 0;
  PruneScope scope = PruneScope::global;
  double eb_distance_threshold = 0.1;
  int eb_window = 5;

  void validate() const {
    check_config(p > 0.0 && p < 1.0, "prune fraction must be in (0, 1)");
    check_config(rounds >= 1, "at least one pruning round required");
    check_config(eb_window >= 1, "eb_window must be positive");
    check_config(eb_distance_threshold >= 0.0, "eb threshold must be nonnegative");
  }

  // Analytic sparsity after k rounds.
  static double sparsity_after(double p, int k) {
    double keep = 1.0;
    for (int i = 0; i < k; ++i) keep *= 1.0 - p;
    return 1.0 - keep;
  }
};

struct RoundMetrics {
  int round = 0;
  double sparsity = 0.0;
  double train_loss = 0.0;
  double eval_acc = 0.0;
  std::int64_t alive_params = 0;
};

// Weights at the rewind point plus the mask and metric history of a pruning
// run. Masks are stored as one byte per prunable weight in parameter order.
struct TicketSnapshot {
  std::vector<std::string> names;
  std::vector<Tensor> weights;
  std::vector<std::vector<std::uint8_t>> round_masks;
  std::vector<RoundMetrics> metrics;
};

TicketSnapshot take_snapshot(const std::vector<Parameter*>& params);

// Removes the floor(p * alive) smallest-magnitude alive weights, pooled
// globally over the prunable set (or per tensor under per_layer scope).
// Removed weights get mask 0 and value 0; ties break by parameter order then
// flat index.
void magnitude_prune(const std::vector<Parameter*>& params, double p,
                     PruneScope scope = PruneScope::global);

// Restores unmasked weights to the snapshot bitwise; masked weights become 0.
void rewind(const std::vector<Parameter*>& params, const TicketSnapshot& snapshot);

// Raw weight restore ignoring masks (early-bird bookkeeping).
void rewind_weights_only(const std::vector<Parameter*>& params,
                         const TicketSnapshot& snapshot);

// Redraws every parameter from its recorded init distribution, then re-zeroes
// the masked positions.
void random_reinit(const std::vector<Parameter*>& params, std::mt19937_64& rng);

// Fraction of prunable weights currently masked out.
double measured_sparsity(const std::vector<Parameter*>& params);
std::int64_t alive_weight_count(const std::vector<Parameter*>& params);

// Concatenated {0,1} bytes of all prunable masks, the unit eb_detect works on.
std::vector<std::uint8_t> mask_fingerprint(const std::vector<Parameter*>& params);

// Mask that magnitude pruning WOULD produce at the target sparsity, without
// touching the model. Used to record per-epoch candidate masks for
// early-bird detection.
std::vector<std::uint8_t> candidate_mask_at_sparsity(
    const std::vector<Parameter*>& params, double target_sparsity);

// Writes a fingerprint back onto the prunable masks and zeroes newly masked
// weights. The fingerprint must cover exactly the prunable weight count.
void apply_mask_fingerprint(const std::vector<Parameter*>& params,
                            const std::vector<std::uint8_t>& fingerprint);

double mask_hamming_distance(const std::vector<std::uint8_t>& a,
                             const std::vector<std::uint8_t>& b);

// Earliest index e with max pairwise normalized Hamming distance among
// history[e-w+1..e] below the threshold; nullopt if never stable.
std::optional<int> eb_detect(const std::vector<std::vector<std::uint8_t>>& mask_history,
                             const PruneConfig& cfg);

// Callbacks the IMP loop drives. train returns the final training loss for
// the round and may throw TrainingDiverged; evaluate returns accuracy.
struct ImpHooks {
  std::function<double(Model&, int round)> train;
  std::function<double(Model&)> evaluate;
};

// Classic iterative magnitude pruning: train dense, then repeat
// prune -> rewind -> retrain for cfg.rounds rounds, recording sparsity and
// accuracy each round.
TicketSnapshot imp_loop(Model& model, const PruneConfig& cfg, const ImpHooks& hooks);

}  // namespace spikeprune
