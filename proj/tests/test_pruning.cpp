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

#include <cmath>
#include <random>

#include "spikeprune/pruning.hpp"

using namespace spikeprune;

namespace {

std::unique_ptr<Parameter> make_prunable(const std::string& name,
                                         std::vector<float> vals,
                                         float bound = 0.5f) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  const auto n = static_cast<std::int64_t>(vals.size());
  p->value = Tensor({n}, std::move(vals));
  p->mask = Tensor::full({n}, 1.0f);
  p->prunable = true;
  p->init.uniform_bound = bound;
  return p;
}

}  // namespace

TEST_CASE("magnitude prune removes the smallest magnitude") {
  auto p = make_prunable("w", {0.5f, -0.1f, 0.3f, -0.7f});
  magnitude_prune({p.get()}, 0.25);
  CHECK(p->mask.v == std::vector<float>{1, 0, 1, 1});
  CHECK(p->value.v[1] == 0.0f);
}

TEST_CASE("alive counts follow floor arithmetic across repeated pruning") {
  std::vector<float> vals(16);
  for (int i = 0; i < 16; ++i) vals[static_cast<std::size_t>(i)] = 0.1f * (i + 1);
  auto p = make_prunable("w", vals);
  CHECK(p->alive_count() == 16);
  magnitude_prune({p.get()}, 0.25);
  CHECK(p->alive_count() == 12);
  magnitude_prune({p.get()}, 0.25);
  CHECK(p->alive_count() == 9);  // floor(0.25 * 12) = 3 removed
}

TEST_CASE("equal magnitudes break ties by stable index order") {
  auto p = make_prunable("w", std::vector<float>(8, 0.4f));
  magnitude_prune({p.get()}, 0.5);
  CHECK(p->mask.v == std::vector<float>{0, 0, 0, 0, 1, 1, 1, 1});
}

TEST_CASE("pruning with nothing alive reports saturation") {
  auto p = make_prunable("w", {0.1f, 0.2f});
  std::fill(p->mask.v.begin(), p->mask.v.end(), 0.0f);
  CHECK_THROWS_WITH_AS(magnitude_prune({p.get()}, 0.5),
                       doctest::Contains("saturated"), UsageError);
}

TEST_CASE("global pooling equals the sort oracle across tensors") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> a(24), b(40);
  for (auto& x : a) x = dist(rng);
  for (auto& x : b) x = dist(rng);
  auto pa = make_prunable("a", a);
  auto pb = make_prunable("b", b);
  magnitude_prune({pa.get(), pb.get()}, 0.3);

  // Oracle: rank all 64 magnitudes, remove the bottom floor(0.3 * 64).
  std::vector<std::pair<float, int>> ranked;
  for (int i = 0; i < 24; ++i) ranked.push_back({std::fabs(a[static_cast<std::size_t>(i)]), i});
  for (int i = 0; i < 40; ++i)
    ranked.push_back({std::fabs(b[static_cast<std::size_t>(i)]), 24 + i});
  std::sort(ranked.begin(), ranked.end());
  std::vector<float> expect(64, 1.0f);
  for (int i = 0; i < 19; ++i) expect[static_cast<std::size_t>(ranked[i].second)] = 0.0f;
  for (int i = 0; i < 24; ++i) CHECK(pa->mask.v[i] == expect[static_cast<std::size_t>(i)]);
  for (int i = 0; i < 40; ++i)
    CHECK(pb->mask.v[i] == expect[static_cast<std::size_t>(24 + i)]);
}

TEST_CASE("per-layer scope prunes each tensor by its own quota") {
  auto pa = make_prunable("a", {0.9f, 0.8f, 0.7f, 0.6f});
  auto pb = make_prunable("b", {0.01f, 0.02f, 0.03f, 0.04f});
  magnitude_prune({pa.get(), pb.get()}, 0.5, PruneScope::per_layer);
  CHECK(pa->alive_count() == 2);
  CHECK(pb->alive_count() == 2);
}

TEST_CASE("rewind restores the snapshot at alive positions and zero elsewhere") {
  auto p = make_prunable("w", {0.5f, -0.1f, 0.3f, -0.7f});
  TicketSnapshot snap = take_snapshot({p.get()});

  // All-ones mask: bitwise equality with the snapshot.
  p->value.v = {9.0f, 9.0f, 9.0f, 9.0f};
  rewind({p.get()}, snap);
  CHECK(p->value.v == std::vector<float>{0.5f, -0.1f, 0.3f, -0.7f});

  // All-zeros mask: everything zero.
  std::fill(p->mask.v.begin(), p->mask.v.end(), 0.0f);
  rewind({p.get()}, snap);
  CHECK(p->value.v == std::vector<float>{0, 0, 0, 0});

  // Random mask: elementwise select(mask, snapshot, 0).
  p->mask.v = {1.0f, 0.0f, 0.0f, 1.0f};
  rewind({p.get()}, snap);
  CHECK(p->value.v == std::vector<float>{0.5f, 0.0f, 0.0f, -0.7f});
}

TEST_CASE("rewind rejects a drifted snapshot") {
  auto p = make_prunable("w", {0.5f, 0.2f});
  TicketSnapshot snap = take_snapshot({p.get()});
  snap.weights[0] = Tensor::zeros({3});
  CHECK_THROWS_AS(rewind({p.get()}, snap), CheckpointError);
}

TEST_CASE("random reinit keeps masked positions at exactly zero") {
  auto p = make_prunable("w", std::vector<float>(64, 0.3f));
  p->mask.v[3] = p->mask.v[17] = p->mask.v[40] = 0.0f;
  std::mt19937_64 rng(11);
  random_reinit({p.get()}, rng);
  CHECK(p->value.v[3] == 0.0f);
  CHECK(p->value.v[17] == 0.0f);
  CHECK(p->value.v[40] == 0.0f);

  auto q = make_prunable("w", std::vector<float>(64, 0.3f));
  q->mask.v = p->mask.v;
  std::mt19937_64 rng2(11);
  random_reinit({q.get()}, rng2);
  CHECK(q->value.v == p->value.v);  // same seed, identical draw
}

TEST_CASE("random reinit matches the recorded init distribution") {
  const std::int64_t n = 10000;
  auto p = make_prunable("w", std::vector<float>(static_cast<std::size_t>(n), 0.0f), 0.5f);
  std::mt19937_64 rng(13);
  random_reinit({p.get()}, rng);
  double mean = 0.0;
  for (float x : p->value.v) mean += x;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (float x : p->value.v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(n - 1);
  // U(-0.5, 0.5): mean 0, sd sqrt(1/12) * 1.0 = 0.2887.
  const double se_mean = 0.2887 / std::sqrt(static_cast<double>(n));
  CHECK(std::abs(mean) < 3.0 * se_mean);
  CHECK(std::sqrt(var) == doctest::Approx(0.2887).epsilon(0.05));
}

TEST_CASE("imp loop records the analytic sparsity ladder") {
  ModelConfig cfg;
  cfg.timesteps = 2;
  cfg.depth = 4;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.image_hw = 16;
  cfg.sps_stages = {{8, 2, false}, {16, 2, false}};
  Model model(cfg);
  std::mt19937_64 rng(17);
  model.init_params(rng);

  PruneConfig pc;
  pc.p = 0.25;
  pc.rounds = 9;
  ImpHooks hooks;
  hooks.train = [](Model&, int) { return 0.0; };
  hooks.evaluate = [](Model&) { return 0.0; };
  const double total = static_cast<double>(alive_weight_count(model.parameters()));
  TicketSnapshot snap = imp_loop(model, pc, hooks);

  REQUIRE(snap.metrics.size() == 10);
  CHECK(snap.metrics[0].sparsity == 0.0);
  for (int k = 1; k <= 9; ++k) {
    const double analytic = PruneConfig::sparsity_after(0.25, k);
    // Floor quantization accumulates at most one weight per round.
    const double bound = static_cast<double>(k) / total + 1e-12;
    CHECK(std::abs(snap.metrics[static_cast<std::size_t>(k)].sparsity - analytic) <=
          bound);
  }
  // Paper-adjacent spot values.
  CHECK(snap.metrics[5].sparsity == doctest::Approx(0.7627).epsilon(0.002));
  CHECK(PruneConfig::sparsity_after(0.25, 15) == doctest::Approx(0.98664).epsilon(1e-4));
  CHECK(PruneConfig::sparsity_after(0.25, 0) == 0.0);

  // Mask nesting: later masks never revive a weight.
  for (std::size_t k = 1; k < snap.round_masks.size(); ++k)
    for (std::size_t i = 0; i < snap.round_masks[k].size(); ++i)
      CHECK(snap.round_masks[k][i] <= snap.round_masks[k - 1][i]);
}

TEST_CASE("mask fingerprints round trip") {
  auto pa = make_prunable("a", {0.1f, 0.2f, 0.3f});
  auto pb = make_prunable("b", {0.4f, 0.5f});
  pa->mask.v = {1.0f, 0.0f, 1.0f};
  pb->mask.v = {0.0f, 1.0f};
  auto fp = mask_fingerprint({pa.get(), pb.get()});
  CHECK(fp == std::vector<std::uint8_t>{1, 0, 1, 0, 1});

  auto qa = make_prunable("a", {1.0f, 1.0f, 1.0f});
  auto qb = make_prunable("b", {1.0f, 1.0f});
  apply_mask_fingerprint({qa.get(), qb.get()}, fp);
  CHECK(qa->mask.v == pa->mask.v);
  CHECK(qb->mask.v == pb->mask.v);
  CHECK(qa->value.v[1] == 0.0f);
}

TEST_CASE("eb detection: identical masks stabilize at the window end") {
  PruneConfig pc;
  pc.eb_window = 5;
  pc.eb_distance_threshold = 0.1;
  std::vector<std::vector<std::uint8_t>> hist(7, std::vector<std::uint8_t>{1, 0, 1, 1});
  auto got = eb_detect(hist, pc);
  REQUIRE(got.has_value());
  CHECK(*got == 4);
}

TEST_CASE("eb detection: alternating complements never stabilize") {
  PruneConfig pc;
  pc.eb_window = 3;
  pc.eb_distance_threshold = 0.5;
  std::vector<std::vector<std::uint8_t>> hist;
  for (int i = 0; i < 10; ++i) {
    std::vector<std::uint8_t> m(8, static_cast<std::uint8_t>(i % 2));
    hist.push_back(m);
  }
  CHECK(!eb_detect(hist, pc).has_value());
}

TEST_CASE("eb detection matches a scripted geometric-convergence oracle") {
  // Masks over 256 weights; epoch e flips floor(64 * 0.5^e) bits vs epoch
  // e-1, so distances shrink geometrically.
  const int epochs = 12;
  std::vector<std::vector<std::uint8_t>> hist;
  std::vector<std::uint8_t> cur(256, 1);
  for (std::size_t i = 0; i < 128; ++i) cur[i] = 0;
  std::mt19937_64 rng(23);
  for (int e = 0; e < epochs; ++e) {
    if (e > 0) {
      const auto flips = static_cast<int>(64.0 * std::pow(0.5, e));
      std::uniform_int_distribution<std::size_t> pick(0, 255);
      for (int f = 0; f < flips; ++f) {
        const auto at = pick(rng);
        cur[at] = static_cast<std::uint8_t>(1 - cur[at]);
      }
    }
    hist.push_back(cur);
  }
  PruneConfig pc;
  pc.eb_window = 3;
  pc.eb_distance_threshold = 0.02;

  // Independent oracle: same detection rule in plain loops over the history.
  auto oracle = [&]() -> int {
    for (int e = pc.eb_window - 1; e < epochs; ++e) {
      double mx = 0.0;
      for (int i = e - pc.eb_window + 1; i <= e; ++i)
        for (int j = i + 1; j <= e; ++j) {
          int d = 0;
          for (std::size_t q = 0; q < 256; ++q)
            d += hist[static_cast<std::size_t>(i)][q] != hist[static_cast<std::size_t>(j)][q];
          mx = std::max(mx, d / 256.0);
        }
      if (mx < pc.eb_distance_threshold) return e;
    }
    return -1;
  };
  auto got = eb_detect(hist, pc);
  const int expect = oracle();
  if (expect < 0) {
    CHECK(!got.has_value());
  } else {
    REQUIRE(got.has_value());
    CHECK(*got == expect);
  }
}

TEST_CASE("eb detection with an empty history is a usage error") {
  PruneConfig pc;
  CHECK_THROWS_AS(eb_detect({}, pc), UsageError);
}
