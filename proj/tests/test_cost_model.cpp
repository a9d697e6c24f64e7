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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>

#include "spikeprune/config.hpp"
#include "spikeprune/cost_model.hpp"

using namespace spikeprune;

namespace {

double reduction(std::uint64_t dense, std::uint64_t pruned) {
  return 1.0 - static_cast<double>(pruned) / static_cast<double>(dense);
}

}  // namespace

TEST_CASE("reference-scale dense cost lands within ten percent of 3.74 G") {
  ModelConfig mc = ExperimentConfig::paper_dims_model();
  CostReport dense = count_flops(mc, KeepSchedule::dense(mc));
  const double g = static_cast<double>(dense.total_flops) / 1e9;
  CHECK(g > 3.74 * 0.9);
  CHECK(g < 3.74 * 1.1);
  CHECK(dense.total_flops_mac2 == 2 * dense.total_flops);
}

TEST_CASE("keep-ratio ladder reductions match the published table within 2 points") {
  ModelConfig mc = ExperimentConfig::paper_dims_model();
  const std::uint64_t dense = count_flops(mc, KeepSchedule::dense(mc)).total_flops;
  // 3.74G dense against 3.44/3.24/3.04/2.88/2.75 at rho 0.9..0.5.
  const double expected[] = {1 - 3.44 / 3.74, 1 - 3.24 / 3.74, 1 - 3.04 / 3.74,
                             1 - 2.88 / 3.74, 1 - 2.75 / 3.74};
  const double rhos[] = {0.9, 0.8, 0.7, 0.6, 0.5};
  for (int i = 0; i < 5; ++i) {
    const std::uint64_t pruned =
        count_flops(mc, KeepSchedule::entry_gated(mc, rhos[i])).total_flops;
    const double got = reduction(dense, pruned);
    CAPTURE(rhos[i]);
    CHECK(std::abs(got - expected[i]) < 0.02);
  }
}

TEST_CASE("an all-ones schedule equals the dense report except selector modules") {
  ModelConfig mc = ExperimentConfig::paper_dims_model();
  CostReport dense = count_flops(mc, KeepSchedule::dense(mc));
  CostReport full = count_flops(mc, KeepSchedule::entry_gated(mc, 1.0));
  // rho = 1 keeps every token; the only difference is the selector modules
  // present in the gated layout.
  std::uint64_t selector_cost = 0;
  for (const auto& lc : full.per_layer)
    if (lc.name.rfind("selector.", 0) == 0) selector_cost += lc.flops;
  CHECK(full.total_flops == dense.total_flops + selector_cost);
}

TEST_CASE("cost is monotone in every schedule entry and linear in MLP tokens") {
  ModelConfig mc;
  mc.embed_dim = 96;
  mc.heads = 3;
  KeepSchedule base = KeepSchedule::dense(mc);
  const std::uint64_t dense_total = count_flops(mc, base).total_flops;
  for (std::size_t l = 0; l < base.block_tokens.size(); ++l) {
    KeepSchedule s = base;
    s.block_tokens[l] -= 16;
    const std::uint64_t pruned = count_flops(mc, s).total_flops;
    CHECK(pruned < dense_total);
  }
  // MLP flops scale exactly with the token count.
  KeepSchedule half = base;
  half.block_tokens[2] = base.block_tokens[2] / 2;
  CostReport a = count_flops(mc, base);
  CostReport b = count_flops(mc, half);
  std::uint64_t mlp_a = 0, mlp_b = 0;
  for (const auto& lc : a.per_layer)
    if (lc.name == "block.3.mlp") mlp_a = lc.flops;
  for (const auto& lc : b.per_layer)
    if (lc.name == "block.3.mlp") mlp_b = lc.flops;
  CHECK(mlp_a == 2 * mlp_b);
}

TEST_CASE("report total equals the sum of the per-layer entries") {
  ModelConfig mc = ExperimentConfig::paper_dims_model();
  CostReport rep = count_flops(mc, KeepSchedule::entry_gated(mc, 0.7));
  std::uint64_t sum = 0;
  for (const auto& lc : rep.per_layer) sum += lc.flops;
  CHECK(sum == rep.total_flops);
}

TEST_CASE("dense and sparse accounting agree exactly at zero sparsity") {
  ModelConfig mc;
  KeepSchedule s = KeepSchedule::exit_gated(mc, 0.7);
  CostReport a = count_flops(mc, s, 0.0, false);
  CostReport b = count_flops(mc, s, 0.0, true);
  CHECK(a.total_flops == b.total_flops);
  // With sparsity, sparse execution accounting reduces prunable layers.
  CostReport c = count_flops(mc, s, 0.5, true);
  CostReport d = count_flops(mc, s, 0.5, false);
  CHECK(c.total_flops < d.total_flops);
  CHECK(d.total_flops == a.total_flops);  // dense accounting ignores sparsity
}

TEST_CASE("inconsistent schedules are config errors") {
  ModelConfig mc;
  KeepSchedule s = KeepSchedule::dense(mc);
  s.block_tokens.pop_back();
  CHECK_THROWS_AS(count_flops(mc, s), ConfigError);
  KeepSchedule s2 = KeepSchedule::dense(mc);
  s2.block_tokens[0] = mc.tokens() + 1;
  CHECK_THROWS_AS(count_flops(mc, s2), ConfigError);
}

TEST_CASE("firing rate map is the mean over time and channels") {
  SpikeTensor zeros(3, 5, 4);
  for (double v : firing_rate_map(zeros)) CHECK(v == 0.0);
  SpikeTensor ones(3, 5, 4);
  std::fill(ones.data.begin(), ones.data.end(), 1.0f);
  for (double v : firing_rate_map(ones)) CHECK(v == 1.0);

  std::mt19937_64 rng(3);
  SpikeTensor r(4, 6, 5);
  std::bernoulli_distribution coin(0.3);
  for (auto& v : r.data) v = coin(rng) ? 1.0f : 0.0f;
  auto got = firing_rate_map(r);
  for (std::int64_t n = 0; n < 6; ++n) {
    double acc = 0.0;
    for (std::int64_t t = 0; t < 4; ++t)
      for (std::int64_t d = 0; d < 5; ++d) acc += r.at(t, n, d);
    CHECK(got[static_cast<std::size_t>(n)] == doctest::Approx(acc / 20.0).epsilon(1e-9));
  }
}

TEST_CASE("attention map export is byte-reproducible and the CSV round trips") {
  const std::string dir = "/tmp/spikeprune_test_maps";
  std::filesystem::create_directories(dir);
  std::vector<double> map(16);
  for (int i = 0; i < 16; ++i) map[static_cast<std::size_t>(i)] = i / 15.0;
  export_attention_map(map, 4, 4, dir + "/a.ppm", 4);
  export_attention_map(map, 4, 4, dir + "/b.ppm", 4);
  std::ifstream fa(dir + "/a.ppm", std::ios::binary);
  std::ifstream fb(dir + "/b.ppm", std::ios::binary);
  std::string sa((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
  std::string sb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
  CHECK(sa == sb);
  CHECK(sa.rfind("P6\n16 16\n255\n", 0) == 0);

  // CSV twin round trip within 1e-6.
  std::ifstream csv(dir + "/a.csv");
  std::string line;
  std::getline(csv, line);
  CHECK(line == "token_index,row,col,rate");
  int idx = 0;
  while (std::getline(csv, line)) {
    long long ti, row, col;
    double rate;
    REQUIRE(std::sscanf(line.c_str(), "%lld,%lld,%lld,%lf", &ti, &row, &col, &rate) == 4);
    CHECK(ti == idx);
    CHECK(std::abs(rate - map[static_cast<std::size_t>(idx)]) < 1e-6);
    ++idx;
  }
  CHECK(idx == 16);
}

TEST_CASE("uniform and single-hot maps color as expected") {
  const std::string dir = "/tmp/spikeprune_test_maps";
  std::filesystem::create_directories(dir);
  std::vector<double> uniform(4, 0.5);
  export_attention_map(uniform, 2, 2, dir + "/u.ppm", 1);
  std::ifstream f(dir + "/u.ppm", std::ios::binary);
  std::string s((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  const std::string body = s.substr(s.find("255\n") + 4);
  REQUIRE(body.size() == 12);
  for (int px = 0; px < 4; ++px) {
    CHECK(static_cast<unsigned char>(body[static_cast<std::size_t>(3 * px)]) == 128);
    CHECK(static_cast<unsigned char>(body[static_cast<std::size_t>(3 * px + 1)]) == 0);
    CHECK(static_cast<unsigned char>(body[static_cast<std::size_t>(3 * px + 2)]) == 128);
  }

  std::vector<double> hot(4, 0.0);
  hot[2] = 1.0;
  export_attention_map(hot, 2, 2, dir + "/h.ppm", 1);
  std::ifstream f2(dir + "/h.ppm", std::ios::binary);
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  const std::string body2 = s2.substr(s2.find("255\n") + 4);
  CHECK(static_cast<unsigned char>(body2[6]) == 255);  // red at the hot cell
  CHECK(static_cast<unsigned char>(body2[8]) == 0);
  CHECK(static_cast<unsigned char>(body2[0]) == 0);  // blue elsewhere
  CHECK(static_cast<unsigned char>(body2[2]) == 255);
}

TEST_CASE("grid mismatch in map export is a dimension error") {
  std::vector<double> map(10, 0.5);
  CHECK_THROWS_AS(export_attention_map(map, 3, 4, "/tmp/x.ppm"), DimensionError);
}

TEST_CASE("throughput bench rejects empty batches and reports medians") {
  ModelConfig mc;
  mc.timesteps = 1;
  mc.depth = 1;
  mc.embed_dim = 8;
  mc.heads = 2;
  mc.mlp_ratio = 1.0;
  mc.image_hw = 8;
  mc.selector_layers = {};
  mc.sps_stages = {{4, 2, false}, {8, 2, false}};
  Model model(mc);
  std::mt19937_64 rng(3);
  model.init_params(rng);
  CHECK_THROWS_AS(throughput_bench(model, Tensor{}, 1, EvalOptions{}), UsageError);

  Tensor images({4, 3, 8, 8});
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : images.v) v = dist(rng);
  ThroughputResult one = throughput_bench(model, images, 1, EvalOptions{});
  CHECK(one.repeats == 1);
  CHECK(one.images_per_sec > 0.0);
  CHECK(one.spread == 0.0);  // a single run has no dispersion

  // Doubling the batch must not halve per-image throughput by more than 2x.
  Tensor images2({8, 3, 8, 8});
  for (auto& v : images2.v) v = dist(rng);
  ThroughputResult a = throughput_bench(model, images, 5, EvalOptions{});
  ThroughputResult b = throughput_bench(model, images2, 5, EvalOptions{});
  CHECK(b.images_per_sec > a.images_per_sec / 2.0);
}
