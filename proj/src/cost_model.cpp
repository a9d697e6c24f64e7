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

#include "spikeprune/cost_model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "spikeprune/selector.hpp"

namespace spikeprune {

namespace {

constexpr char kConvention[] =
    "multiply-accumulate count (1 MAC = 1 FLOP) over convs, linears, and "
    "attention products; per-timestep compute multiplied by T; head counted "
    "once after temporal pooling; total_flops_mac2 doubles every MAC";

std::int64_t alive_of(std::int64_t weights, double sparsity) {
  return static_cast<std::int64_t>(
      std::llround((1.0 - sparsity) * static_cast<double>(weights)));
}

}  // namespace

KeepSchedule KeepSchedule::dense(const ModelConfig& cfg) {
  KeepSchedule s;
  s.block_tokens.assign(static_cast<std::size_t>(cfg.depth), cfg.tokens());
  s.head_tokens = cfg.tokens();
  return s;
}

KeepSchedule KeepSchedule::entry_gated(const ModelConfig& cfg, double rho) {
  check_config(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");
  const std::int64_t n = cfg.tokens();
  const auto apps = static_cast<std::int64_t>(cfg.selector_layers.size());
  check_config(apps < cfg.depth, "entry gating needs fewer selectors than blocks");
  KeepSchedule s;
  std::int64_t alive = n;
  for (std::int64_t l = 0; l < cfg.depth; ++l) {
    if (l >= cfg.depth - apps) {
      s.selector_tokens.push_back(alive);
      alive = kept_count(rho, alive);
    }
    s.block_tokens.push_back(alive);
  }
  s.head_tokens = alive;
  return s;
}

KeepSchedule KeepSchedule::exit_gated(const ModelConfig& cfg, double rho) {
  check_config(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");
  KeepSchedule s;
  std::int64_t alive = cfg.tokens();
  for (std::int64_t l = 1; l <= cfg.depth; ++l) {
    s.block_tokens.push_back(alive);
    const bool sel = std::find(cfg.selector_layers.begin(), cfg.selector_layers.end(),
                               static_cast<int>(l)) != cfg.selector_layers.end();
    if (sel) {
      s.selector_tokens.push_back(alive);
      alive = kept_count(rho, alive);
    }
  }
  s.head_tokens = alive;
  return s;
}

void KeepSchedule::validate(const ModelConfig& cfg) const {
  const std::int64_t n = cfg.tokens();
  check_config(static_cast<std::int64_t>(block_tokens.size()) == cfg.depth,
               "schedule must name one token count per encoder block");
  for (auto t : block_tokens)
    check_config(t >= 0 && t <= n, "block token count outside [0, N]");
  for (auto t : selector_tokens)
    check_config(t >= 0 && t <= n, "selector token count outside [0, N]");
  check_config(head_tokens >= 0 && head_tokens <= n, "head token count outside [0, N]");
}

CostReport count_flops(const ModelConfig& cfg, const KeepSchedule& schedule,
                       double weight_sparsity, bool sparse_exec) {
  cfg.validate();
  schedule.validate(cfg);
  check_config(weight_sparsity >= 0.0 && weight_sparsity < 1.0,
               "weight sparsity must be in [0, 1)");
  const double keep = sparse_exec ? 1.0 - weight_sparsity : 1.0;
  const std::int64_t t = cfg.timesteps;
  const std::int64_t d = cfg.embed_dim;
  const std::int64_t hidden = cfg.mlp_hidden();

  CostReport rep;
  rep.convention = kConvention;
  auto add = [&](const std::string& name, double macs, std::int64_t tokens,
                 std::int64_t weights, bool prunable) {
    LayerCost lc;
    lc.name = name;
    lc.flops = static_cast<std::uint64_t>(
        std::llround(macs * (prunable ? keep : 1.0)));
    lc.token_count = tokens;
    lc.alive_weights = prunable ? alive_of(weights, weight_sparsity) : weights;
    rep.per_layer.push_back(std::move(lc));
  };

  // SPS stages at full resolution; token pruning never reaches them.
  std::int64_t res = cfg.image_hw;
  std::int64_t in_ch = cfg.image_channels;
  for (std::size_t s = 0; s < cfg.sps_stages.size(); ++s) {
    const auto& st = cfg.sps_stages[s];
    const std::int64_t out_res = res / st.stride;
    const double macs = static_cast<double>(out_res) * out_res *
                        static_cast<double>(in_ch) * 9.0 *
                        static_cast<double>(st.out_channels) * static_cast<double>(t);
    add("sps." + std::to_string(s), macs, out_res * out_res,
        in_ch * 9 * st.out_channels, true);
    res = out_res;
    if (st.pool) res /= 2;
    in_ch = st.out_channels;
  }
  if (cfg.pos_conv) {
    const std::int64_t g = cfg.grid();
    add("pos_conv",
        static_cast<double>(g) * g * static_cast<double>(d) * 9.0 *
            static_cast<double>(d) * static_cast<double>(t),
        g * g, d * 9 * d, true);
  }

  for (std::int64_t l = 1; l <= cfg.depth; ++l) {
    const auto n = static_cast<double>(
        schedule.block_tokens[static_cast<std::size_t>(l - 1)]);
    const std::string p = "block." + std::to_string(l) + ".";
    const double dd = static_cast<double>(d);
    add(p + "qkv", 3.0 * n * dd * dd * t,
        schedule.block_tokens[static_cast<std::size_t>(l - 1)], 3 * d * d, true);
    add(p + "attn", 2.0 * n * n * dd * t,
        schedule.block_tokens[static_cast<std::size_t>(l - 1)], 0, false);
    add(p + "proj", n * dd * dd * t,
        schedule.block_tokens[static_cast<std::size_t>(l - 1)], d * d, true);
    add(p + "mlp", 2.0 * n * dd * static_cast<double>(hidden) * t,
        schedule.block_tokens[static_cast<std::size_t>(l - 1)], 2 * d * hidden, true);
  }

  const std::int64_t sh = cfg.scorer_hidden();
  for (std::size_t s = 0; s < schedule.selector_tokens.size(); ++s) {
    const auto n = static_cast<double>(schedule.selector_tokens[s]);
    // Scorer runs on temporally pooled features: no factor T.
    add("selector." + std::to_string(s),
        n * (static_cast<double>(d) * sh + static_cast<double>(sh) * 2.0),
        schedule.selector_tokens[s], d * sh + sh * 2, false);
  }

  add("head", static_cast<double>(d) * static_cast<double>(cfg.num_classes),
      schedule.head_tokens, d * cfg.num_classes, true);

  for (const auto& lc : rep.per_layer) rep.total_flops += lc.flops;
  rep.total_flops_mac2 = 2 * rep.total_flops;
  return rep;
}

std::string CostReport::to_json() const {
  nlohmann::json j;
  j["convention"] = convention;
  j["total_flops"] = total_flops;
  j["total_flops_mac2"] = total_flops_mac2;
  j["wall_throughput"] = wall_throughput;
  j["firing_rates"] = firing_rates;
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& lc : per_layer) {
    nlohmann::json e;
    e["name"] = lc.name;
    e["flops"] = lc.flops;
    e["token_count"] = lc.token_count;
    e["alive_weights"] = lc.alive_weights;
    layers.push_back(std::move(e));
  }
  j["per_layer"] = std::move(layers);
  return j.dump(2) + "\n";
}

std::vector<double> firing_rate_map(const SpikeTensor& x) {
  std::vector<double> out(static_cast<std::size_t>(x.tokens), 0.0);
  if (x.timesteps == 0 || x.channels == 0) return out;
  for (std::int64_t n = 0; n < x.tokens; ++n) {
    double acc = 0.0;
    for (std::int64_t t = 0; t < x.timesteps; ++t)
      for (std::int64_t d = 0; d < x.channels; ++d) acc += x.at(t, n, d);
    out[static_cast<std::size_t>(n)] =
        acc / static_cast<double>(x.timesteps * x.channels);
  }
  return out;
}

ThroughputResult throughput_bench(const Model& model, const Tensor& images,
                                  int repeats, const EvalOptions& opts) {
  if (images.numel() == 0) throw UsageError("throughput_bench needs a nonempty batch");
  check_config(repeats >= 1, "repeats must be positive");
  const std::int64_t batch = images.dim(0);
  (void)model.forward_eval(images, opts);  // warmup
  std::vector<double> ips;
  for (int r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    (void)model.forward_eval(images, opts);
    const auto stop = std::chrono::steady_clock::now();
    const double sec = std::chrono::duration<double>(stop - start).count();
    ips.push_back(static_cast<double>(batch) / std::max(sec, 1e-12));
  }
  std::sort(ips.begin(), ips.end());
  ThroughputResult res;
  res.repeats = repeats;
  res.images_per_sec = ips[ips.size() / 2];
  if (ips.size() % 2 == 0)
    res.images_per_sec = 0.5 * (ips[ips.size() / 2 - 1] + ips[ips.size() / 2]);
  res.spread = ips.back() - ips.front();
  return res;
}

void export_attention_map(const std::vector<double>& map, std::int64_t grid_h,
                          std::int64_t grid_w, const std::string& ppm_path,
                          int cell_px) {
  check_dim(grid_h * grid_w == static_cast<std::int64_t>(map.size()),
            "grid extent vs map length");
  check_config(cell_px >= 1, "cell size must be positive");

  const std::int64_t w = grid_w * cell_px;
  const std::int64_t h = grid_h * cell_px;
  std::string body;
  body.reserve(static_cast<std::size_t>(w * h * 3));
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x) {
      const std::int64_t ty = y / cell_px;
      const std::int64_t tx = x / cell_px;
      double v = map[static_cast<std::size_t>(ty * grid_w + tx)];
      v = std::min(1.0, std::max(0.0, v));
      body.push_back(static_cast<char>(static_cast<int>(std::lround(255.0 * v))));
      body.push_back(static_cast<char>(0));
      body.push_back(static_cast<char>(static_cast<int>(std::lround(255.0 * (1.0 - v)))));
    }
  std::ofstream ppm(ppm_path, std::ios::binary | std::ios::trunc);
  if (!ppm) throw UsageError("cannot open for write: " + ppm_path);
  ppm << "P6\n" << w << " " << h << "\n255\n";
  ppm.write(body.data(), static_cast<std::streamsize>(body.size()));

  std::string csv_path = ppm_path;
  const auto dot = csv_path.rfind('.');
  if (dot != std::string::npos) csv_path.resize(dot);
  csv_path += ".csv";
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw UsageError("cannot open for write: " + csv_path);
  csv << "token_index,row,col,rate\n";
  char line[128];
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(map.size()); ++i) {
    std::snprintf(line, sizeof line, "%lld,%lld,%lld,%.9g\n",
                  static_cast<long long>(i), static_cast<long long>(i / grid_w),
                  static_cast<long long>(i % grid_w), map[static_cast<std::size_t>(i)]);
    csv << line;
  }
}

}  // namespace spikeprune
