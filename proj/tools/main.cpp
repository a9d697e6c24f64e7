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

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikeprune/checkpoint.hpp"
#include "spikeprune/experiments.hpp"
#include "spikeprune/report_io.hpp"

namespace sp = spikeprune;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string preset = "desk";
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = "out";
  int threads = 0;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "experiment config JSON");
  cmd->add_option("--preset", o.preset, "built-in config when --config is absent")
      ->check(CLI::IsMember({"desk", "tiny"}));
  cmd->add_option("--seed", o.seed, "override the config seed")
      ->each([&o](const std::string&) { o.seed_set = true; });
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--threads", o.threads, "OpenMP thread count (0 = default)");
}

sp::ExperimentConfig resolve_config(const CommonOpts& o) {
  sp::ExperimentConfig cfg = o.config_path.empty()
                                 ? (o.preset == "tiny" ? sp::ExperimentConfig::tiny()
                                                       : sp::ExperimentConfig::desk())
                                 : sp::ExperimentConfig::load_file(o.config_path);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.threads > 0) omp_set_num_threads(o.threads);
  cfg.validate();
  return cfg;
}

std::vector<double> parse_num_list(const std::string& s) {
  std::vector<double> out;
  std::size_t at = 0;
  while (at < s.size()) {
    auto comma = s.find(',', at);
    if (comma == std::string::npos) comma = s.size();
    out.push_back(std::stod(s.substr(at, comma - at)));
    at = comma + 1;
  }
  if (out.empty()) throw sp::ConfigError("empty list option");
  return out;
}

void save_model(sp::Model& model, const std::string& dir) {
  std::vector<const sp::Parameter*> params;
  for (sp::Parameter* p : model.parameters()) params.push_back(p);
  sp::save_checkpoint(dir, params);
}

sp::Tensor stack_eval_images(const sp::Dataset& data, std::int64_t count) {
  const auto n =
      std::min<std::int64_t>(count, static_cast<std::int64_t>(data.eval_set.size()));
  sp::check_config(n > 0, "empty evaluation split");
  const sp::Tensor& first = data.eval_set.front().image;
  std::vector<std::int64_t> shape{n};
  for (auto d : first.shape) shape.push_back(d);
  sp::Tensor images(shape);
  for (std::int64_t i = 0; i < n; ++i)
    std::copy(data.eval_set[static_cast<std::size_t>(i)].image.v.begin(),
              data.eval_set[static_cast<std::size_t>(i)].image.v.end(),
              images.v.begin() + i * first.numel());
  return images;
}

int cmd_train(const CommonOpts& o) {
  auto cfg = resolve_config(o);
  std::filesystem::create_directories(o.out);
  cfg.save_file(o.out + "/config.json");
  sp::TrainedModel tm =
      sp::trained_model(cfg, cfg.seed, cfg.random_selector, cfg.model.rho);
  std::vector<std::vector<std::string>> rows;
  for (const auto& e : tm.stats.log)
    rows.push_back({std::to_string(e.epoch), sp::fmt_num(e.train_loss),
                    sp::fmt_num(e.eval_acc)});
  sp::write_csv(o.out + "/epochs.csv", {"epoch", "train_loss", "eval_acc"}, rows);
  save_model(tm.model, o.out + "/checkpoint");
  std::printf("final train loss %.6f, eval accuracy %.4f\n", tm.stats.final_train_loss,
              tm.stats.final_eval_acc);
  return 0;
}

int cmd_prune(const CommonOpts& o) {
  auto cfg = resolve_config(o);
  std::filesystem::create_directories(o.out);
  cfg.save_file(o.out + "/config.json");
  sp::TicketSnapshot snap = sp::run_imp_experiment(cfg, o.out);
  for (const auto& m : snap.metrics)
    std::printf("round %d: sparsity %.4f, eval accuracy %.4f\n", m.round, m.sparsity,
                m.eval_acc);
  return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& checkpoint, const std::string& exec,
             std::int64_t trace_count) {
  auto cfg = resolve_config(o);
  sp::Model model(cfg.model);
  {
    std::mt19937_64 rng(cfg.seed);
    model.init_params(rng);
  }
  if (!checkpoint.empty()) sp::load_checkpoint(checkpoint, model.parameters());
  sp::Dataset data = sp::dataset_for(cfg, cfg.seed);
  sp::EvalOptions opts;
  opts.exec = exec == "gather" ? sp::ExecMode::gather : sp::ExecMode::masked;
  opts.rho_override = cfg.model.rho;
  opts.random_selector = cfg.random_selector;
  opts.random_selector_seed = cfg.seed ^ 0xA5A5A5A5ULL;
  const double acc =
      sp::evaluate_accuracy(model, data.eval_set, opts, cfg.optimizer.batch_size);
  std::filesystem::create_directories(o.out);
  sp::write_csv(o.out + "/eval.csv", {"exec", "rho", "accuracy"},
                {{exec, sp::fmt_num(cfg.model.rho), sp::fmt_num(acc)}});
  if (trace_count > 0) {
    sp::EvalOptions topts = opts;
    topts.exec = sp::ExecMode::masked;
    sp::Tensor images = stack_eval_images(data, trace_count);
    sp::EvalResult res = model.forward_eval(images, topts);
    sp::export_decision_traces(res, images.dim(0), o.out);
  }
  std::printf("eval accuracy (%s, rho %.2f): %.4f\n", exec.c_str(), cfg.model.rho, acc);
  return 0;
}

int cmd_profile(const CommonOpts& o, const std::string& rho_list_str,
                const std::string& gating, bool paper_dims, double sparsity,
                bool sparse_exec, bool measure) {
  auto cfg = resolve_config(o);
  sp::ModelConfig mc = paper_dims ? sp::ExperimentConfig::paper_dims_model() : cfg.model;
  std::filesystem::create_directories(o.out);
  std::vector<std::vector<std::string>> rows;
  for (double rho : parse_num_list(rho_list_str)) {
    sp::KeepSchedule sched =
        rho >= 1.0 ? sp::KeepSchedule::dense(mc)
                   : (gating == "exit" ? sp::KeepSchedule::exit_gated(mc, rho)
                                       : sp::KeepSchedule::entry_gated(mc, rho));
    sp::CostReport rep = sp::count_flops(mc, sched, sparsity, sparse_exec);
    double ips = 0.0;
    if (measure) {
      sp::Model model(mc);
      std::mt19937_64 rng(cfg.seed);
      model.init_params(rng);
      sp::Dataset data = sp::dataset_for(cfg, cfg.seed);
      sp::EvalOptions opts;
      opts.exec = sp::ExecMode::gather;
      opts.rho_override = rho;
      sp::Tensor images = stack_eval_images(data, 32);
      rep.wall_throughput = sp::throughput_bench(model, images, 9, opts).images_per_sec;
      ips = rep.wall_throughput;
    }
    char name[64];
    std::snprintf(name, sizeof name, "/profile_rho_%.2f.json", rho);
    std::ofstream jf(o.out + name, std::ios::trunc);
    jf << rep.to_json();
    rows.push_back({sp::fmt_num(rho), std::to_string(rep.total_flops),
                    std::to_string(rep.total_flops_mac2), sp::fmt_num(ips)});
    std::printf("rho %.2f: %llu MACs (%.3f G)\n", rho,
                static_cast<unsigned long long>(rep.total_flops),
                static_cast<double>(rep.total_flops) / 1e9);
  }
  sp::write_csv(o.out + "/profile.csv", {"rho", "flops", "flops_mac2", "images_per_sec"},
                rows);
  return 0;
}

int cmd_export_maps(const CommonOpts& o, const std::string& checkpoint, int layer,
                    std::int64_t count) {
  auto cfg = resolve_config(o);
  sp::Model model(cfg.model);
  {
    std::mt19937_64 rng(cfg.seed);
    model.init_params(rng);
  }
  if (!checkpoint.empty()) sp::load_checkpoint(checkpoint, model.parameters());
  sp::Dataset data = sp::dataset_for(cfg, cfg.seed);
  sp::Tensor images = stack_eval_images(data, count);
  sp::EvalOptions opts;
  opts.rho_override = cfg.model.rho;
  opts.capture_layer = layer;
  opts.capture_count = images.dim(0);
  sp::EvalResult res = model.forward_eval(images, opts);
  std::filesystem::create_directories(o.out);
  const std::int64_t grid = cfg.model.grid();
  for (std::int64_t i = 0; i < static_cast<std::int64_t>(res.captured.size()); ++i) {
    const auto map = sp::firing_rate_map(res.captured[static_cast<std::size_t>(i)]);
    sp::export_attention_map(map, grid, grid,
                             o.out + "/firing_map_" + std::to_string(i) + ".ppm");
  }
  sp::export_decision_traces(res, images.dim(0), o.out);
  std::printf("wrote %zu firing maps under %s\n", res.captured.size(), o.out.c_str());
  return 0;
}

int cmd_table1(const CommonOpts& o, const std::string& rho_list_str) {
  auto cfg = resolve_config(o);
  auto rows = sp::run_table1_analog(cfg, parse_num_list(rho_list_str), o.out);
  for (const auto& r : rows)
    std::printf("rho %.2f: accuracy %.4f, %.1f img/s, %llu MACs\n", r.rho, r.accuracy,
                r.images_per_sec, static_cast<unsigned long long>(r.flops));
  return 0;
}

int cmd_table3(const CommonOpts& o, const std::string& rho_list_str,
               const std::string& seeds_str) {
  auto cfg = resolve_config(o);
  std::vector<std::uint64_t> seeds;
  for (double s : parse_num_list(seeds_str))
    seeds.push_back(static_cast<std::uint64_t>(s));
  auto cells = sp::run_table3_analog(cfg, parse_num_list(rho_list_str), seeds, o.out);
  for (const auto& c : cells)
    std::printf("%s rho %.2f: %.4f +- %.4f (%d seeds)\n", c.selector.c_str(), c.rho,
                c.mean_acc, c.std_acc, c.seeds);
  return 0;
}

int cmd_fig4(const CommonOpts& o) {
  auto cfg = resolve_config(o);
  auto rows = sp::run_fig4_analog(cfg, o.out);
  for (const auto& r : rows)
    std::printf("%s: sparsity %.4f, accuracy %.4f\n", r.method.c_str(), r.sparsity,
                r.accuracy);
  return 0;
}

int cmd_config(const CommonOpts& o) {
  auto cfg = resolve_config(o);
  std::filesystem::create_directories(o.out);
  cfg.save_file(o.out + "/config.json");
  std::printf("wrote %s/config.json\n", o.out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spiking transformer with token and weight pruning"};
  app.require_subcommand(1);

  CommonOpts train_o, prune_o, eval_o, profile_o, maps_o, t1_o, t3_o, f4_o, cfg_o;
  std::string eval_checkpoint, eval_exec = "masked";
  std::int64_t eval_trace = 0;
  std::string profile_rhos = "1.0,0.9,0.8,0.7,0.6,0.5", profile_gating = "entry";
  bool profile_paper = false, profile_sparse_exec = false, profile_measure = false;
  double profile_sparsity = 0.0;
  std::string maps_checkpoint;
  int maps_layer = 0;
  std::int64_t maps_count = 4;
  std::string t1_rhos = "1.0,0.9,0.8,0.7,0.6,0.5";
  std::string t3_rhos = "0.8,0.7,0.6", t3_seeds = "1,2,3,4,5";

  auto* train_cmd = app.add_subcommand("train", "train one model per the config");
  add_common(train_cmd, train_o);
  auto* prune_cmd = app.add_subcommand("prune", "iterative magnitude pruning run");
  add_common(prune_cmd, prune_o);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(eval_cmd, eval_o);
  eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
  eval_cmd->add_option("--exec", eval_exec, "masked or gather execution")
      ->check(CLI::IsMember({"masked", "gather"}));
  eval_cmd->add_option("--trace", eval_trace, "export decision traces for N images");
  auto* profile_cmd = app.add_subcommand("profile", "analytic cost model");
  add_common(profile_cmd, profile_o);
  profile_cmd->add_option("--rho-list", profile_rhos, "comma-separated keep ratios");
  profile_cmd->add_option("--gating", profile_gating, "token reduction layout")
      ->check(CLI::IsMember({"entry", "exit"}));
  profile_cmd->add_flag("--paper-dims", profile_paper,
                        "use the reference-scale model (cost model only)");
  profile_cmd->add_option("--weight-sparsity", profile_sparsity, "sparsity in [0,1)");
  profile_cmd->add_flag("--sparse-exec", profile_sparse_exec,
                        "scale prunable layers by (1 - sparsity)");
  profile_cmd->add_flag("--measure", profile_measure, "also measure throughput");
  auto* maps_cmd = app.add_subcommand("export-maps", "firing-rate heat maps");
  add_common(maps_cmd, maps_o);
  maps_cmd->add_option("--checkpoint", maps_checkpoint, "checkpoint directory");
  maps_cmd->add_option("--layer", maps_layer, "0 = SPS output, 1..L = block outputs");
  maps_cmd->add_option("--count", maps_count, "number of images");
  auto* t1_cmd = app.add_subcommand("table1", "keep-ratio sweep");
  add_common(t1_cmd, t1_o);
  t1_cmd->add_option("--rho-list", t1_rhos, "comma-separated keep ratios");
  auto* t3_cmd = app.add_subcommand("table3", "selector vs random ablation");
  add_common(t3_cmd, t3_o);
  t3_cmd->add_option("--rho-list", t3_rhos, "comma-separated keep ratios");
  t3_cmd->add_option("--seeds", t3_seeds, "comma-separated seeds");
  auto* f4_cmd = app.add_subcommand("fig4", "rewind vs reinit vs early-bird");
  add_common(f4_cmd, f4_o);
  auto* cfg_cmd = app.add_subcommand("config", "write a config file");
  add_common(cfg_cmd, cfg_o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (train_cmd->parsed()) return cmd_train(train_o);
    if (prune_cmd->parsed()) return cmd_prune(prune_o);
    if (eval_cmd->parsed())
      return cmd_eval(eval_o, eval_checkpoint, eval_exec, eval_trace);
    if (profile_cmd->parsed())
      return cmd_profile(profile_o, profile_rhos, profile_gating, profile_paper,
                         profile_sparsity, profile_sparse_exec, profile_measure);
    if (maps_cmd->parsed())
      return cmd_export_maps(maps_o, maps_checkpoint, maps_layer, maps_count);
    if (t1_cmd->parsed()) return cmd_table1(t1_o, t1_rhos);
    if (t3_cmd->parsed()) return cmd_table3(t3_o, t3_rhos, t3_seeds);
    if (f4_cmd->parsed()) return cmd_fig4(f4_o);
    if (cfg_cmd->parsed()) return cmd_config(cfg_o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
