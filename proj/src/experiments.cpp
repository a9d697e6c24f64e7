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

#include "spikeprune/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "spikeprune/checkpoint.hpp"
#include "spikeprune/report_io.hpp"

namespace spikeprune {

namespace {

TrainSettings settings_for(const ExperimentConfig& cfg, std::uint64_t seed,
                           bool random_selector, double rho) {
  TrainSettings s;
  s.optim = cfg.optimizer;
  s.selector = cfg.selector;
  s.selector.rho = rho;
  s.selector_enabled = !cfg.model.selector_layers.empty();
  s.random_selector = random_selector;
  s.seed = seed;
  return s;
}

EvalOptions eval_opts_for(const ExperimentConfig& cfg, double rho,
                          bool random_selector, std::uint64_t seed) {
  EvalOptions o;
  o.rho_override = rho;
  o.selector_enabled = !cfg.model.selector_layers.empty();
  o.random_selector = random_selector;
  o.random_selector_seed = seed ^ 0xA5A5A5A5ULL;
  return o;
}

Tensor eval_image_batch(const Dataset& data, std::int64_t count) {
  check_config(!data.eval_set.empty(), "empty evaluation split");
  const auto n = std::min<std::int64_t>(count, static_cast<std::int64_t>(data.eval_set.size()));
  const Tensor& first = data.eval_set.front().image;
  std::vector<std::int64_t> shape{n};
  for (auto d : first.shape) shape.push_back(d);
  Tensor out(shape);
  for (std::int64_t i = 0; i < n; ++i)
    std::copy(data.eval_set[static_cast<std::size_t>(i)].image.v.begin(),
              data.eval_set[static_cast<std::size_t>(i)].image.v.end(),
              out.v.begin() + i * first.numel());
  return out;
}

}  // namespace

Dataset dataset_for(const ExperimentConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0xD1B54A32D192ED03ULL);
  return load_dataset(cfg.dataset, rng);
}

TrainedModel trained_model(const ExperimentConfig& cfg, std::uint64_t seed,
                           bool random_selector, double rho) {
  ModelConfig mc = cfg.model;
  mc.rho = rho;
  TrainedModel tm{Model(mc), {}};
  std::mt19937_64 init_rng(seed);
  tm.model.init_params(init_rng);
  Dataset data = dataset_for(cfg, seed);
  tm.stats = train_model(tm.model, data, settings_for(cfg, seed, random_selector, rho));
  return tm;
}

std::vector<Table1Row> run_table1_analog(const ExperimentConfig& cfg,
                                         const std::vector<double>& rho_list,
                                         const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<Table1Row> rows;
  for (double rho : rho_list) {
    TrainedModel tm = trained_model(cfg, cfg.seed, cfg.random_selector, rho);
    Dataset data = dataset_for(cfg, cfg.seed);
    Table1Row row;
    row.rho = rho;
    row.accuracy = evaluate_accuracy(
        tm.model, data.eval_set, eval_opts_for(cfg, rho, cfg.random_selector, cfg.seed),
        cfg.optimizer.batch_size);
    EvalOptions bench = eval_opts_for(cfg, rho, cfg.random_selector, cfg.seed);
    bench.exec = ExecMode::gather;
    Tensor images = eval_image_batch(data, 64);
    row.images_per_sec = throughput_bench(tm.model, images, 9, bench).images_per_sec;
    ModelConfig mc = cfg.model;
    mc.rho = rho;
    row.flops = count_flops(mc, KeepSchedule::exit_gated(mc, rho)).total_flops;
    rows.push_back(row);
  }
  std::vector<std::vector<std::string>> csv;
  for (const auto& r : rows)
    csv.push_back({fmt_num(r.rho), fmt_num(r.accuracy), fmt_num(r.images_per_sec),
                   std::to_string(r.flops)});
  write_csv(out_dir + "/table1.csv", {"keep_ratio", "accuracy", "images_per_sec", "flops"},
            csv);
  return rows;
}

std::vector<Table3Cell> run_table3_analog(const ExperimentConfig& cfg,
                                          const std::vector<double>& rho_list,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<Table3Cell> cells;
  std::vector<std::vector<std::string>> run_rows;
  for (const bool random_sel : {false, true}) {
    for (double rho : rho_list) {
      std::vector<double> accs;
      for (std::uint64_t seed : seeds) {
        TrainedModel tm = trained_model(cfg, seed, random_sel, rho);
        accs.push_back(tm.stats.final_eval_acc);
        run_rows.push_back({random_sel ? "random" : "spiking", fmt_num(rho),
                            std::to_string(seed), fmt_num(accs.back())});
      }
      double mean = 0.0;
      for (double a : accs) mean += a;
      mean /= static_cast<double>(accs.size());
      double var = 0.0;
      for (double a : accs) var += (a - mean) * (a - mean);
      var = accs.size() > 1 ? var / static_cast<double>(accs.size() - 1) : 0.0;
      Table3Cell cell;
      cell.selector = random_sel ? "random" : "spiking";
      cell.rho = rho;
      cell.mean_acc = mean;
      cell.std_acc = std::sqrt(var);
      cell.seeds = static_cast<int>(accs.size());
      cells.push_back(cell);
    }
  }
  std::vector<std::vector<std::string>> csv;
  for (const auto& c : cells)
    csv.push_back({c.selector, fmt_num(c.rho), fmt_num(c.mean_acc), fmt_num(c.std_acc),
                   std::to_string(c.seeds)});
  write_csv(out_dir + "/table3.csv", {"selector", "rho", "mean_acc", "std_acc", "seeds"},
            csv);
  write_csv(out_dir + "/table3_runs.csv", {"selector", "rho", "seed", "accuracy"},
            run_rows);
  return cells;
}

TicketSnapshot run_imp_experiment(const ExperimentConfig& cfg,
                                  const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  Model model(cfg.model);
  std::mt19937_64 init_rng(cfg.seed);
  model.init_params(init_rng);
  Dataset data = dataset_for(cfg, cfg.seed);

  ImpHooks hooks;
  hooks.train = [&](Model& m, int round) {
    TrainSettings s = settings_for(cfg, cfg.seed + static_cast<std::uint64_t>(round) * 7919ULL,
                                   cfg.random_selector, cfg.model.rho);
    return train_model(m, data, s).final_train_loss;
  };
  hooks.evaluate = [&](Model& m) {
    return evaluate_accuracy(m, data.eval_set,
                             eval_opts_for(cfg, cfg.model.rho, cfg.random_selector, cfg.seed),
                             cfg.optimizer.batch_size);
  };
  TicketSnapshot snap = imp_loop(model, cfg.prune, hooks);

  std::vector<std::vector<std::string>> rows;
  for (const auto& m : snap.metrics)
    rows.push_back({std::to_string(m.round), fmt_num(m.sparsity), fmt_num(m.train_loss),
                    fmt_num(m.eval_acc), std::to_string(m.alive_params)});
  write_csv(out_dir + "/imp_rounds.csv",
            {"round", "sparsity", "train_loss", "eval_acc", "alive_params"}, rows);
  std::vector<const Parameter*> cparams;
  for (Parameter* p : model.parameters()) cparams.push_back(p);
  save_checkpoint(out_dir + "/ticket", cparams);
  return snap;
}

std::vector<Fig4Row> run_fig4_analog(const ExperimentConfig& cfg,
                                     const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<Fig4Row> rows;
  Dataset data = dataset_for(cfg, cfg.seed);
  auto eopts = eval_opts_for(cfg, cfg.model.rho, cfg.random_selector, cfg.seed);

  // Rewinding: the straight IMP ladder.
  Model imp_model(cfg.model);
  {
    std::mt19937_64 rng(cfg.seed);
    imp_model.init_params(rng);
  }
  ImpHooks hooks;
  hooks.train = [&](Model& m, int round) {
    TrainSettings s = settings_for(cfg, cfg.seed + static_cast<std::uint64_t>(round) * 7919ULL,
                                   cfg.random_selector, cfg.model.rho);
    return train_model(m, data, s).final_train_loss;
  };
  hooks.evaluate = [&](Model& m) {
    return evaluate_accuracy(m, data.eval_set, eopts, cfg.optimizer.batch_size);
  };
  TicketSnapshot snap = imp_loop(imp_model, cfg.prune, hooks);
  for (const auto& m : snap.metrics)
    if (m.round > 0) rows.push_back({"imp_rewind", m.sparsity, m.eval_acc});

  // Random re-initialization at the same masks.
  for (int k = 1; k <= cfg.prune.rounds; ++k) {
    Model m(cfg.model);
    std::mt19937_64 rng(cfg.seed);
    m.init_params(rng);
    auto params = m.parameters();
    apply_mask_fingerprint(params, snap.round_masks[static_cast<std::size_t>(k - 1)]);
    std::mt19937_64
        reinit_rng(cfg.seed ^ (0xBEEF0000ULL + static_cast<std::uint64_t>(k)));
    random_reinit(params, reinit_rng);
    TrainSettings s = settings_for(cfg, cfg.seed + static_cast<std::uint64_t>(k) * 104729ULL,
                                   cfg.random_selector, cfg.model.rho);
    train_model(m, data, s);
    rows.push_back({"random_reinit", measured_sparsity(params),
                    evaluate_accuracy(m, data.eval_set, eopts, cfg.optimizer.batch_size)});
  }

  // Early-bird: record per-epoch weights during one dense run, detect the
  // stabilized mask per sparsity level, then finish training the ticket.
  {
    Model dense(cfg.model);
    std::mt19937_64 rng(cfg.seed);
    dense.init_params(rng);
    std::vector<TicketSnapshot> epoch_weights;
    TrainSettings s = settings_for(cfg, cfg.seed, cfg.random_selector, cfg.model.rho);
    s.on_epoch = [&](Model& m, int) { epoch_weights.push_back(take_snapshot(m.parameters())); };
    train_model(dense, data, s);

    for (int k = 1; k <= cfg.prune.rounds; ++k) {
      const double target = PruneConfig::sparsity_after(cfg.prune.p, k);
      // Candidate mask per epoch from the recorded weights.
      Model probe(cfg.model);
      std::mt19937_64 prng(cfg.seed);
      probe.init_params(prng);
      auto pparams = probe.parameters();
      std::vector<std::vector<std::uint8_t>> history;
      for (const auto& wsnap : epoch_weights) {
        rewind_weights_only(pparams, wsnap);
        history.push_back(candidate_mask_at_sparsity(pparams, target));
      }
      const auto detected = eb_detect(history, cfg.prune);
      const int epoch = detected.value_or(static_cast<int>(history.size()) - 1);
      rewind_weights_only(pparams, epoch_weights[static_cast<std::size_t>(epoch)]);
      apply_mask_fingerprint(pparams, history[static_cast<std::size_t>(epoch)]);
      TrainSettings fs = settings_for(cfg, cfg.seed + static_cast<std::uint64_t>(k) * 15485863ULL,
                                      cfg.random_selector, cfg.model.rho);
      fs.optim.epochs = std::max(1, cfg.optimizer.epochs - (epoch + 1));
      train_model(probe, data, fs);
      rows.push_back({"early_bird", measured_sparsity(pparams),
                      evaluate_accuracy(probe, data.eval_set, eopts, cfg.optimizer.batch_size)});
    }
  }

  std::vector<std::vector<std::string>> csv;
  for (const auto& r : rows)
    csv.push_back({r.method, fmt_num(r.sparsity), fmt_num(r.accuracy)});
  write_csv(out_dir + "/fig4.csv", {"method", "sparsity", "accuracy"}, csv);

  std::vector<SvgSeries> series(3);
  series[0].name = "imp_rewind";
  series[1].name = "random_reinit";
  series[2].name = "early_bird";
  for (const auto& r : rows) {
    const std::size_t si = r.method == "imp_rewind" ? 0 : r.method == "random_reinit" ? 1 : 2;
    series[si].points.push_back({r.sparsity, r.accuracy});
  }
  for (auto& s : series)
    std::sort(s.points.begin(), s.points.end());
  write_svg_lines(out_dir + "/fig4.svg", "accuracy vs weight sparsity", "sparsity",
                  "accuracy", series);
  return rows;
}

void export_decision_traces(const EvalResult& result, std::int64_t image_count,
                            const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  if (result.cum_masks.empty()) return;
  const std::int64_t bsz = result.cum_masks.front().dim(0);
  const std::int64_t n = result.cum_masks.front().dim(1);
  const auto count = std::min<std::int64_t>(image_count, bsz);
  for (std::int64_t b = 0; b < count; ++b) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t layer = 0; layer < result.cum_masks.size(); ++layer) {
      for (std::int64_t i = 0; i < n; ++i) {
        rows.push_back({std::to_string(layer), std::to_string(i),
                        std::to_string(static_cast<int>(result.cum_masks[layer].v[b * n + i])),
                        fmt_num(result.keep_scores[layer].v[b * n + i])});
      }
    }
    write_csv(out_dir + "/decisions_" + std::to_string(b) + ".csv",
              {"layer", "token_index", "kept", "score"}, rows);
  }
}

}  // namespace spikeprune
