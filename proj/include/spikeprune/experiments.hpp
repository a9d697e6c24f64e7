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

#include "spikeprune/config.hpp"
#include "spikeprune/cost_model.hpp"
#include "spikeprune/pruning.hpp"
#include "spikeprune/train.hpp"

namespace spikeprune {

// Dataset derived deterministically from the experiment seed.
Dataset dataset_for(const ExperimentConfig& cfg, std::uint64_t seed);

// Fresh model initialized from the seed and trained on the seed's dataset.
// rho overrides the keep ratio; random_selector switches the ablation path.
struct TrainedModel {
  Model model;
  TrainStats stats;
};
TrainedModel trained_model(const ExperimentConfig& cfg, std::uint64_t seed,
                           bool random_selector, double rho);

struct Table1Row {
  double rho = 0.0;
  double accuracy = 0.0;
  double images_per_sec = 0.0;
  std::uint64_t flops = 0;
};

// One trained model per keep ratio: accuracy, measured gather-mode
// throughput, analytic cost. Writes table1.csv under out_dir.
std::vector<Table1Row> run_table1_analog(const ExperimentConfig& cfg,
                                         const std::vector<double>& rho_list,
                                         const std::string& out_dir);

struct Table3Cell {
  std::string selector;  // "spiking" or "random"
  double rho = 0.0;
  double mean_acc = 0.0;
  double std_acc = 0.0;
  int seeds = 0;
};

// Matched selector-vs-random training pairs per (rho, seed). Writes
// table3.csv (mean +- std per cell) and table3_runs.csv (per run).
std::vector<Table3Cell> run_table3_analog(const ExperimentConfig& cfg,
                                          const std::vector<double>& rho_list,
                                          const std::vector<std::uint64_t>& seeds,
                                          const std::string& out_dir);

struct Fig4Row {
  std::string method;  // imp_rewind / random_reinit / early_bird
  double sparsity = 0.0;
  double accuracy = 0.0;
};

// Accuracy versus sparsity for rewinding, random re-initialization, and
// early-bird tickets at matched sparsity levels. Writes fig4.csv and
// fig4.svg under out_dir.
std::vector<Fig4Row> run_fig4_analog(const ExperimentConfig& cfg,
                                     const std::string& out_dir);

// Full IMP run per the config, writing per-round metrics
// (round,sparsity,train_loss,eval_acc,alive_params) to imp_rounds.csv and a
// checkpoint of the final ticket under out_dir.
TicketSnapshot run_imp_experiment(const ExperimentConfig& cfg,
                                  const std::string& out_dir);

// Per-image decision traces (layer,token_index,kept,score) from an eval run.
void export_decision_traces(const EvalResult& result, std::int64_t image_count,
                            const std::string& out_dir);

}  // namespace spikeprune
