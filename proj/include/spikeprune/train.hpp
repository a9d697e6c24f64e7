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

#include "spikeprune/dataset.hpp"
#include "spikeprune/model.hpp"

namespace spikeprune {

struct OptimConfig {
  std::string kind = "adamw";
  double lr = 1e-3;
  double weight_decay = 1e-4;
  int epochs = 30;
  int batch_size = 64;
  std::string schedule = "cosine";  // or "constant"
  double keep_reg_weight = 2.0;
  double clip_norm = 0.0;  // 0 disables clipping

  void validate() const {
    check_config(kind == "adamw", "only the adamw optimizer is supported");
    check_config(lr > 0.0, "learning rate must be positive");
    check_config(weight_decay >= 0.0, "weight decay must be nonnegative");
    check_config(epochs >= 0, "epochs must be nonnegative");
    check_config(batch_size >= 1, "batch size must be positive");
    check_config(schedule == "cosine" || schedule == "constant",
                 "schedule must be cosine or constant");
  }
};

// Decoupled-weight-decay Adam. Gradients at masked positions are zeroed
// before the update, so pruned weights stay exactly 0 through training.
class AdamW {
 public:
  AdamW(std::vector<Parameter*> params, const OptimConfig& cfg);
  void step(double lr_now);

 private:
  std::vector<Parameter*> params_;
  std::vector<Tensor> m_, v_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  double weight_decay_;
  double clip_norm_;
  std::int64_t t_ = 0;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double eval_acc = 0.0;
};

struct TrainStats {
  std::vector<EpochLog> log;
  double final_train_loss = 0.0;
  double final_eval_acc = 0.0;
};

struct TrainSettings {
  OptimConfig optim;
  SelectorConfig selector;
  bool selector_enabled = true;
  bool random_selector = false;
  std::uint64_t seed = 42;
  // Runs after every epoch (mask recording, snapshots); may be empty.
  std::function<void(Model&, int)> on_epoch;
};

// Top-1 accuracy over samples, batched.
double evaluate_accuracy(const Model& model, const std::vector<Sample>& samples,
                         const EvalOptions& opts, int batch_size = 64);

// Full training run: per-epoch shuffled minibatches, cross entropy plus the
// keep-ratio regularizer, cosine-decayed AdamW, per-epoch eval logging.
// Deterministic given the seed. Throws TrainingDiverged on a NaN loss.
TrainStats train_model(Model& model, const Dataset& data, const TrainSettings& settings);

}  // namespace spikeprune
