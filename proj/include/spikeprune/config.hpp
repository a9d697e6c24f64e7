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

#include "spikeprune/dataset.hpp"
#include "spikeprune/model.hpp"
#include "spikeprune/pruning.hpp"
#include "spikeprune/train.hpp"

namespace spikeprune {

// Everything one experiment needs: model, selector, pruning, optimizer, and
// dataset settings plus the master seed. JSON serialization is fail-closed;
// unknown keys are rejected, the version field is mandatory, and
// serialize -> parse -> serialize is byte-identical.
struct ExperimentConfig {
  int version = 1;
  std::uint64_t seed = 42;
  ModelConfig model;
  SelectorConfig selector;        // rho mirrors model.rho after parsing
  bool random_selector = false;   // selector mode "random"
  PruneConfig prune;
  OptimConfig optimizer;
  DatasetConfig dataset;

  void validate() const;

  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
  static ExperimentConfig load_file(const std::string& path);
  void save_file(const std::string& path) const;

  // Built-in configurations.
  static ExperimentConfig desk();  // the default
  static ExperimentConfig tiny();  // fast experiment runs
  // Reference-scale model used only by the analytic cost model (pooling
  // stages and the position conv are rejected by the runtime).
  static ModelConfig paper_dims_model();
};

}  // namespace spikeprune
