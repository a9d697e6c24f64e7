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

#include "spikeprune/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

namespace spikeprune {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("unknown key \"" + it.key() + "\" in " + where);
}

template <typename T>
T require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("missing key \"" + key + "\" in " + where);
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for \"" + key + "\" in " + where);
  }
}

template <typename T>
T optional_of(const json& j, const std::string& key, T fallback,
              const std::string& where) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("bad value for \"" + key + "\" in " + where);
  }
}

ResetMode reset_from(const std::string& s) {
  if (s == "hard_zero") return ResetMode::hard_zero;
  if (s == "soft_subtract") return ResetMode::soft_subtract;
  throw ConfigError("reset must be hard_zero or soft_subtract, got " + s);
}
std::string reset_to(ResetMode m) {
  return m == ResetMode::hard_zero ? "hard_zero" : "soft_subtract";
}

SurrogateKind surrogate_from(const std::string& s) {
  if (s == "sigmoid") return SurrogateKind::sigmoid;
  if (s == "rectangular") return SurrogateKind::rectangular;
  if (s == "arctan") return SurrogateKind::arctan;
  throw ConfigError("surrogate kind must be sigmoid, rectangular, or arctan");
}
std::string surrogate_to(SurrogateKind k) {
  switch (k) {
    case SurrogateKind::sigmoid: return "sigmoid";
    case SurrogateKind::rectangular: return "rectangular";
    case SurrogateKind::arctan: return "arctan";
  }
  return "sigmoid";
}

TemperatureSchedule tsched_from(const std::string& s) {
  if (s == "constant") return TemperatureSchedule::constant;
  if (s == "linear_anneal") return TemperatureSchedule::linear_anneal;
  throw ConfigError("temperature_schedule must be constant or linear_anneal");
}

PruneMethod method_from(const std::string& s) {
  if (s == "imp_rewind") return PruneMethod::imp_rewind;
  if (s == "random_reinit") return PruneMethod::random_reinit;
  if (s == "early_bird") return PruneMethod::early_bird;
  throw ConfigError("prune method must be imp_rewind, random_reinit, or early_bird");
}
std::string method_to(PruneMethod m) {
  switch (m) {
    case PruneMethod::imp_rewind: return "imp_rewind";
    case PruneMethod::random_reinit: return "random_reinit";
    case PruneMethod::early_bird: return "early_bird";
  }
  return "imp_rewind";
}

DatasetKind dkind_from(const std::string& s) {
  if (s == "synthetic_fg_bg") return DatasetKind::synthetic_fg_bg;
  if (s == "cifar10_binary") return DatasetKind::cifar10_binary;
  if (s == "tensor_frames") return DatasetKind::tensor_frames;
  throw ConfigError("dataset kind must be synthetic_fg_bg, cifar10_binary, or tensor_frames");
}
std::string dkind_to(DatasetKind k) {
  switch (k) {
    case DatasetKind::synthetic_fg_bg: return "synthetic_fg_bg";
    case DatasetKind::cifar10_binary: return "cifar10_binary";
    case DatasetKind::tensor_frames: return "tensor_frames";
  }
  return "synthetic_fg_bg";
}

ModelConfig model_from(const json& j) {
  reject_unknown(j, {"timesteps", "depth", "embed_dim", "heads", "mlp_ratio",
                     "image_hw", "image_channels", "num_classes", "selector_layers",
                     "rho", "sps_stages", "pos_conv", "attn_scale", "selector_hidden",
                     "neuron"},
                 "model");
  ModelConfig m;
  m.timesteps = require<std::int64_t>(j, "timesteps", "model");
  m.depth = require<std::int64_t>(j, "depth", "model");
  m.embed_dim = require<std::int64_t>(j, "embed_dim", "model");
  m.heads = require<std::int64_t>(j, "heads", "model");
  m.mlp_ratio = require<double>(j, "mlp_ratio", "model");
  m.image_hw = require<std::int64_t>(j, "image_hw", "model");
  m.image_channels = require<std::int64_t>(j, "image_channels", "model");
  m.num_classes = require<std::int64_t>(j, "num_classes", "model");
  m.selector_layers = require<std::vector<int>>(j, "selector_layers", "model");
  m.rho = require<double>(j, "rho", "model");
  m.pos_conv = optional_of<bool>(j, "pos_conv", false, "model");
  m.attn_scale = optional_of<double>(j, "attn_scale", 0.25, "model");
  m.selector_hidden = optional_of<std::int64_t>(j, "selector_hidden", 0, "model");
  m.sps_stages.clear();
  for (const auto& st : require<json>(j, "sps_stages", "model")) {
    reject_unknown(st, {"out_channels", "stride", "pool"}, "model.sps_stages");
    SpsStage s;
    s.out_channels = require<std::int64_t>(st, "out_channels", "sps stage");
    s.stride = optional_of<int>(st, "stride", 2, "sps stage");
    s.pool = optional_of<bool>(st, "pool", false, "sps stage");
    m.sps_stages.push_back(s);
  }
  if (j.contains("neuron")) {
    const auto& nj = j.at("neuron");
    reject_unknown(nj, {"threshold", "decay", "reset", "surrogate"}, "model.neuron");
    m.neuron.threshold = optional_of<float>(nj, "threshold", 1.0f, "neuron");
    m.neuron.decay = optional_of<float>(nj, "decay", 0.5f, "neuron");
    m.neuron.reset = reset_from(optional_of<std::string>(nj, "reset", "hard_zero", "neuron"));
    if (nj.contains("surrogate")) {
      const auto& sj = nj.at("surrogate");
      reject_unknown(sj, {"kind", "width"}, "model.neuron.surrogate");
      m.neuron.surrogate.kind =
          surrogate_from(optional_of<std::string>(sj, "kind", "sigmoid", "surrogate"));
      m.neuron.surrogate.width = optional_of<float>(sj, "width", 4.0f, "surrogate");
    }
  }
  return m;
}

json model_to(const ModelConfig& m) {
  json j;
  j["timesteps"] = m.timesteps;
  j["depth"] = m.depth;
  j["embed_dim"] = m.embed_dim;
  j["heads"] = m.heads;
  j["mlp_ratio"] = m.mlp_ratio;
  j["image_hw"] = m.image_hw;
  j["image_channels"] = m.image_channels;
  j["num_classes"] = m.num_classes;
  j["selector_layers"] = m.selector_layers;
  j["rho"] = m.rho;
  j["pos_conv"] = m.pos_conv;
  j["attn_scale"] = m.attn_scale;
  j["selector_hidden"] = m.selector_hidden;
  json stages = json::array();
  for (const auto& s : m.sps_stages) {
    json st;
    st["out_channels"] = s.out_channels;
    st["stride"] = s.stride;
    st["pool"] = s.pool;
    stages.push_back(std::move(st));
  }
  j["sps_stages"] = std::move(stages);
  json nj;
  nj["threshold"] = m.neuron.threshold;
  nj["decay"] = m.neuron.decay;
  nj["reset"] = reset_to(m.neuron.reset);
  json sj;
  sj["kind"] = surrogate_to(m.neuron.surrogate.kind);
  sj["width"] = m.neuron.surrogate.width;
  nj["surrogate"] = std::move(sj);
  j["neuron"] = std::move(nj);
  return j;
}

}  // namespace

void ExperimentConfig::validate() const {
  check_config(version == 1, "unsupported config version");
  model.validate();
  selector.validate();
  prune.validate();
  optimizer.validate();
  dataset.validate();
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ConfigError("config is not valid JSON: " + std::string(e.what()));
  }
  reject_unknown(j, {"version", "seed", "model", "selector", "prune", "optimizer",
                     "dataset"},
                 "config");
  ExperimentConfig c;
  c.version = require<int>(j, "version", "config");
  if (c.version != 1) throw ConfigError("unsupported config version");
  c.seed = require<std::uint64_t>(j, "seed", "config");
  c.model = model_from(require<json>(j, "model", "config"));

  const json sj = require<json>(j, "selector", "config");
  reject_unknown(sj, {"gumbel_temperature", "temperature_schedule", "mode"}, "selector");
  c.selector.gumbel_temperature =
      optional_of<double>(sj, "gumbel_temperature", 1.0, "selector");
  c.selector.temperature_schedule =
      tsched_from(optional_of<std::string>(sj, "temperature_schedule", "constant", "selector"));
  const std::string mode = optional_of<std::string>(sj, "mode", "spiking", "selector");
  if (mode != "spiking" && mode != "random")
    throw ConfigError("selector mode must be spiking or random");
  c.random_selector = mode == "random";
  c.selector.rho = c.model.rho;
  c.selector.hidden_width = c.model.selector_hidden;

  const json pj = require<json>(j, "prune", "config");
  reject_unknown(pj, {"p", "rounds", "method", "rewind_point", "rewind_epoch", "scope",
                      "eb_distance_threshold", "eb_window"},
                 "prune");
  c.prune.p = require<double>(pj, "p", "prune");
  c.prune.rounds = require<int>(pj, "rounds", "prune");
  c.prune.method = method_from(optional_of<std::string>(pj, "method", "imp_rewind", "prune"));
  const std::string rp = optional_of<std::string>(pj, "rewind_point", "init", "prune");
  if (rp != "init" && rp != "epoch_k")
    throw ConfigError("rewind_point must be init or epoch_k");
  c.prune.rewind_point = rp == "init" ? RewindPoint::init : RewindPoint::epoch_k;
  c.prune.rewind_epoch = optional_of<int>(pj, "rewind_epoch", 0, "prune");
  const std::string scope = optional_of<std::string>(pj, "scope", "global", "prune");
  if (scope != "global" && scope != "per_layer")
    throw ConfigError("scope must be global or per_layer");
  c.prune.scope = scope == "global" ? PruneScope::global : PruneScope::per_layer;
  c.prune.eb_distance_threshold =
      optional_of<double>(pj, "eb_distance_threshold", 0.1, "prune");
  c.prune.eb_window = optional_of<int>(pj, "eb_window", 5, "prune");

  const json oj = require<json>(j, "optimizer", "config");
  reject_unknown(oj, {"kind", "lr", "weight_decay", "epochs", "batch_size", "schedule",
                      "keep_reg_weight", "clip_norm"},
                 "optimizer");
  c.optimizer.kind = optional_of<std::string>(oj, "kind", "adamw", "optimizer");
  c.optimizer.lr = require<double>(oj, "lr", "optimizer");
  c.optimizer.weight_decay = require<double>(oj, "weight_decay", "optimizer");
  c.optimizer.epochs = require<int>(oj, "epochs", "optimizer");
  c.optimizer.batch_size = require<int>(oj, "batch_size", "optimizer");
  c.optimizer.schedule = optional_of<std::string>(oj, "schedule", "cosine", "optimizer");
  c.optimizer.keep_reg_weight =
      optional_of<double>(oj, "keep_reg_weight", 2.0, "optimizer");
  c.optimizer.clip_norm = optional_of<double>(oj, "clip_norm", 0.0, "optimizer");

  const json dj = require<json>(j, "dataset", "config");
  reject_unknown(dj, {"kind", "train_size", "eval_size", "image_hw", "channels",
                      "num_classes", "token_grid", "fg_token_frac", "fg_gain",
                      "fg_noise", "bg_noise", "dir"},
                 "dataset");
  c.dataset.kind = dkind_from(require<std::string>(dj, "kind", "dataset"));
  c.dataset.train_size = optional_of<std::int64_t>(dj, "train_size", 512, "dataset");
  c.dataset.eval_size = optional_of<std::int64_t>(dj, "eval_size", 256, "dataset");
  c.dataset.image_hw = optional_of<std::int64_t>(dj, "image_hw", c.model.image_hw, "dataset");
  c.dataset.channels = optional_of<std::int64_t>(dj, "channels", 3, "dataset");
  c.dataset.num_classes =
      optional_of<std::int64_t>(dj, "num_classes", c.model.num_classes, "dataset");
  c.dataset.token_grid = optional_of<std::int64_t>(dj, "token_grid", c.model.grid(), "dataset");
  c.dataset.fg_token_frac = optional_of<double>(dj, "fg_token_frac", 0.25, "dataset");
  c.dataset.fg_gain = optional_of<double>(dj, "fg_gain", 1.0, "dataset");
  c.dataset.fg_noise = optional_of<double>(dj, "fg_noise", 0.15, "dataset");
  c.dataset.bg_noise = optional_of<double>(dj, "bg_noise", 0.35, "dataset");
  c.dataset.dir = optional_of<std::string>(dj, "dir", "", "dataset");

  c.validate();
  return c;
}

std::string ExperimentConfig::to_json_text() const {
  json j;
  j["version"] = version;
  j["seed"] = seed;
  j["model"] = model_to(model);
  json sj;
  sj["gumbel_temperature"] = selector.gumbel_temperature;
  sj["temperature_schedule"] =
      selector.temperature_schedule == TemperatureSchedule::constant ? "constant"
                                                                     : "linear_anneal";
  sj["mode"] = random_selector ? "random" : "spiking";
  j["selector"] = std::move(sj);
  json pj;
  pj["p"] = prune.p;
  pj["rounds"] = prune.rounds;
  pj["method"] = method_to(prune.method);
  pj["rewind_point"] = prune.rewind_point == RewindPoint::init ? "init" : "epoch_k";
  pj["rewind_epoch"] = prune.rewind_epoch;
  pj["scope"] = prune.scope == PruneScope::global ? "global" : "per_layer";
  pj["eb_distance_threshold"] = prune.eb_distance_threshold;
  pj["eb_window"] = prune.eb_window;
  j["prune"] = std::move(pj);
  json oj;
  oj["kind"] = optimizer.kind;
  oj["lr"] = optimizer.lr;
  oj["weight_decay"] = optimizer.weight_decay;
  oj["epochs"] = optimizer.epochs;
  oj["batch_size"] = optimizer.batch_size;
  oj["schedule"] = optimizer.schedule;
  oj["keep_reg_weight"] = optimizer.keep_reg_weight;
  oj["clip_norm"] = optimizer.clip_norm;
  j["optimizer"] = std::move(oj);
  json dj;
  dj["kind"] = dkind_to(dataset.kind);
  dj["train_size"] = dataset.train_size;
  dj["eval_size"] = dataset.eval_size;
  dj["image_hw"] = dataset.image_hw;
  dj["channels"] = dataset.channels;
  dj["num_classes"] = dataset.num_classes;
  dj["token_grid"] = dataset.token_grid;
  dj["fg_token_frac"] = dataset.fg_token_frac;
  dj["fg_gain"] = dataset.fg_gain;
  dj["fg_noise"] = dataset.fg_noise;
  dj["bg_noise"] = dataset.bg_noise;
  dj["dir"] = dataset.dir;
  j["dataset"] = std::move(dj);
  return j.dump(2) + "\n";
}

ExperimentConfig ExperimentConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return from_json_text(text);
}

void ExperimentConfig::save_file(const std::string& path) const {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw ConfigError("cannot open config file for write: " + path);
  f << to_json_text();
}

ExperimentConfig ExperimentConfig::desk() {
  ExperimentConfig c;
  c.dataset.image_hw = 32;
  c.dataset.token_grid = 8;
  c.selector.rho = c.model.rho;
  return c;
}

ExperimentConfig ExperimentConfig::tiny() {
  ExperimentConfig c;
  c.model.timesteps = 2;
  c.model.depth = 4;
  c.model.embed_dim = 32;
  c.model.heads = 2;
  c.model.mlp_ratio = 2.0;
  c.model.image_hw = 16;
  c.model.sps_stages = {{16, 2, false}, {32, 2, false}};
  c.model.rho = 0.7;
  c.selector.rho = 0.7;
  c.optimizer.epochs = 12;
  c.optimizer.batch_size = 32;
  c.optimizer.lr = 2e-3;
  c.prune.rounds = 5;
  c.dataset.train_size = 256;
  c.dataset.eval_size = 256;
  c.dataset.image_hw = 16;
  c.dataset.token_grid = 4;
  return c;
}

ModelConfig ExperimentConfig::paper_dims_model() {
  ModelConfig m;
  m.timesteps = 4;
  m.depth = 4;
  m.embed_dim = 384;
  m.heads = 12;
  m.mlp_ratio = 4.0;
  m.image_hw = 32;
  m.image_channels = 3;
  m.num_classes = 10;
  m.selector_layers = {2, 3, 4};
  m.sps_stages = {{48, 1, false}, {96, 1, false}, {192, 1, true}, {384, 1, true}};
  m.pos_conv = true;
  return m;
}

}  // namespace spikeprune
