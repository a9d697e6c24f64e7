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

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "spikeprune/selector.hpp"
#include "spikeprune/tape.hpp"
#include "spikeprune/tensor.hpp"

namespace spikeprune {

// One stage of the spiking patch-splitting front end: 3x3 conv (stride 1 or
// 2) followed by a LIF layer; pool halves the resolution afterwards. Pooling
// stages exist for cost accounting of larger reference architectures and are
// rejected by the runtime model.
struct SpsStage {
  std::int64_t out_channels = 0;
  int stride = 2;
  bool pool = false;
};

struct NeuronConfig {
  float threshold = 1.0f;
  float decay = 0.5f;
  ResetMode reset = ResetMode::hard_zero;
  SurrogateConfig surrogate;

  LifSpec lif_spec() const { return LifSpec{threshold, decay, reset, surrogate}; }
};

struct ModelConfig {
  std::int64_t timesteps = 4;
  std::int64_t depth = 4;
  std::int64_t embed_dim = 96;
  std::int64_t heads = 3;
  double mlp_ratio = 4.0;
  std::int64_t image_hw = 32;
  std::int64_t image_channels = 3;
  std::int64_t num_classes = 4;
  std::vector<int> selector_layers{2, 3, 4};
  double rho = 0.7;
  std::vector<SpsStage> sps_stages{{48, 2, false}, {96, 2, false}};
  bool pos_conv = false;  // extra 3x3 position-encoding conv, cost model only
  NeuronConfig neuron;
  double attn_scale = 0.25;
  std::int64_t selector_hidden = 0;  // 0 -> embed_dim / 2

  std::int64_t grid() const;    // token grid side after the SPS stages
  std::int64_t tokens() const { return grid() * grid(); }
  std::int64_t head_dim() const { return embed_dim / heads; }
  std::int64_t mlp_hidden() const {
    return static_cast<std::int64_t>(mlp_ratio * static_cast<double>(embed_dim));
  }
  std::int64_t scorer_hidden() const {
    return selector_hidden > 0 ? selector_hidden : embed_dim / 2;
  }
  void validate() const;
};

enum class ExecMode { masked, gather };

struct EvalOptions {
  ExecMode exec = ExecMode::masked;
  bool selector_enabled = true;
  double rho_override = -1.0;  // < 0 uses config rho
  int capture_layer = -1;      // 0 = SPS output, 1..L = block outputs
  std::int64_t capture_count = 0;
  bool random_selector = false;  // ablation: uniform-random keep decisions
  std::uint64_t random_selector_seed = 0;
};

struct EvalResult {
  Tensor logits;                       // [B, num_classes]
  std::vector<Tensor> cum_masks;       // per selector application, [B, N]
  std::vector<Tensor> keep_scores;     // per selector application, [B, N]
  Tensor final_mask;                   // [B, N] cumulative decision at the head
  std::vector<SpikeTensor> captured;   // capture_count spike maps at capture_layer
};

struct TrainSelectorOptions {
  bool enabled = true;
  double rho = 0.7;
  double gumbel_temperature = 1.0;
  bool random_selector = false;  // ablation: uniform-random keep decisions
  double keep_reg_weight = 2.0;
};

struct TrainForward {
  Tape::Val loss;
  Tape::Val ce_loss;
  Tape::Val logits;
  std::vector<Tensor> hard_masks;  // cumulative {0,1} masks per selector app, [B, N]
  std::vector<float> mean_soft;    // mean cumulative soft keep per selector app
};

// Spiking vision transformer with token selection: SPS front end, depth
// encoder blocks (spiking self-attention plus MLP, OR-joined residuals so
// activations stay binary), selector applications after the configured
// layers, and a linear head over kept tokens.
class Model {
 public:
  explicit Model(ModelConfig cfg);

  void init_params(std::mt19937_64& rng);

  const ModelConfig& config() const { return cfg_; }
  std::vector<Parameter*> parameters();
  std::vector<Parameter*> prunable_parameters();
  std::vector<const Parameter*> parameters() const;
  Parameter* find_parameter(const std::string& name);
  ScorerView scorer(std::size_t app_index);
  std::size_t selector_count() const { return scorers_.size(); }

  // Batched training forward. images is [B, C, H, W] (static frames repeated
  // over T) or [B, T, C, H, W]. Records everything on the tape and returns
  // the total loss (cross entropy plus the keep-ratio regularizer).
  TrainForward forward_train(Tape& tape, const Tensor& images,
                             const std::vector<int>& labels,
                             const TrainSelectorOptions& sel, std::mt19937_64& rng) const;

  // Batched inference forward, no tape. Masked mode zeroes dropped tokens and
  // excludes them from attention; gather mode compacts them away. Both yield
  // bitwise identical logits.
  EvalResult forward_eval(const Tensor& images, const EvalOptions& opts) const;

  // Single-image building blocks.
  SpikeTensor sps_forward(const Tensor& image) const;  // [C,H,W] or [T,C,H,W]
  SpikeTensor ssa_forward(int layer, const SpikeTensor& x,
                          const std::vector<float>& keep) const;
  SpikeTensor mlp_forward(int layer, const SpikeTensor& x,
                          const std::vector<float>& keep) const;
  // SSA then MLP with OR residuals; applies the selector at block exit when
  // layer is listed in selector_layers (eval-mode top-k decision).
  std::pair<SpikeTensor, TokenDecision> encoder_block_forward(
      int layer, const SpikeTensor& x, const TokenDecision& keep) const;
  // Head logits from the average over time and kept tokens.
  Tensor classify(const SpikeTensor& x, const std::vector<float>& keep) const;

  // Raw softmax-free attention product on spike tensors, exposed for tests.
  static Tensor attention_product(const SpikeTensor& q, const SpikeTensor& k,
                                  const SpikeTensor& v, std::int64_t heads,
                                  float scale);

 private:
  struct BlockParams {
    Parameter *wq, *bq, *wk, *bk, *wv, *bv, *wo, *bo;
    Parameter *mlp_w1, *mlp_b1, *mlp_w2, *mlp_b2;
  };
  struct ScorerParams {
    Parameter *w1, *b1, *w2, *b2;
  };

  Parameter* add_param(const std::string& name, std::vector<std::int64_t> shape,
                       bool prunable, float init_bound);

  // Shared eval pipeline pieces operating on [T, B, N, D] flats.
  Tensor sps_eval(const Tensor& images) const;  // -> [T, B, N, D]
  Tensor ssa_branch_eval(int layer, const Tensor& x, const Tensor& mask) const;
  Tensor mlp_branch_eval(int layer, const Tensor& x, const Tensor& mask) const;
  Tensor block_eval(int layer, const Tensor& x, const Tensor& mask) const;
  Tensor scorer_eval(std::size_t app, const Tensor& x) const;  // [B, N] keep probs
  Tape::Val block_train(Tape& tape, int layer, Tape::Val x, const Tape::Val* mask,
                        std::int64_t t, std::int64_t bsz, std::int64_t n,
                        std::int64_t d) const;

  ModelConfig cfg_;
  std::vector<std::unique_ptr<Parameter>> params_;
  std::vector<std::pair<Parameter*, Parameter*>> sps_;  // conv weight, bias
  std::vector<BlockParams> blocks_;
  std::vector<ScorerParams> scorers_;
  Parameter* head_w_ = nullptr;
  Parameter* head_b_ = nullptr;
};

}  // namespace spikeprune
