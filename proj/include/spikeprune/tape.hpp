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

#include <functional>
#include <string>
#include <vector>

#include "spikeprune/neuron.hpp"
#include "spikeprune/tensor.hpp"

namespace spikeprune {

// Distribution a parameter was initialized from, kept so the random
// re-initialization baseline can redraw from the same law.
struct InitSpec {
  float uniform_bound = 0.0f;  // U(-bound, bound); bound 0 means init to zeros
};

// A trainable tensor. Prunable parameters carry a {0,1} mask aligned with
// value; pruned positions hold exactly 0 in both value and mask.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;
  Tensor mask;  // allocated only when prunable
  bool prunable = false;
  InitSpec init;

  std::int64_t numel() const { return value.numel(); }
  void ensure_grad() {
    if (grad.numel() != value.numel()) grad = Tensor::zeros(value.shape);
  }
  void zero_grad() {
    ensure_grad();
    std::fill(grad.v.begin(), grad.v.end(), 0.0f);
  }
  std::int64_t alive_count() const {
    if (!prunable) return numel();
    std::int64_t n = 0;
    for (float m : mask.v) n += m != 0.0f ? 1 : 0;
    return n;
  }
};

struct LifSpec {
  float threshold = 1.0f;
  float decay = 0.5f;
  ResetMode reset = ResetMode::hard_zero;
  SurrogateConfig surrogate;
};

// Reverse-mode tape over dense float tensors. A forward pass records nodes;
// backward walks them in reverse, accumulating into node grads and straight
// into Parameter::grad for parameter-touching ops. Node values are released
// as soon as backward has consumed them.
class Tape {
 public:
  struct Val {
    std::int32_t i = -1;
    bool ok() const { return i >= 0; }
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Val input(Tensor x);

  // y[..., out] = x[..., in] @ w[in, out] + b
  Val linear(Val x, Parameter& w, Parameter* b);

  // x viewed as [images, C, H, W] with images = x.shape[0]*...; w [O, C*k*k].
  Val conv2d(Val x, Parameter& w, Parameter* b, std::int64_t stride, std::int64_t pad);

  // LIF over leading dim t_steps; remaining extent is the lane count.
  Val lif(Val x, std::int64_t t_steps, const LifSpec& spec);

  Val add(Val a, Val b);
  Val sub(Val a, Val b);
  Val mul(Val a, Val b);
  // a + b - a*b; binary inputs stay binary.
  Val spike_or(Val a, Val b);
  Val scale(Val a, float c);
  Val add_const(Val a, float c);
  Val relu(Val a);

  // Reinterprets x's storage as view_shape, then permutes axes. When
  // out_reshape is nonempty the result's shape metadata is rewritten to it
  // (extent must match).
  Val permute(Val x, std::vector<std::int64_t> view_shape, std::vector<int> perm,
              std::vector<std::int64_t> out_reshape = {});

  Val softmax_lastdim(Val x);
  // y[...] = x[..., pick] over last dim of extent last.
  Val slice_lastdim(Val x, std::int64_t pick);

  // Batched matmul: a viewed [g, m, k], b viewed [g, k, n] ([g, n, k] if
  // trans_b). Shapes are taken from the arguments, not the node metadata.
  Val bmm(Val a, Val b, std::int64_t g, std::int64_t m, std::int64_t k, std::int64_t n,
          bool trans_b, std::vector<std::int64_t> out_shape);

  // x [T,B,N,D] * m [B,N] broadcast over T and D.
  Val mask_mul(Val x, Val m);

  // [T, rest] -> [rest] mean over leading axis.
  Val mean_axis0(Val x);
  // [T,B,N,D] -> [B,D] sum over T and N.
  Val sum_time_tokens(Val x);
  // y[b, :] = x[b, :] * factors[b]
  Val per_sample_scale(Val x, std::vector<float> factors);
  Val mean_all(Val x);

  // Forward takes the hard tensor verbatim; backward passes the node grad to
  // soft untouched.
  Val straight_through(Tensor hard, Val soft);

  // Mean cross-entropy of logits [B, C] against integer labels.
  Val cross_entropy(Val logits, const std::vector<int>& labels);

  const Tensor& value(Val v) const;
  // Marks a node's value to survive backward's release pass.
  void keep(Val v);

  // Seeds d(loss)=1 and runs every recorded backward in reverse order.
  // Parameter grads must have been zeroed by the caller beforehand.
  void backward(Val loss);

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor val;
    Tensor grad;
    std::function<void(Tape&, std::int32_t)> back;
    std::vector<Tensor> saved;
    bool keep = false;
  };

  Val push(Tensor val, std::function<void(Tape&, std::int32_t)> back,
           std::vector<Tensor> saved = {});
  Node& node(std::int32_t i) { return nodes_[static_cast<std::size_t>(i)]; }
  Node& node(Val v);
  const Node& node(Val v) const;
  Tensor& grad_buf(std::int32_t i);
  bool has_grad(std::int32_t i) const;

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace spikeprune
