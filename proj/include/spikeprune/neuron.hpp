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

#include <cmath>
#include <utility>

#include "spikeprune/tensor.hpp"

namespace spikeprune {

enum class ResetMode { hard_zero, soft_subtract };

enum class SurrogateKind { sigmoid, rectangular, arctan };

// Surrogate derivative used in place of the Heaviside step on the backward
// pass. width steers the sharpness; every kind is nonnegative, peaks at the
// threshold, and vanishes away from it.
struct SurrogateConfig {
  SurrogateKind kind = SurrogateKind::sigmoid;
  float width = 4.0f;

  void validate() const {
    check_config(width > 0.0f, "surrogate width must be positive");
  }
};

// Leaky integrate-and-fire state for one layer of neurons. potential holds
// the membrane voltage per element; decay is the per-step leak factor.
struct MembraneState {
  Tensor potential;
  float threshold = 1.0f;
  float decay = 0.5f;
  ResetMode reset_mode = ResetMode::hard_zero;

  void validate() const {
    check_config(threshold > 0.0f, "LIF threshold must be positive");
    check_config(decay > 0.0f && decay <= 1.0f, "LIF decay must be in (0, 1]");
  }
};

// One LIF update for a single element. Returns pre-reset potential u, the
// spike, and the post-reset state h carried to the next step. Shared by the
// public lif_step and the fused sequence kernels so the recurrence cannot
// drift between them.
inline void lif_step_scalar(float h_prev, float x, float threshold, float decay,
                            bool hard_reset, float& u, float& s, float& h_next) {
  u = decay * h_prev + x;
  s = u >= threshold ? 1.0f : 0.0f;
  h_next = hard_reset ? u * (1.0f - s) : u - threshold * s;
}

inline float surrogate_derivative_scalar(float x, const SurrogateConfig& cfg) {
  switch (cfg.kind) {
    case SurrogateKind::sigmoid: {
      // d/dx sigmoid(width * x); integrates to 1 over the real line.
      const float z = 1.0f / (1.0f + std::exp(-cfg.width * x));
      return cfg.width * z * (1.0f - z);
    }
    case SurrogateKind::rectangular:
      // Unit-mass window of extent width centered at the threshold.
      return std::fabs(x) <= 0.5f * cfg.width ? 1.0f / cfg.width : 0.0f;
    case SurrogateKind::arctan: {
      const float z = 0.5f * static_cast<float>(M_PI) * cfg.width * x;
      return 0.5f * cfg.width / (1.0f + z * z);
    }
  }
  return 0.0f;
}

// spikes = 1 where x >= 0 else 0, exactly binary.
inline Tensor heaviside_spike(const Tensor& x) {
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i) out.v[i] = x.v[i] >= 0.0f ? 1.0f : 0.0f;
  return out;
}

inline Tensor surrogate_derivative(const Tensor& x, const SurrogateConfig& cfg) {
  cfg.validate();
  Tensor out(x.shape);
  for (std::int64_t i = 0; i < x.numel(); ++i)
    out.v[i] = surrogate_derivative_scalar(x.v[i], cfg);
  return out;
}

// One timestep of LIF dynamics over a whole state tensor. The surrogate
// config only participates in training (the tape routes gradients through
// surrogate_derivative); it is validated here so misconfiguration surfaces
// at the call site even in inference-only code.
inline std::pair<Tensor, MembraneState> lif_step(const MembraneState& state,
                                                 const Tensor& input_current,
                                                 const SurrogateConfig& surrogate) {
  state.validate();
  surrogate.validate();
  check_same_shape(state.potential, input_current, "lif_step state vs input");
  const bool hard = state.reset_mode == ResetMode::hard_zero;

  MembraneState next = state;
  Tensor spikes(input_current.shape);
  for (std::int64_t i = 0; i < input_current.numel(); ++i) {
    float u, s, h;
    lif_step_scalar(state.potential.v[i], input_current.v[i], state.threshold,
                    state.decay, hard, u, s, h);
    spikes.v[i] = s;
    next.potential.v[i] = h;
  }
  return {std::move(spikes), std::move(next)};
}

}  // namespace spikeprune
