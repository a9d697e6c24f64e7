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

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace spikeprune {

// Error hierarchy. Every failure the library reports goes through one of
// these so callers (and tests) can distinguish bad shapes from bad configs
// from bad files.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class DimensionError : public Error {
 public:
  explicit DimensionError(const std::string& msg) : Error("dimension error: " + msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::int64_t byte_offset)
      : Error("format error at byte " + std::to_string(byte_offset) + ": " + msg),
        offset(byte_offset) {}
  std::int64_t offset;
};

class CheckpointError : public Error {
 public:
  explicit CheckpointError(const std::string& msg) : Error("checkpoint error: " + msg) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& msg) : Error("usage error: " + msg) {}
};

class TrainingDiverged : public Error {
 public:
  explicit TrainingDiverged(const std::string& msg) : Error("training diverged: " + msg) {}
};

inline void check_dim(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

inline void check_config(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

// Dense row-major float tensor. Deliberately plain: shape plus storage.
// All heavy math lives in kernels.hpp; this type only manages layout.
struct Tensor {
  std::vector<std::int64_t> shape;
  std::vector<float> v;

  Tensor() = default;
  explicit Tensor(std::vector<std::int64_t> s) : shape(std::move(s)) {
    v.assign(static_cast<std::size_t>(numel_of(shape)), 0.0f);
  }
  Tensor(std::vector<std::int64_t> s, std::vector<float> data)
      : shape(std::move(s)), v(std::move(data)) {
    check_dim(static_cast<std::int64_t>(v.size()) == numel_of(shape),
              "tensor storage does not match shape extent");
  }

  static std::int64_t numel_of(const std::vector<std::int64_t>& s) {
    std::int64_t n = 1;
    for (auto d : s) {
      check_dim(d >= 0, "negative dimension");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<std::int64_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<std::int64_t> s, float value) {
    Tensor t(std::move(s));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }
  static Tensor scalar(float value) { return Tensor({1}, {value}); }

  std::int64_t numel() const { return static_cast<std::int64_t>(v.size()); }
  std::int64_t dim(std::size_t i) const { return shape.at(i); }
  std::size_t rank() const { return shape.size(); }
  bool empty() const { return v.empty(); }

  float* data() { return v.data(); }
  const float* data() const { return v.data(); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  // Reinterprets the storage under a new shape with equal extent.
  Tensor reshaped(std::vector<std::int64_t> s) const {
    check_dim(numel_of(s) == numel(), "reshape changes extent");
    return Tensor(std::move(s), v);
  }

  void release() {
    shape.clear();
    v.clear();
    v.shrink_to_fit();
  }
};

// Copies `in` (viewed under view_shape) into a new tensor with axes
// reordered by perm: output dim i takes input dim perm[i].
Tensor permute_copy(const Tensor& in, const std::vector<std::int64_t>& view_shape,
                    const std::vector<int>& perm);

inline std::string shape_str(const std::vector<std::int64_t>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const std::string& what) {
  check_dim(a.same_shape(b),
            what + ": shapes " + shape_str(a.shape) + " vs " + shape_str(b.shape));
}

// Binary spike sequence over [T, N, D]: timesteps x tokens x channels.
// The single-image currency of the public model API. Batched internals use
// flat Tensors instead.
struct SpikeTensor {
  std::int64_t timesteps = 0;
  std::int64_t tokens = 0;
  std::int64_t channels = 0;
  std::vector<float> data;  // values in {0, 1}

  SpikeTensor() = default;
  SpikeTensor(std::int64_t t, std::int64_t n, std::int64_t d)
      : timesteps(t), tokens(n), channels(d) {
    check_dim(t >= 0 && n >= 0 && d >= 0, "negative spike tensor extent");
    data.assign(static_cast<std::size_t>(t * n * d), 0.0f);
  }

  static SpikeTensor from_tensor(const Tensor& t) {
    check_dim(t.rank() == 3, "spike tensor expects rank 3, got " + shape_str(t.shape));
    SpikeTensor s(t.dim(0), t.dim(1), t.dim(2));
    s.data = t.v;
    return s;
  }

  Tensor as_tensor() const { return Tensor({timesteps, tokens, channels}, data); }

  std::int64_t numel() const { return static_cast<std::int64_t>(data.size()); }

  float& at(std::int64_t t, std::int64_t n, std::int64_t d) {
    return data[static_cast<std::size_t>((t * tokens + n) * channels + d)];
  }
  float at(std::int64_t t, std::int64_t n, std::int64_t d) const {
    return data[static_cast<std::size_t>((t * tokens + n) * channels + d)];
  }

  // Exact binarity, no epsilon.
  bool is_binary() const {
    for (float x : data)
      if (x != 0.0f && x != 1.0f) return false;
    return true;
  }
};

}  // namespace spikeprune
