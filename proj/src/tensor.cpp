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

#include "spikeprune/tensor.hpp"

namespace spikeprune {

Tensor permute_copy(const Tensor& in, const std::vector<std::int64_t>& view_shape,
                    const std::vector<int>& perm) {
  const auto rank = view_shape.size();
  check_dim(perm.size() == rank, "permute rank mismatch");
  check_dim(Tensor::numel_of(view_shape) == in.numel(), "permute view extent mismatch");
  std::vector<std::int64_t> out_shape(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = view_shape[perm[i]];

  std::vector<std::int64_t> in_strides(rank, 1);
  for (std::size_t i = rank - 1; i > 0; --i)
    in_strides[i - 1] = in_strides[i] * view_shape[i];
  std::vector<std::int64_t> src_stride(rank);
  for (std::size_t i = 0; i < rank; ++i) src_stride[i] = in_strides[perm[i]];

  Tensor out(out_shape);
  const std::int64_t total = out.numel();
  const float* src = in.data();
  float* dst = out.data();
#pragma omp parallel for schedule(static)
  for (std::int64_t o = 0; o < total; ++o) {
    std::int64_t rem = o;
    std::int64_t si = 0;
    for (std::size_t ax = rank; ax-- > 0;) {
      const std::int64_t c = rem % out_shape[ax];
      rem /= out_shape[ax];
      si += c * src_stride[ax];
    }
    dst[o] = src[si];
  }
  return out;
}

}  // namespace spikeprune
