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

// Compute kernels. spikeprune::kern holds the OpenMP-parallel versions used
// everywhere; spikeprune::ref holds plain serial implementations kept as the
// reference for tests and the kernel benchmark.
//
// Every kernel accumulates each output element in a fixed order owned by a
// single thread, so results are bitwise identical across thread counts and
// bitwise identical between kern and ref.

namespace spikeprune {
namespace kern {

// c[m,n] = a . b (or += when accumulate). a is [m,k] ([k,m] if trans_a),
// b is [k,n] ([n,k] if trans_b).
void matmul(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
            std::int64_t n, bool trans_a, bool trans_b, bool accumulate);

// Batched matmul over g independent slices.
void bmm(const float* a, const float* b, float* c, std::int64_t g, std::int64_t m,
         std::int64_t k, std::int64_t n, bool trans_a, bool trans_b, bool accumulate);

// Batched matmul with one shared left operand: c[gi] = a . b[gi].
void bmm_broadcast_a(const float* a, const float* b, float* c, std::int64_t g,
                     std::int64_t m, std::int64_t k, std::int64_t n, bool trans_a,
                     bool accumulate);

// Unfolds batch_count images [c,h,w] into columns [c*k*k, oh*ow] each.
void im2col(const float* x, float* col, std::int64_t batch_count, std::int64_t channels,
            std::int64_t h, std::int64_t w, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad);

// Transposed scatter of im2col; accumulates into x_grad (caller zeroes).
void col2im(const float* col, float* x_grad, std::int64_t batch_count,
            std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kernel,
            std::int64_t stride, std::int64_t pad);

// LIF recurrence over [t_steps, q] with per-element state. Writes pre-reset
// potentials u and binary spikes s. hard_reset selects zeroing vs threshold
// subtraction after a spike.
void lif_forward(const float* x, float* u, float* s, std::int64_t t_steps,
                 std::int64_t q, float threshold, float decay, bool hard_reset);

void vadd(const float* a, const float* b, float* out, std::int64_t n);
void vmul(const float* a, const float* b, float* out, std::int64_t n);
void vscale(const float* a, float c, float* out, std::int64_t n);
void vrelu(const float* a, float* out, std::int64_t n);

// out[n] = sum_m a[m,n]
void colsum(const float* a, float* out, std::int64_t m, std::int64_t n);

// out[q] = mean_t x[t,q]
void axis0_mean(const float* x, float* out, std::int64_t t_steps, std::int64_t q);

}  // namespace kern

namespace ref {

void matmul(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
            std::int64_t n, bool trans_a, bool trans_b, bool accumulate);
void bmm(const float* a, const float* b, float* c, std::int64_t g, std::int64_t m,
         std::int64_t k, std::int64_t n, bool trans_a, bool trans_b, bool accumulate);
void bmm_broadcast_a(const float* a, const float* b, float* c, std::int64_t g,
                     std::int64_t m, std::int64_t k, std::int64_t n, bool trans_a,
                     bool accumulate);
void im2col(const float* x, float* col, std::int64_t batch_count, std::int64_t channels,
            std::int64_t h, std::int64_t w, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad);
void col2im(const float* col, float* x_grad, std::int64_t batch_count,
            std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kernel,
            std::int64_t stride, std::int64_t pad);
void lif_forward(const float* x, float* u, float* s, std::int64_t t_steps,
                 std::int64_t q, float threshold, float decay, bool hard_reset);

}  // namespace ref
}  // namespace spikeprune
