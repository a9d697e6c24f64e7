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

#include "spikeprune/kernels.hpp"

#include <cstring>

namespace spikeprune {

namespace {

// Single output row of a matmul: all four transpose cases accumulate each
// c[i,j] in ascending-k order so kern and ref agree bitwise.
inline void matmul_row(const float* a, const float* b, float* crow, std::int64_t i,
                       std::int64_t m, std::int64_t k, std::int64_t n, bool trans_a,
                       bool trans_b, bool accumulate) {
  if (!accumulate) {
    for (std::int64_t j = 0; j < n; ++j) crow[j] = 0.0f;
  }
  if (!trans_b) {
    // b[p, j]: stream row p of b across all j.
    for (std::int64_t p = 0; p < k; ++p) {
      const float aip = trans_a ? a[p * m + i] : a[i * k + p];
      const float* brow = b + p * n;
      for (std::int64_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  } else {
    // b[j, p]: contiguous dot per output element.
    for (std::int64_t j = 0; j < n; ++j) {
      const float* brow = b + j * k;
      float acc = 0.0f;
      if (!trans_a) {
        const float* arow = a + i * k;
        for (std::int64_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      } else {
        for (std::int64_t p = 0; p < k; ++p) acc += a[p * m + i] * brow[p];
      }
      crow[j] += acc;
    }
  }
}

inline void im2col_one(const float* x, float* col, std::int64_t channels, std::int64_t h,
                       std::int64_t w, std::int64_t kernel, std::int64_t stride,
                       std::int64_t pad, std::int64_t oh, std::int64_t ow) {
  const std::int64_t patch = oh * ow;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ki = 0; ki < kernel; ++ki) {
      for (std::int64_t kj = 0; kj < kernel; ++kj) {
        float* dst = col + ((c * kernel + ki) * kernel + kj) * patch;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * stride + ki - pad;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * stride + kj - pad;
            const bool in = iy >= 0 && iy < h && ix >= 0 && ix < w;
            dst[oy * ow + ox] = in ? x[(c * h + iy) * w + ix] : 0.0f;
          }
        }
      }
    }
  }
}

inline void col2im_one(const float* col, float* xg, std::int64_t channels, std::int64_t h,
                       std::int64_t w, std::int64_t kernel, std::int64_t stride,
                       std::int64_t pad, std::int64_t oh, std::int64_t ow) {
  const std::int64_t patch = oh * ow;
  for (std::int64_t c = 0; c < channels; ++c) {
    for (std::int64_t ki = 0; ki < kernel; ++ki) {
      for (std::int64_t kj = 0; kj < kernel; ++kj) {
        const float* src = col + ((c * kernel + ki) * kernel + kj) * patch;
        for (std::int64_t oy = 0; oy < oh; ++oy) {
          const std::int64_t iy = oy * stride + ki - pad;
          if (iy < 0 || iy >= h) continue;
          for (std::int64_t ox = 0; ox < ow; ++ox) {
            const std::int64_t ix = ox * stride + kj - pad;
            if (ix < 0 || ix >= w) continue;
            xg[(c * h + iy) * w + ix] += src[oy * ow + ox];
          }
        }
      }
    }
  }
}

inline void lif_forward_lane(const float* x, float* u, float* s, std::int64_t t_steps,
                             std::int64_t q, std::int64_t lane, float threshold,
                             float decay, bool hard_reset) {
  float state = 0.0f;
  for (std::int64_t t = 0; t < t_steps; ++t) {
    const std::int64_t at = t * q + lane;
    const float ut = decay * state + x[at];
    const float spike = ut >= threshold ? 1.0f : 0.0f;
    u[at] = ut;
    s[at] = spike;
    state = hard_reset ? ut * (1.0f - spike) : ut - threshold * spike;
  }
}

}  // namespace

namespace kern {

void matmul(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
            std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < m; ++i)
    matmul_row(a, b, c + i * n, i, m, k, n, trans_a, trans_b, accumulate);
}

void bmm(const float* a, const float* b, float* c, std::int64_t g, std::int64_t m,
         std::int64_t k, std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t gi = 0; gi < g; ++gi) {
    for (std::int64_t i = 0; i < m; ++i) {
      matmul_row(a + gi * m * k, b + gi * k * n, c + (gi * m + i) * n, i, m, k, n,
                 trans_a, trans_b, accumulate);
    }
  }
}

void bmm_broadcast_a(const float* a, const float* b, float* c, std::int64_t g,
                     std::int64_t m, std::int64_t k, std::int64_t n, bool trans_a,
                     bool accumulate) {
#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t gi = 0; gi < g; ++gi) {
    for (std::int64_t i = 0; i < m; ++i) {
      matmul_row(a, b + gi * k * n, c + (gi * m + i) * n, i, m, k, n, trans_a, false,
                 accumulate);
    }
  }
}

void im2col(const float* x, float* col, std::int64_t batch_count, std::int64_t channels,
            std::int64_t h, std::int64_t w, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad) {
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  const std::int64_t xsz = channels * h * w;
  const std::int64_t csz = channels * kernel * kernel * oh * ow;
#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < batch_count; ++bi)
    im2col_one(x + bi * xsz, col + bi * csz, channels, h, w, kernel, stride, pad, oh, ow);
}

void col2im(const float* col, float* x_grad, std::int64_t batch_count,
            std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kernel,
            std::int64_t stride, std::int64_t pad) {
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  const std::int64_t xsz = channels * h * w;
  const std::int64_t csz = channels * kernel * kernel * oh * ow;
#pragma omp parallel for schedule(static)
  for (std::int64_t bi = 0; bi < batch_count; ++bi)
    col2im_one(col + bi * csz, x_grad + bi * xsz, channels, h, w, kernel, stride, pad,
               oh, ow);
}

void lif_forward(const float* x, float* u, float* s, std::int64_t t_steps,
                 std::int64_t q, float threshold, float decay, bool hard_reset) {
#pragma omp parallel for schedule(static)
  for (std::int64_t lane = 0; lane < q; ++lane)
    lif_forward_lane(x, u, s, t_steps, q, lane, threshold, decay, hard_reset);
}

void vadd(const float* a, const float* b, float* out, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void vmul(const float* a, const float* b, float* out, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void vscale(const float* a, float c, float* out, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] * c;
}

void vrelu(const float* a, float* out, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) out[i] = a[i] > 0.0f ? a[i] : 0.0f;
}

void colsum(const float* a, float* out, std::int64_t m, std::int64_t n) {
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < n; ++j) {
    float acc = 0.0f;
    for (std::int64_t i = 0; i < m; ++i) acc += a[i * n + j];
    out[j] = acc;
  }
}

void axis0_mean(const float* x, float* out, std::int64_t t_steps, std::int64_t q) {
  const float inv = t_steps > 0 ? 1.0f / static_cast<float>(t_steps) : 0.0f;
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < q; ++j) {
    float acc = 0.0f;
    for (std::int64_t t = 0; t < t_steps; ++t) acc += x[t * q + j];
    out[j] = acc * inv;
  }
}

}  // namespace kern

namespace ref {

void matmul(const float* a, const float* b, float* c, std::int64_t m, std::int64_t k,
            std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
  for (std::int64_t i = 0; i < m; ++i)
    matmul_row(a, b, c + i * n, i, m, k, n, trans_a, trans_b, accumulate);
}

void bmm(const float* a, const float* b, float* c, std::int64_t g, std::int64_t m,
         std::int64_t k, std::int64_t n, bool trans_a, bool trans_b, bool accumulate) {
  for (std::int64_t gi = 0; gi < g; ++gi)
    for (std::int64_t i = 0; i < m; ++i)
      matmul_row(a + gi * m * k, b + gi * k * n, c + (gi * m + i) * n, i, m, k, n,
                 trans_a, trans_b, accumulate);
}

void bmm_broadcast_a(const float* a, const float* b, float* c, std::int64_t g,
                     std::int64_t m, std::int64_t k, std::int64_t n, bool trans_a,
                     bool accumulate) {
  for (std::int64_t gi = 0; gi < g; ++gi)
    for (std::int64_t i = 0; i < m; ++i)
      matmul_row(a, b + gi * k * n, c + (gi * m + i) * n, i, m, k, n, trans_a, false,
                 accumulate);
}

void im2col(const float* x, float* col, std::int64_t batch_count, std::int64_t channels,
            std::int64_t h, std::int64_t w, std::int64_t kernel, std::int64_t stride,
            std::int64_t pad) {
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  const std::int64_t xsz = channels * h * w;
  const std::int64_t csz = channels * kernel * kernel * oh * ow;
  for (std::int64_t bi = 0; bi < batch_count; ++bi)
    im2col_one(x + bi * xsz, col + bi * csz, channels, h, w, kernel, stride, pad, oh, ow);
}

void col2im(const float* col, float* x_grad, std::int64_t batch_count,
            std::int64_t channels, std::int64_t h, std::int64_t w, std::int64_t kernel,
            std::int64_t stride, std::int64_t pad) {
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kernel) / stride + 1;
  const std::int64_t xsz = channels * h * w;
  const std::int64_t csz = channels * kernel * kernel * oh * ow;
  for (std::int64_t bi = 0; bi < batch_count; ++bi)
    col2im_one(col + bi * csz, x_grad + bi * xsz, channels, h, w, kernel, stride, pad,
               oh, ow);
}

void lif_forward(const float* x, float* u, float* s, std::int64_t t_steps,
                 std::int64_t q, float threshold, float decay, bool hard_reset) {
  for (std::int64_t lane = 0; lane < q; ++lane)
    lif_forward_lane(x, u, s, t_steps, q, lane, threshold, decay, hard_reset);
}

}  // namespace ref
}  // namespace spikeprune
