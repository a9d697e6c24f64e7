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

#include "spikeprune/tape.hpp"

#include <cmath>
#include <cstring>

#include "spikeprune/kernels.hpp"

namespace spikeprune {

namespace {

std::vector<int> inverse_perm(const std::vector<int>& perm) {
  std::vector<int> inv(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) inv[perm[i]] = static_cast<int>(i);
  return inv;
}

void accumulate(Tensor& dst, const Tensor& src) {
  check_same_shape(dst, src, "gradient accumulate");
  float* d = dst.data();
  const float* s = src.data();
  const std::int64_t n = dst.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
}

}  // namespace

Tape::Node& Tape::node(Val v) {
  if (!v.ok() || static_cast<std::size_t>(v.i) >= nodes_.size())
    throw UsageError("invalid tape value handle");
  return nodes_[static_cast<std::size_t>(v.i)];
}

const Tape::Node& Tape::node(Val v) const {
  if (!v.ok() || static_cast<std::size_t>(v.i) >= nodes_.size())
    throw UsageError("invalid tape value handle");
  return nodes_[static_cast<std::size_t>(v.i)];
}

Tape::Val Tape::push(Tensor val, std::function<void(Tape&, std::int32_t)> back,
                     std::vector<Tensor> saved) {
  Node nd;
  nd.val = std::move(val);
  nd.back = std::move(back);
  nd.saved = std::move(saved);
  nodes_.push_back(std::move(nd));
  return Val{static_cast<std::int32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad_buf(std::int32_t i) {
  Node& nd = node(i);
  if (nd.grad.numel() != nd.val.numel()) nd.grad = Tensor::zeros(nd.val.shape);
  return nd.grad;
}

bool Tape::has_grad(std::int32_t i) const {
  const Node& nd = nodes_[static_cast<std::size_t>(i)];
  return nd.grad.numel() == nd.val.numel() && nd.grad.numel() > 0;
}

const Tensor& Tape::value(Val v) const { return node(v).val; }

void Tape::keep(Val v) { node(v).keep = true; }

Tape::Val Tape::input(Tensor x) { return push(std::move(x), nullptr); }

Tape::Val Tape::linear(Val x, Parameter& w, Parameter* b) {
  const Tensor& xv = node(x).val;
  check_dim(w.value.rank() == 2, "linear weight must be rank 2");
  const std::int64_t in = w.value.dim(0);
  const std::int64_t out = w.value.dim(1);
  check_dim(xv.rank() >= 1 && xv.shape.back() == in,
            "linear input " + shape_str(xv.shape) + " vs weight " + shape_str(w.value.shape));
  if (b) check_dim(b->value.numel() == out, "linear bias extent");
  const std::int64_t m = xv.numel() / in;

  std::vector<std::int64_t> out_shape = xv.shape;
  out_shape.back() = out;
  Tensor y(out_shape);
  kern::matmul(xv.data(), w.value.data(), y.data(), m, in, out, false, false, false);
  if (b) {
    float* yd = y.data();
    const float* bd = b->value.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < m; ++r)
      for (std::int64_t j = 0; j < out; ++j) yd[r * out + j] += bd[j];
  }

  const std::int32_t xi = x.i;
  Parameter* wp = &w;
  return push(std::move(y), [xi, wp, b, m, in, out](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& xval = tp.node(xi).val;
    // dW += x^T dy
    wp->ensure_grad();
    kern::matmul(xval.data(), dy.data(), wp->grad.data(), in, m, out, true, false, true);
    if (b) {
      b->ensure_grad();
      Tensor tmp({out});
      kern::colsum(dy.data(), tmp.data(), m, out);
      accumulate(b->grad, tmp);
    }
    // dx += dy W^T
    Tensor& gx = tp.grad_buf(xi);
    kern::matmul(dy.data(), wp->value.data(), gx.data(), m, out, in, false, true, true);
  });
}

Tape::Val Tape::conv2d(Val x, Parameter& w, Parameter* b, std::int64_t stride,
                       std::int64_t pad) {
  const Tensor& xv = node(x).val;
  check_dim(xv.rank() == 4, "conv2d input must be [images, C, H, W]");
  const std::int64_t bi = xv.dim(0), c = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
  check_dim(w.value.rank() == 2, "conv weight must be [O, C*k*k]");
  const std::int64_t o = w.value.dim(0);
  const std::int64_t ckk = w.value.dim(1);
  check_dim(ckk % c == 0, "conv weight does not cover input channels");
  std::int64_t kernel = 1;
  while (kernel * kernel < ckk / c) ++kernel;
  check_dim(kernel * kernel == ckk / c, "conv weight is not a square kernel");
  const std::int64_t oh = (h + 2 * pad - kernel) / stride + 1;
  const std::int64_t ow = (wd + 2 * pad - kernel) / stride + 1;
  const std::int64_t p = oh * ow;
  if (b) check_dim(b->value.numel() == o, "conv bias extent");

  Tensor col({bi, ckk, p});
  kern::im2col(xv.data(), col.data(), bi, c, h, wd, kernel, stride, pad);
  Tensor y({bi, o, oh, ow});
  kern::bmm_broadcast_a(w.value.data(), col.data(), y.data(), bi, o, ckk, p, false,
                        false);
  if (b) {
    float* yd = y.data();
    const float* bd = b->value.data();
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t img = 0; img < bi; ++img)
      for (std::int64_t ch = 0; ch < o; ++ch) {
        float* row = yd + (img * o + ch) * p;
        for (std::int64_t j = 0; j < p; ++j) row[j] += bd[ch];
      }
  }

  const std::int32_t xi = x.i;
  Parameter* wp = &w;
  return push(
      std::move(y),
      [xi, wp, b, bi, c, h, wd, kernel, stride, pad, o, ckk, p](Tape& tp,
                                                                std::int32_t self) {
        const Tensor& dy = tp.node(self).grad;  // [bi, o, oh, ow]
        const Tensor& col = tp.node(self).saved[0];
        wp->ensure_grad();
        // dW accumulated image by image in fixed order.
        for (std::int64_t img = 0; img < bi; ++img) {
          kern::matmul(dy.data() + img * o * p, col.data() + img * ckk * p,
                       wp->grad.data(), o, p, ckk, false, true, true);
        }
        if (b) {
          b->ensure_grad();
          float* bg = b->grad.data();
          const float* dyd = dy.data();
#pragma omp parallel for schedule(static)
          for (std::int64_t ch = 0; ch < o; ++ch) {
            float acc = 0.0f;
            for (std::int64_t img = 0; img < bi; ++img) {
              const float* row = dyd + (img * o + ch) * p;
              for (std::int64_t j = 0; j < p; ++j) acc += row[j];
            }
            bg[ch] += acc;
          }
        }
        Tensor dcol({bi, ckk, p});
        kern::bmm_broadcast_a(wp->value.data(), dy.data(), dcol.data(), bi, ckk, o, p,
                              true, false);
        Tensor& gx = tp.grad_buf(xi);
        kern::col2im(dcol.data(), gx.data(), bi, c, h, wd, kernel, stride, pad);
      },
      {std::move(col)});
}

Tape::Val Tape::lif(Val x, std::int64_t t_steps, const LifSpec& spec) {
  const Tensor& xv = node(x).val;
  check_dim(t_steps >= 1, "lif needs at least one timestep");
  // Storage must be time-major; the leading metadata dim may fold T with the
  // batch (conv stages run on [T*B, C, H, W]).
  check_dim(xv.numel() % t_steps == 0, "lif extent not divisible by timesteps");
  spec.surrogate.validate();
  check_config(spec.threshold > 0.0f, "LIF threshold must be positive");
  check_config(spec.decay > 0.0f && spec.decay <= 1.0f, "LIF decay must be in (0, 1]");
  const std::int64_t q = xv.numel() / t_steps;
  const bool hard = spec.reset == ResetMode::hard_zero;

  Tensor u(xv.shape);
  Tensor s(xv.shape);
  kern::lif_forward(xv.data(), u.data(), s.data(), t_steps, q, spec.threshold,
                    spec.decay, hard);

  const std::int32_t xi = x.i;
  const LifSpec sp = spec;
  return push(
      std::move(s),
      [xi, sp, t_steps, q, hard](Tape& tp, std::int32_t self) {
        const Tensor& gs = tp.node(self).grad;
        const Tensor& sval = tp.node(self).val;
        const Tensor& u = tp.node(self).saved[0];
        Tensor& gx = tp.grad_buf(xi);
        const float* gsd = gs.data();
        const float* sd = sval.data();
        const float* ud = u.data();
        float* gxd = gx.data();
        // Reverse-time recurrence per lane. The reset factor treats the spike
        // as constant; the spike path itself carries the surrogate.
#pragma omp parallel for schedule(static)
        for (std::int64_t lane = 0; lane < q; ++lane) {
          float gh = 0.0f;
          for (std::int64_t t = t_steps - 1; t >= 0; --t) {
            const std::int64_t at = t * q + lane;
            const float sur =
                surrogate_derivative_scalar(ud[at] - sp.threshold, sp.surrogate);
            const float dh_du = hard ? (1.0f - sd[at]) : 1.0f;
            const float gu = gh * dh_du + gsd[at] * sur;
            gxd[at] += gu;
            gh = sp.decay * gu;
          }
        }
      },
      {std::move(u)});
}

Tape::Val Tape::add(Val a, Val b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  check_same_shape(av, bv, "add");
  Tensor y(av.shape);
  kern::vadd(av.data(), bv.data(), y.data(), y.numel());
  const std::int32_t ai = a.i, bi = b.i;
  return push(std::move(y), [ai, bi](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    accumulate(tp.grad_buf(ai), dy);
    accumulate(tp.grad_buf(bi), dy);
  });
}

Tape::Val Tape::sub(Val a, Val b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  check_same_shape(av, bv, "sub");
  Tensor y(av.shape);
  const std::int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) y.v[i] = av.v[i] - bv.v[i];
  const std::int32_t ai = a.i, bi = b.i;
  return push(std::move(y), [ai, bi](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    accumulate(tp.grad_buf(ai), dy);
    Tensor& gb = tp.grad_buf(bi);
    const std::int64_t n = dy.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gb.v[i] -= dy.v[i];
  });
}

Tape::Val Tape::mul(Val a, Val b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  check_same_shape(av, bv, "mul");
  Tensor y(av.shape);
  kern::vmul(av.data(), bv.data(), y.data(), y.numel());
  const std::int32_t ai = a.i, bi = b.i;
  return push(std::move(y), [ai, bi](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& av = tp.node(ai).val;
    const Tensor& bv = tp.node(bi).val;
    Tensor& ga = tp.grad_buf(ai);
    Tensor& gb = tp.grad_buf(bi);
    const std::int64_t n = dy.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      ga.v[i] += dy.v[i] * bv.v[i];
    }
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      gb.v[i] += dy.v[i] * av.v[i];
    }
  });
}

Tape::Val Tape::spike_or(Val a, Val b) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  check_same_shape(av, bv, "spike_or");
  Tensor y(av.shape);
  const std::int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    y.v[i] = av.v[i] + bv.v[i] - av.v[i] * bv.v[i];
  const std::int32_t ai = a.i, bi = b.i;
  return push(std::move(y), [ai, bi](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& av = tp.node(ai).val;
    const Tensor& bv = tp.node(bi).val;
    Tensor& ga = tp.grad_buf(ai);
    Tensor& gb = tp.grad_buf(bi);
    const std::int64_t n = dy.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) ga.v[i] += dy.v[i] * (1.0f - bv.v[i]);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) gb.v[i] += dy.v[i] * (1.0f - av.v[i]);
  });
}

Tape::Val Tape::scale(Val a, float c) {
  const Tensor& av = node(a).val;
  Tensor y(av.shape);
  kern::vscale(av.data(), c, y.data(), y.numel());
  const std::int32_t ai = a.i;
  return push(std::move(y), [ai, c](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    Tensor& ga = tp.grad_buf(ai);
    const std::int64_t n = dy.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) ga.v[i] += dy.v[i] * c;
  });
}

Tape::Val Tape::add_const(Val a, float c) {
  const Tensor& av = node(a).val;
  Tensor y(av.shape);
  const std::int64_t n = y.numel();
  for (std::int64_t i = 0; i < n; ++i) y.v[i] = av.v[i] + c;
  const std::int32_t ai = a.i;
  return push(std::move(y), [ai](Tape& tp, std::int32_t self) {
    accumulate(tp.grad_buf(ai), tp.node(self).grad);
  });
}

Tape::Val Tape::relu(Val a) {
  const Tensor& av = node(a).val;
  Tensor y(av.shape);
  kern::vrelu(av.data(), y.data(), y.numel());
  const std::int32_t ai = a.i;
  return push(std::move(y), [ai](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& av = tp.node(ai).val;
    Tensor& ga = tp.grad_buf(ai);
    const std::int64_t n = dy.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i)
      if (av.v[i] > 0.0f) ga.v[i] += dy.v[i];
  });
}

Tape::Val Tape::permute(Val x, std::vector<std::int64_t> view_shape,
                        std::vector<int> perm, std::vector<std::int64_t> out_reshape) {
  const Tensor& xv = node(x).val;
  Tensor y = permute_copy(xv, view_shape, perm);
  std::vector<std::int64_t> out_shape = y.shape;
  if (!out_reshape.empty()) y = y.reshaped(out_reshape);
  const std::int32_t xi = x.i;
  const auto inv = inverse_perm(perm);
  return push(std::move(y), [xi, inv, out_shape, view_shape](Tape& tp,
                                                             std::int32_t self) {
    Tensor back = permute_copy(tp.node(self).grad, out_shape, inv);
    Tensor& gx = tp.grad_buf(xi);
    // The inverse permute restores the flat layout of the viewed input.
    float* d = gx.data();
    const float* s = back.data();
    const std::int64_t n = gx.numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) d[i] += s[i];
  });
}

Tape::Val Tape::softmax_lastdim(Val x) {
  const Tensor& xv = node(x).val;
  check_dim(xv.rank() >= 1, "softmax needs at least rank 1");
  const std::int64_t c = xv.shape.back();
  const std::int64_t rows = xv.numel() / c;
  Tensor y(xv.shape);
#pragma omp parallel for schedule(static)
  for (std::int64_t r = 0; r < rows; ++r) {
    const float* xr = xv.data() + r * c;
    float* yr = y.data() + r * c;
    float mx = xr[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, xr[j]);
    float denom = 0.0f;
    for (std::int64_t j = 0; j < c; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      denom += yr[j];
    }
    const float inv = 1.0f / denom;
    for (std::int64_t j = 0; j < c; ++j) yr[j] *= inv;
  }
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, c, rows](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& yv = tp.node(self).val;
    Tensor& gx = tp.grad_buf(xi);
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < rows; ++r) {
      const float* yr = yv.data() + r * c;
      const float* dr = dy.data() + r * c;
      float* gr = gx.data() + r * c;
      float dot = 0.0f;
      for (std::int64_t j = 0; j < c; ++j) dot += dr[j] * yr[j];
      for (std::int64_t j = 0; j < c; ++j) gr[j] += yr[j] * (dr[j] - dot);
    }
  });
}

Tape::Val Tape::slice_lastdim(Val x, std::int64_t pick) {
  const Tensor& xv = node(x).val;
  const std::int64_t c = xv.shape.back();
  check_dim(pick >= 0 && pick < c, "slice index out of range");
  const std::int64_t rows = xv.numel() / c;
  std::vector<std::int64_t> out_shape(xv.shape.begin(), xv.shape.end() - 1);
  Tensor y(out_shape);
  for (std::int64_t r = 0; r < rows; ++r) y.v[r] = xv.v[r * c + pick];
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, c, rows, pick](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    Tensor& gx = tp.grad_buf(xi);
    for (std::int64_t r = 0; r < rows; ++r) gx.v[r * c + pick] += dy.v[r];
  });
}

Tape::Val Tape::bmm(Val a, Val b, std::int64_t g, std::int64_t m, std::int64_t k,
                    std::int64_t n, bool trans_b, std::vector<std::int64_t> out_shape) {
  const Tensor& av = node(a).val;
  const Tensor& bv = node(b).val;
  check_dim(av.numel() == g * m * k, "bmm lhs extent");
  check_dim(bv.numel() == g * k * n, "bmm rhs extent");
  check_dim(Tensor::numel_of(out_shape) == g * m * n, "bmm out extent");
  Tensor y(out_shape);
  kern::bmm(av.data(), bv.data(), y.data(), g, m, k, n, false, trans_b, false);
  const std::int32_t ai = a.i, bi = b.i;
  return push(std::move(y), [ai, bi, g, m, k, n, trans_b](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& av = tp.node(ai).val;
    const Tensor& bv = tp.node(bi).val;
    Tensor& ga = tp.grad_buf(ai);
    Tensor& gb = tp.grad_buf(bi);
    if (!trans_b) {
      // da = dy b^T ; db = a^T dy
      kern::bmm(dy.data(), bv.data(), ga.data(), g, m, n, k, false, true, true);
      kern::bmm(av.data(), dy.data(), gb.data(), g, k, m, n, true, false, true);
    } else {
      // b stored [n, k]: da = dy b ; db = dy^T a
      kern::bmm(dy.data(), bv.data(), ga.data(), g, m, n, k, false, false, true);
      kern::bmm(dy.data(), av.data(), gb.data(), g, n, m, k, true, false, true);
    }
  });
}

Tape::Val Tape::mask_mul(Val x, Val m) {
  const Tensor& xv = node(x).val;
  const Tensor& mv = node(m).val;
  check_dim(xv.rank() == 4, "mask_mul expects [T,B,N,D]");
  check_dim(mv.rank() == 2 && mv.dim(0) == xv.dim(1) && mv.dim(1) == xv.dim(2),
            "mask shape " + shape_str(mv.shape) + " vs activations " + shape_str(xv.shape));
  const std::int64_t t = xv.dim(0), bsz = xv.dim(1), ntok = xv.dim(2), d = xv.dim(3);
  Tensor y(xv.shape);
#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t ti = 0; ti < t; ++ti)
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t nn = 0; nn < ntok; ++nn) {
        const float mm = mv.v[b * ntok + nn];
        const std::int64_t base = ((ti * bsz + b) * ntok + nn) * d;
        for (std::int64_t j = 0; j < d; ++j) y.v[base + j] = xv.v[base + j] * mm;
      }
  const std::int32_t xi = x.i, mi = m.i;
  return push(std::move(y), [xi, mi, t, bsz, ntok, d](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    const Tensor& xv = tp.node(xi).val;
    const Tensor& mv = tp.node(mi).val;
    Tensor& gx = tp.grad_buf(xi);
    Tensor& gm = tp.grad_buf(mi);
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t nn = 0; nn < ntok; ++nn) {
        const float mm = mv.v[b * ntok + nn];
        float macc = 0.0f;
        for (std::int64_t ti = 0; ti < t; ++ti) {
          const std::int64_t base = ((ti * bsz + b) * ntok + nn) * d;
          for (std::int64_t j = 0; j < d; ++j) {
            gx.v[base + j] += dy.v[base + j] * mm;
            macc += dy.v[base + j] * xv.v[base + j];
          }
        }
        gm.v[b * ntok + nn] += macc;
      }
  });
}

Tape::Val Tape::mean_axis0(Val x) {
  const Tensor& xv = node(x).val;
  check_dim(xv.rank() >= 2, "mean_axis0 needs a leading axis");
  const std::int64_t t = xv.dim(0);
  check_dim(t >= 1, "mean over empty leading axis");
  const std::int64_t q = xv.numel() / t;
  std::vector<std::int64_t> out_shape(xv.shape.begin() + 1, xv.shape.end());
  Tensor y(out_shape);
  kern::axis0_mean(xv.data(), y.data(), t, q);
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, t, q](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    Tensor& gx = tp.grad_buf(xi);
    const float inv = 1.0f / static_cast<float>(t);
#pragma omp parallel for schedule(static)
    for (std::int64_t j = 0; j < q; ++j) {
      const float g = dy.v[j] * inv;
      for (std::int64_t ti = 0; ti < t; ++ti) gx.v[ti * q + j] += g;
    }
  });
}

Tape::Val Tape::sum_time_tokens(Val x) {
  const Tensor& xv = node(x).val;
  check_dim(xv.rank() == 4, "sum_time_tokens expects [T,B,N,D]");
  const std::int64_t t = xv.dim(0), bsz = xv.dim(1), ntok = xv.dim(2), d = xv.dim(3);
  Tensor y({bsz, d});
#pragma omp parallel for schedule(static)
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t j = 0; j < d; ++j) {
      float acc = 0.0f;
      for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t nn = 0; nn < ntok; ++nn)
          acc += xv.v[((ti * bsz + b) * ntok + nn) * d + j];
      y.v[b * d + j] = acc;
    }
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, t, bsz, ntok, d](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    Tensor& gx = tp.grad_buf(xi);
#pragma omp parallel for schedule(static) collapse(2)
    for (std::int64_t ti = 0; ti < t; ++ti)
      for (std::int64_t b = 0; b < bsz; ++b)
        for (std::int64_t nn = 0; nn < ntok; ++nn)
          for (std::int64_t j = 0; j < d; ++j)
            gx.v[((ti * bsz + b) * ntok + nn) * d + j] += dy.v[b * d + j];
  });
}

Tape::Val Tape::per_sample_scale(Val x, std::vector<float> factors) {
  const Tensor& xv = node(x).val;
  check_dim(xv.rank() == 2 && xv.dim(0) == static_cast<std::int64_t>(factors.size()),
            "per_sample_scale rows vs factors");
  const std::int64_t bsz = xv.dim(0), d = xv.dim(1);
  Tensor y(xv.shape);
  for (std::int64_t b = 0; b < bsz; ++b)
    for (std::int64_t j = 0; j < d; ++j) y.v[b * d + j] = xv.v[b * d + j] * factors[b];
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, factors, bsz, d](Tape& tp, std::int32_t self) {
    const Tensor& dy = tp.node(self).grad;
    Tensor& gx = tp.grad_buf(xi);
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t j = 0; j < d; ++j) gx.v[b * d + j] += dy.v[b * d + j] * factors[b];
  });
}

Tape::Val Tape::mean_all(Val x) {
  const Tensor& xv = node(x).val;
  const std::int64_t n = xv.numel();
  check_dim(n >= 1, "mean of empty tensor");
  float acc = 0.0f;
  for (std::int64_t i = 0; i < n; ++i) acc += xv.v[i];
  Tensor y = Tensor::scalar(acc / static_cast<float>(n));
  const std::int32_t xi = x.i;
  return push(std::move(y), [xi, n](Tape& tp, std::int32_t self) {
    const float g = tp.node(self).grad.v[0] / static_cast<float>(n);
    Tensor& gx = tp.grad_buf(xi);
    for (std::int64_t i = 0; i < n; ++i) gx.v[i] += g;
  });
}

Tape::Val Tape::straight_through(Tensor hard, Val soft) {
  const Tensor& sv = node(soft).val;
  check_same_shape(hard, sv, "straight_through hard vs soft");
  const std::int32_t si = soft.i;
  return push(std::move(hard), [si](Tape& tp, std::int32_t self) {
    accumulate(tp.grad_buf(si), tp.node(self).grad);
  });
}

Tape::Val Tape::cross_entropy(Val logits, const std::vector<int>& labels) {
  const Tensor& lv = node(logits).val;
  check_dim(lv.rank() == 2, "cross_entropy expects [B, C] logits");
  const std::int64_t bsz = lv.dim(0), c = lv.dim(1);
  check_dim(static_cast<std::int64_t>(labels.size()) == bsz, "labels vs batch size");
  Tensor probs({bsz, c});
  double loss = 0.0;
  for (std::int64_t b = 0; b < bsz; ++b) {
    const int label = labels[b];
    check_dim(label >= 0 && label < c, "label out of range");
    const float* row = lv.data() + b * c;
    float mx = row[0];
    for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
    float denom = 0.0f;
    for (std::int64_t j = 0; j < c; ++j) {
      probs.v[b * c + j] = std::exp(row[j] - mx);
      denom += probs.v[b * c + j];
    }
    for (std::int64_t j = 0; j < c; ++j) probs.v[b * c + j] /= denom;
    loss += std::log(denom) + mx - row[label];
  }
  Tensor y = Tensor::scalar(static_cast<float>(loss / static_cast<double>(bsz)));
  const std::int32_t li = logits.i;
  auto labs = labels;
  return push(
      std::move(y),
      [li, labs, bsz, c](Tape& tp, std::int32_t self) {
        const float g = tp.node(self).grad.v[0] / static_cast<float>(bsz);
        const Tensor& probs = tp.node(self).saved[0];
        Tensor& gl = tp.grad_buf(li);
        for (std::int64_t b = 0; b < bsz; ++b) {
          for (std::int64_t j = 0; j < c; ++j)
            gl.v[b * c + j] += g * probs.v[b * c + j];
          gl.v[b * c + labs[b]] -= g;
        }
      },
      {std::move(probs)});
}

void Tape::backward(Val loss) {
  if (nodes_.empty() || !loss.ok() ||
      static_cast<std::size_t>(loss.i) >= nodes_.size())
    throw UsageError("backward requires a recorded forward pass");
  if (backward_done_) throw UsageError("backward already ran on this tape");
  Node& top = node(loss);
  check_dim(top.val.numel() == 1, "backward seed must be scalar");
  grad_buf(loss.i).v[0] = 1.0f;
  for (std::int32_t i = static_cast<std::int32_t>(nodes_.size()) - 1; i >= 0; --i) {
    Node& nd = nodes_[static_cast<std::size_t>(i)];
    if (nd.back && has_grad(i)) nd.back(*this, i);
    nd.grad.release();
    nd.saved.clear();
    if (!nd.keep) nd.val.release();
  }
  backward_done_ = true;
}

}  // namespace spikeprune
