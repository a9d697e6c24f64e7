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

#include "spikeprune/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "spikeprune/kernels.hpp"

namespace spikeprune {

namespace {

// y[..., out] = x[..., in] @ w + b, no tape.
Tensor linear_eval(const Tensor& x, const Parameter& w, const Parameter* b) {
  const std::int64_t in = w.value.dim(0);
  const std::int64_t out = w.value.dim(1);
  check_dim(x.shape.back() == in, "linear_eval input width");
  const std::int64_t m = x.numel() / in;
  std::vector<std::int64_t> out_shape = x.shape;
  out_shape.back() = out;
  Tensor y(out_shape);
  kern::matmul(x.data(), w.value.data(), y.data(), m, in, out, false, false, false);
  if (b) {
    float* yd = y.data();
    const float* bd = b->value.data();
#pragma omp parallel for schedule(static)
    for (std::int64_t r = 0; r < m; ++r)
      for (std::int64_t j = 0; j < out; ++j) yd[r * out + j] += bd[j];
  }
  return y;
}

Tensor lif_eval(const Tensor& x, std::int64_t t_steps, const NeuronConfig& nc) {
  const std::int64_t q = x.numel() / t_steps;
  Tensor u(x.shape);
  Tensor s(x.shape);
  kern::lif_forward(x.data(), u.data(), s.data(), t_steps, q, nc.threshold, nc.decay,
                    nc.reset == ResetMode::hard_zero);
  return s;
}

// x [T,B,N,D] scaled in place per token by mask [B,N]. Empty mask means
// all-ones (gather execution carries no mask).
Tensor mask_apply(Tensor x, const Tensor& mask) {
  if (mask.numel() == 0) return x;
  const std::int64_t t = x.dim(0), bsz = x.dim(1), n = x.dim(2), d = x.dim(3);
#pragma omp parallel for schedule(static) collapse(2)
  for (std::int64_t ti = 0; ti < t; ++ti)
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t nn = 0; nn < n; ++nn) {
        const float mm = mask.v[b * n + nn];
        const std::int64_t base = ((ti * bsz + b) * n + nn) * d;
        for (std::int64_t j = 0; j < d; ++j) x.v[base + j] *= mm;
      }
  return x;
}

Tensor or_join(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "or_join");
  Tensor y(a.shape);
  const std::int64_t n = y.numel();
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i)
    y.v[i] = a.v[i] + b.v[i] - a.v[i] * b.v[i];
  return y;
}

// Builds the time-major image stack [T*B, C, H, W] from [B,C,H,W] (repeated
// frames) or [B,T,C,H,W] (per-timestep frames).
Tensor time_major_images(const Tensor& images, std::int64_t t_steps,
                         std::int64_t channels, std::int64_t hw) {
  const std::int64_t frame = channels * hw * hw;
  if (images.rank() == 4) {
    check_dim(images.dim(1) == channels && images.dim(2) == hw && images.dim(3) == hw,
              "image extent vs model config");
    const std::int64_t bsz = images.dim(0);
    Tensor out({t_steps * bsz, channels, hw, hw});
    for (std::int64_t t = 0; t < t_steps; ++t)
      std::copy(images.v.begin(), images.v.end(),
                out.v.begin() + static_cast<std::size_t>(t * bsz * frame));
    return out;
  }
  check_dim(images.rank() == 5, "images must be [B,C,H,W] or [B,T,C,H,W]");
  check_dim(images.dim(1) == t_steps, "frame count vs model timesteps");
  check_dim(images.dim(2) == channels && images.dim(3) == hw && images.dim(4) == hw,
            "image extent vs model config");
  const std::int64_t bsz = images.dim(0);
  return permute_copy(images, {bsz, t_steps, channels, hw, hw}, {1, 0, 2, 3, 4})
      .reshaped({t_steps * bsz, channels, hw, hw});
}

float gumbel_draw(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  double u = uni(rng);
  // Guard the open interval; log(0) would poison the sample.
  while (u <= 0.0) u = uni(rng);
  return static_cast<float>(-std::log(-std::log(u)));
}

}  // namespace

std::int64_t ModelConfig::grid() const {
  std::int64_t g = image_hw;
  for (const auto& st : sps_stages) {
    check_config(st.stride == 1 || st.stride == 2, "SPS stride must be 1 or 2");
    check_config(g % st.stride == 0, "SPS stride does not divide resolution");
    g /= st.stride;
    if (st.pool) {
      check_config(g % 2 == 0, "SPS pool on odd resolution");
      g /= 2;
    }
  }
  return g;
}

void ModelConfig::validate() const {
  check_config(timesteps >= 1, "timesteps must be >= 1");
  check_config(depth >= 1, "depth must be >= 1");
  check_config(embed_dim >= 1 && heads >= 1, "embed_dim and heads must be positive");
  check_config(embed_dim % heads == 0, "embed_dim must be divisible by heads");
  check_config(mlp_ratio > 0.0, "mlp_ratio must be positive");
  check_config(image_hw >= 1 && image_channels >= 1, "invalid image extent");
  check_config(num_classes >= 2, "need at least two classes");
  check_config(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");
  check_config(!sps_stages.empty(), "at least one SPS stage required");
  check_config(sps_stages.back().out_channels == embed_dim,
               "last SPS stage must emit embed_dim channels");
  for (const auto& st : sps_stages)
    check_config(st.out_channels >= 1, "SPS stage channels must be positive");
  std::set<int> seen;
  for (int l : selector_layers) {
    check_config(l >= 1 && l <= static_cast<int>(depth),
                 "selector layer outside 1..depth");
    check_config(seen.insert(l).second, "duplicate selector layer");
  }
  check_config(attn_scale > 0.0, "attention scale must be positive");
  check_config(grid() >= 1, "SPS stages exhaust the image resolution");
  neuron.surrogate.validate();
  check_config(neuron.threshold > 0.0f, "LIF threshold must be positive");
  check_config(neuron.decay > 0.0f && neuron.decay <= 1.0f, "LIF decay in (0, 1]");
}

Model::Model(ModelConfig cfg) : cfg_(std::move(cfg)) {
  cfg_.validate();
  for (const auto& st : cfg_.sps_stages)
    check_config(!st.pool, "pooling SPS stages are cost-model-only");
  check_config(!cfg_.pos_conv, "pos_conv is cost-model-only");

  std::int64_t in_ch = cfg_.image_channels;
  for (std::size_t s = 0; s < cfg_.sps_stages.size(); ++s) {
    const auto& st = cfg_.sps_stages[s];
    const std::int64_t ckk = in_ch * 9;
    Parameter* w = add_param("sps." + std::to_string(s) + ".w", {st.out_channels, ckk},
                             true, 1.0f / std::sqrt(static_cast<float>(ckk)));
    Parameter* b =
        add_param("sps." + std::to_string(s) + ".b", {st.out_channels}, false, 0.0f);
    sps_.push_back({w, b});
    in_ch = st.out_channels;
  }

  const std::int64_t d = cfg_.embed_dim;
  const float lb = 1.0f / std::sqrt(static_cast<float>(d));
  const std::int64_t hidden = cfg_.mlp_hidden();
  const float hb = 1.0f / std::sqrt(static_cast<float>(hidden));
  for (std::int64_t l = 1; l <= cfg_.depth; ++l) {
    const std::string p = "block." + std::to_string(l) + ".";
    BlockParams bp{};
    bp.wq = add_param(p + "attn.wq", {d, d}, true, lb);
    bp.bq = add_param(p + "attn.bq", {d}, false, 0.0f);
    bp.wk = add_param(p + "attn.wk", {d, d}, true, lb);
    bp.bk = add_param(p + "attn.bk", {d}, false, 0.0f);
    bp.wv = add_param(p + "attn.wv", {d, d}, true, lb);
    bp.bv = add_param(p + "attn.bv", {d}, false, 0.0f);
    bp.wo = add_param(p + "attn.wo", {d, d}, true, lb);
    bp.bo = add_param(p + "attn.bo", {d}, false, 0.0f);
    bp.mlp_w1 = add_param(p + "mlp.w1", {d, hidden}, true, lb);
    bp.mlp_b1 = add_param(p + "mlp.b1", {hidden}, false, 0.0f);
    bp.mlp_w2 = add_param(p + "mlp.w2", {hidden, d}, true, hb);
    bp.mlp_b2 = add_param(p + "mlp.b2", {d}, false, 0.0f);
    blocks_.push_back(bp);
  }

  const std::int64_t sh = cfg_.scorer_hidden();
  const float shb = 1.0f / std::sqrt(static_cast<float>(sh));
  for (std::size_t a = 0; a < cfg_.selector_layers.size(); ++a) {
    const std::string p = "selector." + std::to_string(a) + ".";
    ScorerParams sp{};
    sp.w1 = add_param(p + "w1", {d, sh}, false, lb);
    sp.b1 = add_param(p + "b1", {sh}, false, 0.0f);
    sp.w2 = add_param(p + "w2", {sh, 2}, false, shb);
    sp.b2 = add_param(p + "b2", {2}, false, 0.0f);
    scorers_.push_back(sp);
  }

  head_w_ = add_param("head.w", {d, cfg_.num_classes}, true, lb);
  head_b_ = add_param("head.b", {cfg_.num_classes}, false, 0.0f);
}

Parameter* Model::add_param(const std::string& name, std::vector<std::int64_t> shape,
                            bool prunable, float init_bound) {
  auto p = std::make_unique<Parameter>();
  p->name = name;
  p->value = Tensor::zeros(shape);
  p->prunable = prunable;
  p->init.uniform_bound = init_bound;
  if (prunable) p->mask = Tensor::full(shape, 1.0f);
  params_.push_back(std::move(p));
  return params_.back().get();
}

void Model::init_params(std::mt19937_64& rng) {
  for (auto& p : params_) {
    const float b = p->init.uniform_bound;
    if (b == 0.0f) {
      std::fill(p->value.v.begin(), p->value.v.end(), 0.0f);
    } else {
      std::uniform_real_distribution<float> dist(-b, b);
      for (auto& x : p->value.v) x = dist(rng);
    }
    if (p->prunable) std::fill(p->mask.v.begin(), p->mask.v.end(), 1.0f);
  }
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  out.reserve(params_.size());
  for (auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<const Parameter*> Model::parameters() const {
  std::vector<const Parameter*> out;
  out.reserve(params_.size());
  for (const auto& p : params_) out.push_back(p.get());
  return out;
}

std::vector<Parameter*> Model::prunable_parameters() {
  std::vector<Parameter*> out;
  for (auto& p : params_)
    if (p->prunable) out.push_back(p.get());
  return out;
}

Parameter* Model::find_parameter(const std::string& name) {
  for (auto& p : params_)
    if (p->name == name) return p.get();
  return nullptr;
}

ScorerView Model::scorer(std::size_t app_index) {
  check_config(app_index < scorers_.size(), "selector application index out of range");
  const auto& sp = scorers_[app_index];
  return ScorerView{sp.w1, sp.b1, sp.w2, sp.b2};
}

Tensor Model::sps_eval(const Tensor& images) const {
  const std::int64_t t = cfg_.timesteps;
  Tensor x = time_major_images(images, t, cfg_.image_channels, cfg_.image_hw);
  const std::int64_t bsz = x.dim(0) / t;
  std::int64_t res = cfg_.image_hw;
  for (std::size_t s = 0; s < sps_.size(); ++s) {
    const auto& st = cfg_.sps_stages[s];
    const std::int64_t in_ch = x.dim(1);
    const std::int64_t out_res = res / st.stride;
    const std::int64_t p = out_res * out_res;
    const std::int64_t ckk = in_ch * 9;
    Tensor col({x.dim(0), ckk, p});
    kern::im2col(x.data(), col.data(), x.dim(0), in_ch, res, res, 3, st.stride, 1);
    Tensor y({x.dim(0), st.out_channels, out_res, out_res});
    kern::bmm_broadcast_a(sps_[s].first->value.data(), col.data(), y.data(), x.dim(0),
                          st.out_channels, ckk, p, false, false);
    {
      float* yd = y.data();
      const float* bd = sps_[s].second->value.data();
#pragma omp parallel for schedule(static) collapse(2)
      for (std::int64_t img = 0; img < y.dim(0); ++img)
        for (std::int64_t ch = 0; ch < st.out_channels; ++ch) {
          float* row = yd + (img * st.out_channels + ch) * p;
          for (std::int64_t j = 0; j < p; ++j) row[j] += bd[ch];
        }
    }
    x = lif_eval(y, t, cfg_.neuron);
    res = out_res;
  }
  const std::int64_t n = res * res;
  return permute_copy(x, {t, bsz, cfg_.embed_dim, n}, {0, 1, 3, 2});
}

Tensor Model::ssa_branch_eval(int layer, const Tensor& x, const Tensor& mask) const {
  const auto& bp = blocks_[static_cast<std::size_t>(layer - 1)];
  const std::int64_t t = x.dim(0), bsz = x.dim(1), n = x.dim(2), d = x.dim(3);
  const std::int64_t h = cfg_.heads, dh = cfg_.head_dim();
  const NeuronConfig& nc = cfg_.neuron;

  auto proj_spikes = [&](const Parameter* w, const Parameter* b) {
    Tensor y = linear_eval(x, *w, b);
    return mask_apply(lif_eval(y, t, nc), mask);
  };
  Tensor qs = proj_spikes(bp.wq, bp.bq);
  Tensor ks = proj_spikes(bp.wk, bp.bk);
  Tensor vs = proj_spikes(bp.wv, bp.bv);

  const std::vector<std::int64_t> split{t, bsz, n, h, dh};
  const std::vector<int> to_heads{0, 1, 3, 2, 4};
  Tensor qh = permute_copy(qs, split, to_heads);
  Tensor kh = permute_copy(ks, split, to_heads);
  Tensor vh = permute_copy(vs, split, to_heads);
  const std::int64_t g = t * bsz * h;
  Tensor attn({g, n, n});
  kern::bmm(qh.data(), kh.data(), attn.data(), g, n, dh, n, false, true, false);
  Tensor av({g, n, dh});
  kern::bmm(attn.data(), vh.data(), av.data(), g, n, n, dh, false, false, false);
  const float sc = static_cast<float>(cfg_.attn_scale / std::sqrt(static_cast<double>(dh)));
  kern::vscale(av.data(), sc, av.data(), av.numel());
  Tensor merged = permute_copy(av, {t, bsz, h, n, dh}, {0, 1, 3, 2, 4})
                      .reshaped({t, bsz, n, d});
  return mask_apply(lif_eval(linear_eval(merged, *bp.wo, bp.bo), t, nc), mask);
}

Tensor Model::mlp_branch_eval(int layer, const Tensor& x, const Tensor& mask) const {
  const auto& bp = blocks_[static_cast<std::size_t>(layer - 1)];
  const std::int64_t t = x.dim(0);
  const NeuronConfig& nc = cfg_.neuron;
  Tensor m1 = lif_eval(linear_eval(x, *bp.mlp_w1, bp.mlp_b1), t, nc);
  return mask_apply(lif_eval(linear_eval(m1, *bp.mlp_w2, bp.mlp_b2), t, nc), mask);
}

Tensor Model::block_eval(int layer, const Tensor& x, const Tensor& mask) const {
  Tensor x2 = or_join(x, ssa_branch_eval(layer, x, mask));
  return or_join(x2, mlp_branch_eval(layer, x2, mask));
}

Tensor Model::scorer_eval(std::size_t app, const Tensor& x) const {
  const auto& sp = scorers_[app];
  const std::int64_t t = x.dim(0), bsz = x.dim(1), n = x.dim(2), d = x.dim(3);
  Tensor gap({bsz, n, d});
  kern::axis0_mean(x.data(), gap.data(), t, bsz * n * d);
  Tensor h = linear_eval(gap, *sp.w1, sp.b1);
  kern::vrelu(h.data(), h.data(), h.numel());
  Tensor logits = linear_eval(h, *sp.w2, sp.b2);
  Tensor probs({bsz, n});
  for (std::int64_t r = 0; r < bsz * n; ++r) {
    const float l0 = logits.v[2 * r];
    const float l1 = logits.v[2 * r + 1];
    const float mx = std::max(l0, l1);
    const float e0 = std::exp(l0 - mx);
    const float e1 = std::exp(l1 - mx);
    probs.v[r] = e0 / (e0 + e1);
  }
  return probs;
}

EvalResult Model::forward_eval(const Tensor& images, const EvalOptions& opts) const {
  const double rho = opts.rho_override > 0.0 ? opts.rho_override : cfg_.rho;
  check_config(rho > 0.0 && rho <= 1.0, "rho must be in (0, 1]");
  if (opts.capture_count > 0)
    check_config(opts.exec == ExecMode::masked, "capture requires masked execution");

  EvalResult res;
  Tensor x = sps_eval(images);
  const std::int64_t t = x.dim(0), bsz = x.dim(1), n_full = x.dim(2), d = x.dim(3);

  std::mt19937_64 random_sel_rng(opts.random_selector_seed);

  auto capture = [&](int layer_id, const Tensor& at) {
    if (opts.capture_count <= 0 || layer_id != opts.capture_layer) return;
    const std::int64_t count = std::min<std::int64_t>(opts.capture_count, bsz);
    for (std::int64_t b = 0; b < count; ++b) {
      SpikeTensor st(t, n_full, d);
      for (std::int64_t ti = 0; ti < t; ++ti)
        for (std::int64_t nn = 0; nn < n_full; ++nn)
          for (std::int64_t j = 0; j < d; ++j)
            st.at(ti, nn, j) = at.v[((ti * bsz + b) * n_full + nn) * d + j];
      res.captured.push_back(std::move(st));
    }
  };
  capture(0, x);

  const bool gather = opts.exec == ExecMode::gather;
  // Original token index per compact slot, per sample (gather mode).
  std::vector<std::vector<std::int64_t>> orig(static_cast<std::size_t>(bsz));
  for (auto& o : orig) {
    o.resize(static_cast<std::size_t>(n_full));
    for (std::int64_t i = 0; i < n_full; ++i) o[static_cast<std::size_t>(i)] = i;
  }

  Tensor cum_mask = Tensor::full({bsz, n_full}, 1.0f);  // original token space
  Tensor run_mask;  // mask in the running (possibly compacted) space; empty in gather
  if (!gather) run_mask = Tensor::full({bsz, n_full}, 1.0f);

  std::size_t app = 0;
  for (int l = 1; l <= static_cast<int>(cfg_.depth); ++l) {
    x = block_eval(l, x, run_mask);
    capture(l, x);
    const bool selector_here =
        opts.selector_enabled &&
        std::find(cfg_.selector_layers.begin(), cfg_.selector_layers.end(), l) !=
            cfg_.selector_layers.end();
    if (!selector_here) continue;

    const std::int64_t n_cur = x.dim(2);
    Tensor probs = scorer_eval(app, x);  // [B, n_cur]
    Tensor new_mask({bsz, n_cur});
    for (std::int64_t b = 0; b < bsz; ++b) {
      std::vector<float> m;
      if (opts.random_selector) {
        // Uniform-random keep of the same count among alive slots.
        std::vector<std::int64_t> alive_idx;
        for (std::int64_t i = 0; i < n_cur; ++i)
          if (gather || run_mask.v[b * n_cur + i] != 0.0f) alive_idx.push_back(i);
        const std::int64_t k = kept_count(rho, static_cast<std::int64_t>(alive_idx.size()));
        for (std::size_t j = alive_idx.size(); j > 1; --j) {
          std::uniform_int_distribution<std::size_t> pick(0, j - 1);
          std::swap(alive_idx[pick(random_sel_rng)], alive_idx[j - 1]);
        }
        m.assign(static_cast<std::size_t>(n_cur), 0.0f);
        for (std::int64_t j = 0; j < k; ++j)
          m[static_cast<std::size_t>(alive_idx[static_cast<std::size_t>(j)])] = 1.0f;
      } else {
        m = topk_keep_mask(probs.data() + b * n_cur,
                           gather ? nullptr : run_mask.data() + b * n_cur, n_cur, rho);
      }
      std::copy(m.begin(), m.end(), new_mask.v.begin() + b * n_cur);
    }

    // Record scores and the composed decision in original token space.
    Tensor probs_full = Tensor::zeros({bsz, n_full});
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t i = 0; i < n_cur; ++i)
        probs_full.v[b * n_full + orig[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]] =
            probs.v[b * n_cur + i];
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t i = 0; i < n_cur; ++i) {
        const std::int64_t oi = orig[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)];
        cum_mask.v[b * n_full + oi] *= new_mask.v[b * n_cur + i];
      }
    res.keep_scores.push_back(std::move(probs_full));
    res.cum_masks.push_back(cum_mask);

    if (gather) {
      // Every sample keeps the same count, so the batch stays rectangular.
      std::int64_t n_next = 0;
      for (std::int64_t i = 0; i < n_cur; ++i)
        n_next += new_mask.v[i] != 0.0f ? 1 : 0;
      Tensor xc({t, bsz, n_next, d});
      std::vector<std::vector<std::int64_t>> norig(static_cast<std::size_t>(bsz));
      for (std::int64_t b = 0; b < bsz; ++b) {
        std::int64_t slot = 0;
        for (std::int64_t i = 0; i < n_cur; ++i) {
          if (new_mask.v[b * n_cur + i] == 0.0f) continue;
          check_dim(slot < n_next, "ragged kept counts across the batch");
          norig[static_cast<std::size_t>(b)].push_back(
              orig[static_cast<std::size_t>(b)][static_cast<std::size_t>(i)]);
          for (std::int64_t ti = 0; ti < t; ++ti) {
            const float* src = x.data() + ((ti * bsz + b) * n_cur + i) * d;
            float* dst = xc.data() + ((ti * bsz + b) * n_next + slot) * d;
            std::copy(src, src + d, dst);
          }
          ++slot;
        }
        check_dim(slot == n_next, "ragged kept counts across the batch");
      }
      x = std::move(xc);
      orig = std::move(norig);
    } else {
      for (std::int64_t i = 0; i < bsz * n_full; ++i) run_mask.v[i] *= new_mask.v[i];
    }
    ++app;
  }

  // Head: average over kept tokens per timestep, then over time.
  const std::int64_t n_cur = x.dim(2);
  Tensor pooled({bsz, d});
  for (std::int64_t b = 0; b < bsz; ++b) {
    std::int64_t cnt = 0;
    if (gather) {
      cnt = n_cur;
    } else {
      for (std::int64_t i = 0; i < n_full; ++i)
        cnt += run_mask.v[b * n_full + i] != 0.0f ? 1 : 0;
    }
    check_dim(cnt > 0, "empty token set at classification head");
    std::vector<double> acc_time(static_cast<std::size_t>(d), 0.0);
    std::vector<float> tok(static_cast<std::size_t>(d));
    for (std::int64_t ti = 0; ti < t; ++ti) {
      std::fill(tok.begin(), tok.end(), 0.0f);
      for (std::int64_t i = 0; i < n_cur; ++i) {
        if (!gather && run_mask.v[b * n_full + i] == 0.0f) continue;
        const float* src = x.data() + ((ti * bsz + b) * n_cur + i) * d;
        for (std::int64_t j = 0; j < d; ++j) tok[static_cast<std::size_t>(j)] += src[j];
      }
      for (std::int64_t j = 0; j < d; ++j)
        acc_time[static_cast<std::size_t>(j)] +=
            static_cast<double>(tok[static_cast<std::size_t>(j)] / static_cast<float>(cnt)) /
            static_cast<double>(t);
    }
    for (std::int64_t j = 0; j < d; ++j)
      pooled.v[b * d + j] = static_cast<float>(acc_time[static_cast<std::size_t>(j)]);
  }
  res.logits = linear_eval(pooled, *head_w_, head_b_);
  res.final_mask = gather ? cum_mask : run_mask;
  return res;
}

Tape::Val Model::block_train(Tape& tape, int layer, Tape::Val x, const Tape::Val* mask,
                             std::int64_t t, std::int64_t bsz, std::int64_t n,
                             std::int64_t d) const {
  const auto& bp = blocks_[static_cast<std::size_t>(layer - 1)];
  const std::int64_t h = cfg_.heads, dh = cfg_.head_dim();
  const LifSpec ls = cfg_.neuron.lif_spec();

  auto proj = [&](Parameter* w, Parameter* b) {
    Tape::Val y = tape.lif(tape.linear(x, *w, b), t, ls);
    return mask ? tape.mask_mul(y, *mask) : y;
  };
  Tape::Val qs = proj(bp.wq, bp.bq);
  Tape::Val ks = proj(bp.wk, bp.bk);
  Tape::Val vs = proj(bp.wv, bp.bv);

  const std::vector<std::int64_t> split{t, bsz, n, h, dh};
  const std::vector<int> to_heads{0, 1, 3, 2, 4};
  Tape::Val qh = tape.permute(qs, split, to_heads);
  Tape::Val kh = tape.permute(ks, split, to_heads);
  Tape::Val vh = tape.permute(vs, split, to_heads);
  const std::int64_t g = t * bsz * h;
  Tape::Val attn = tape.bmm(qh, kh, g, n, dh, n, true, {t, bsz, h, n, n});
  Tape::Val av = tape.bmm(attn, vh, g, n, n, dh, false, {t, bsz, h, n, dh});
  const float sc = static_cast<float>(cfg_.attn_scale / std::sqrt(static_cast<double>(dh)));
  Tape::Val merged =
      tape.permute(tape.scale(av, sc), {t, bsz, h, n, dh}, {0, 1, 3, 2, 4}, {t, bsz, n, d});

  Tape::Val o = tape.lif(tape.linear(merged, *bp.wo, bp.bo), t, ls);
  if (mask) o = tape.mask_mul(o, *mask);
  Tape::Val x2 = tape.spike_or(x, o);

  Tape::Val m1 = tape.lif(tape.linear(x2, *bp.mlp_w1, bp.mlp_b1), t, ls);
  Tape::Val m2 = tape.lif(tape.linear(m1, *bp.mlp_w2, bp.mlp_b2), t, ls);
  if (mask) m2 = tape.mask_mul(m2, *mask);
  return tape.spike_or(x2, m2);
}

TrainForward Model::forward_train(Tape& tape, const Tensor& images,
                                  const std::vector<int>& labels,
                                  const TrainSelectorOptions& sel,
                                  std::mt19937_64& rng) const {
  const std::int64_t t = cfg_.timesteps;
  const std::int64_t d = cfg_.embed_dim;
  const std::int64_t n = cfg_.tokens();
  Tensor stack = time_major_images(images, t, cfg_.image_channels, cfg_.image_hw);
  const std::int64_t bsz = stack.dim(0) / t;
  check_dim(static_cast<std::int64_t>(labels.size()) == bsz, "labels vs batch size");
  if (sel.enabled) check_config(sel.rho > 0.0 && sel.rho <= 1.0, "rho must be in (0, 1]");
  check_config(sel.gumbel_temperature > 0.0, "gumbel temperature must be positive");

  const LifSpec ls = cfg_.neuron.lif_spec();
  Tape::Val x = tape.input(std::move(stack));
  std::int64_t res = cfg_.image_hw;
  for (std::size_t s = 0; s < sps_.size(); ++s) {
    const auto& st = cfg_.sps_stages[s];
    x = tape.conv2d(x, *sps_[s].first, sps_[s].second, st.stride, 1);
    x = tape.lif(x, t, ls);
    res /= st.stride;
  }
  x = tape.permute(x, {t, bsz, d, n}, {0, 1, 3, 2});

  TrainForward out;
  Tape::Val cur_mask{};
  bool has_mask = false;
  Tensor cum_hard;
  Tape::Val cum_soft{};
  std::vector<Tape::Val> reg_terms;
  std::size_t app = 0;

  for (int l = 1; l <= static_cast<int>(cfg_.depth); ++l) {
    x = block_train(tape, l, x, has_mask ? &cur_mask : nullptr, t, bsz, n, d);
    const bool selector_here =
        sel.enabled &&
        std::find(cfg_.selector_layers.begin(), cfg_.selector_layers.end(), l) !=
            cfg_.selector_layers.end();
    if (!selector_here) continue;

    const auto& sp = scorers_[app];
    Tape::Val gap = tape.mean_axis0(x);  // [B, N, D]
    Tape::Val h1 = tape.relu(tape.linear(gap, *sp.w1, sp.b1));
    Tape::Val lg = tape.linear(h1, *sp.w2, sp.b2);  // [B, N, 2]

    Tensor noise({bsz, n, 2});
    for (std::int64_t b = 0; b < bsz; ++b)
      for (std::int64_t nn = 0; nn < n; ++nn) {
        noise.v[(b * n + nn) * 2] = gumbel_draw(rng);
        noise.v[(b * n + nn) * 2 + 1] = gumbel_draw(rng);
      }
    Tape::Val z = tape.add(lg, tape.input(std::move(noise)));
    const Tensor& zv = tape.value(z);

    Tensor hard_new({bsz, n});
    for (std::int64_t i = 0; i < bsz * n; ++i)
      hard_new.v[i] = zv.v[2 * i] >= zv.v[2 * i + 1] ? 1.0f : 0.0f;
    if (sel.random_selector) {
      // Uniform-random keep of ceil(rho * alive) tokens per sample.
      for (std::int64_t b = 0; b < bsz; ++b) {
        std::vector<std::int64_t> alive_idx;
        for (std::int64_t i = 0; i < n; ++i)
          if (!has_mask || cum_hard.v[b * n + i] != 0.0f) alive_idx.push_back(i);
        const std::int64_t k =
            kept_count(sel.rho, static_cast<std::int64_t>(alive_idx.size()));
        for (std::size_t j = alive_idx.size(); j > 1; --j) {
          std::uniform_int_distribution<std::size_t> pick(0, j - 1);
          std::swap(alive_idx[pick(rng)], alive_idx[j - 1]);
        }
        for (std::int64_t i = 0; i < n; ++i) hard_new.v[b * n + i] = 0.0f;
        for (std::int64_t j = 0; j < k; ++j)
          hard_new.v[b * n + alive_idx[static_cast<std::size_t>(j)]] = 1.0f;
      }
    }

    // Compose with the running decision; a dropped token never returns.
    Tensor prev_hard = cum_hard;
    if (app == 0) {
      cum_hard = hard_new;
    } else {
      for (std::int64_t i = 0; i < bsz * n; ++i) cum_hard.v[i] *= hard_new.v[i];
    }
    // Keep at least one token per image, revived only from the set that was
    // still alive before this stage so the decision stays monotone.
    for (std::int64_t b = 0; b < bsz; ++b) {
      bool any = false;
      for (std::int64_t i = 0; i < n; ++i)
        if (cum_hard.v[b * n + i] != 0.0f) {
          any = true;
          break;
        }
      if (any) continue;
      std::int64_t best = -1;
      float best_z = -1e30f;
      for (std::int64_t i = 0; i < n; ++i) {
        if (app > 0 && prev_hard.v[b * n + i] == 0.0f) continue;
        const float zi = zv.v[2 * (b * n + i)];
        if (zi > best_z) {
          best_z = zi;
          best = i;
        }
      }
      cum_hard.v[b * n + best] = 1.0f;
    }

    if (sel.random_selector) {
      // Ablation path: the mask is a constant, no gradient to the scorer.
      cur_mask = tape.input(cum_hard);
    } else {
      Tape::Val soft_full =
          tape.softmax_lastdim(tape.scale(z, 1.0f / static_cast<float>(sel.gumbel_temperature)));
      Tape::Val soft_keep = tape.slice_lastdim(soft_full, 0);  // [B, N]
      cum_soft = app == 0 ? soft_keep : tape.mul(cum_soft, soft_keep);
      cur_mask = tape.straight_through(cum_hard, cum_soft);
      if (sel.keep_reg_weight > 0.0) {
        const float target = static_cast<float>(std::pow(sel.rho, static_cast<double>(app + 1)));
        Tape::Val m = tape.mean_all(cum_soft);
        Tape::Val r = tape.add_const(m, -target);
        reg_terms.push_back(tape.scale(tape.mul(r, r), static_cast<float>(sel.keep_reg_weight)));
      }
      float acc = 0.0f;
      const Tensor& cs = tape.value(cum_soft);
      for (float vsoft : cs.v) acc += vsoft;
      out.mean_soft.push_back(acc / static_cast<float>(bsz * n));
    }
    has_mask = true;
    out.hard_masks.push_back(cum_hard);
    ++app;
  }

  Tape::Val xm = has_mask ? tape.mask_mul(x, cur_mask) : x;
  Tape::Val sums = tape.sum_time_tokens(xm);
  std::vector<float> factors(static_cast<std::size_t>(bsz));
  for (std::int64_t b = 0; b < bsz; ++b) {
    std::int64_t cnt = n;
    if (has_mask) {
      cnt = 0;
      for (std::int64_t i = 0; i < n; ++i)
        cnt += cum_hard.v[b * n + i] != 0.0f ? 1 : 0;
    }
    factors[static_cast<std::size_t>(b)] =
        1.0f / (static_cast<float>(t) * static_cast<float>(cnt));
  }
  Tape::Val pooled = tape.per_sample_scale(sums, factors);
  Tape::Val logits = tape.linear(pooled, *head_w_, head_b_);
  Tape::Val ce = tape.cross_entropy(logits, labels);
  Tape::Val loss = ce;
  for (Tape::Val term : reg_terms) loss = tape.add(loss, term);

  tape.keep(logits);
  tape.keep(ce);
  tape.keep(loss);
  out.loss = loss;
  out.ce_loss = ce;
  out.logits = logits;
  return out;
}

SpikeTensor Model::sps_forward(const Tensor& image) const {
  Tensor batched;
  if (image.rank() == 3) {
    batched = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2)});
  } else if (image.rank() == 4) {
    batched = image.reshaped({1, image.dim(0), image.dim(1), image.dim(2), image.dim(3)});
  } else {
    throw DimensionError("sps_forward expects [C,H,W] or [T,C,H,W]");
  }
  Tensor x = sps_eval(batched);  // [T, 1, N, D]
  return SpikeTensor::from_tensor(
      x.reshaped({cfg_.timesteps, cfg_.tokens(), cfg_.embed_dim}));
}

namespace {

Tensor keep_to_mask(const std::vector<float>& keep, std::int64_t n) {
  if (keep.empty()) return Tensor{};
  check_dim(static_cast<std::int64_t>(keep.size()) == n,
            "keep mask length vs token count");
  Tensor m({1, n});
  for (std::int64_t i = 0; i < n; ++i) {
    check_dim(keep[static_cast<std::size_t>(i)] == 0.0f ||
                  keep[static_cast<std::size_t>(i)] == 1.0f,
              "keep mask must be binary");
    m.v[i] = keep[static_cast<std::size_t>(i)];
  }
  return m;
}

}  // namespace

SpikeTensor Model::ssa_forward(int layer, const SpikeTensor& x,
                               const std::vector<float>& keep) const {
  check_config(layer >= 1 && layer <= static_cast<int>(cfg_.depth),
               "layer outside 1..depth");
  check_dim(x.channels == cfg_.embed_dim, "spike channels vs embed_dim");
  const Tensor flat = x.as_tensor().reshaped({x.timesteps, 1, x.tokens, x.channels});
  Tensor out = ssa_branch_eval(layer, flat, keep_to_mask(keep, x.tokens));
  return SpikeTensor::from_tensor(out.reshaped({x.timesteps, x.tokens, x.channels}));
}

SpikeTensor Model::mlp_forward(int layer, const SpikeTensor& x,
                               const std::vector<float>& keep) const {
  check_config(layer >= 1 && layer <= static_cast<int>(cfg_.depth),
               "layer outside 1..depth");
  check_dim(x.channels == cfg_.embed_dim, "spike channels vs embed_dim");
  const Tensor flat = x.as_tensor().reshaped({x.timesteps, 1, x.tokens, x.channels});
  Tensor out = or_join(flat, mlp_branch_eval(layer, flat, keep_to_mask(keep, x.tokens)));
  return SpikeTensor::from_tensor(out.reshaped({x.timesteps, x.tokens, x.channels}));
}

std::pair<SpikeTensor, TokenDecision> Model::encoder_block_forward(
    int layer, const SpikeTensor& x, const TokenDecision& keep) const {
  check_config(layer >= 1 && layer <= static_cast<int>(cfg_.depth),
               "layer outside 1..depth");
  check_dim(keep.tokens() == x.tokens, "decision length vs token count");
  const Tensor flat = x.as_tensor().reshaped({x.timesteps, 1, x.tokens, x.channels});
  const Tensor mask = keep_to_mask(keep.hard, x.tokens);
  Tensor x2 = or_join(flat, ssa_branch_eval(layer, flat, mask));
  Tensor out = or_join(x2, mlp_branch_eval(layer, x2, mask));
  SpikeTensor out_spikes = SpikeTensor::from_tensor(
      out.reshaped({x.timesteps, x.tokens, x.channels}));

  TokenDecision updated = keep;
  const auto it =
      std::find(cfg_.selector_layers.begin(), cfg_.selector_layers.end(), layer);
  if (it != cfg_.selector_layers.end()) {
    const std::size_t app =
        static_cast<std::size_t>(std::distance(cfg_.selector_layers.begin(), it));
    const auto& sp = scorers_[app];
    TokenScore s = score_tokens(temporal_gap(out_spikes),
                                ScorerView{sp.w1, sp.b1, sp.w2, sp.b2});
    SelectorConfig scfg;
    scfg.rho = cfg_.rho;
    TokenDecision dec =
        sample_keep_decision(s, scfg, SelectorMode::eval, nullptr, &keep.hard);
    updated = compose_decision(keep, dec);
  }
  return {std::move(out_spikes), std::move(updated)};
}

Tensor Model::classify(const SpikeTensor& x, const std::vector<float>& keep) const {
  check_dim(x.channels == cfg_.embed_dim, "spike channels vs embed_dim");
  check_dim(static_cast<std::int64_t>(keep.size()) == x.tokens,
            "keep mask length vs token count");
  std::int64_t cnt = 0;
  for (float k : keep) cnt += k != 0.0f ? 1 : 0;
  if (cnt == 0) throw UsageError("empty token set at classification head");

  const std::int64_t d = x.channels;
  std::vector<double> acc_time(static_cast<std::size_t>(d), 0.0);
  std::vector<float> tok(static_cast<std::size_t>(d));
  for (std::int64_t ti = 0; ti < x.timesteps; ++ti) {
    std::fill(tok.begin(), tok.end(), 0.0f);
    for (std::int64_t nn = 0; nn < x.tokens; ++nn) {
      if (keep[static_cast<std::size_t>(nn)] == 0.0f) continue;
      for (std::int64_t j = 0; j < d; ++j)
        tok[static_cast<std::size_t>(j)] += x.at(ti, nn, j);
    }
    for (std::int64_t j = 0; j < d; ++j)
      acc_time[static_cast<std::size_t>(j)] +=
          static_cast<double>(tok[static_cast<std::size_t>(j)] / static_cast<float>(cnt)) /
          static_cast<double>(x.timesteps);
  }
  Tensor pooled({1, d});
  for (std::int64_t j = 0; j < d; ++j)
    pooled.v[j] = static_cast<float>(acc_time[static_cast<std::size_t>(j)]);
  Tensor logits = linear_eval(pooled, *head_w_, head_b_);
  return logits.reshaped({cfg_.num_classes});
}

Tensor Model::attention_product(const SpikeTensor& q, const SpikeTensor& k,
                                const SpikeTensor& v, std::int64_t heads, float scale) {
  check_dim(q.timesteps == k.timesteps && q.timesteps == v.timesteps,
            "attention timestep mismatch");
  check_dim(q.tokens == k.tokens && q.tokens == v.tokens, "attention token mismatch");
  check_dim(q.channels == k.channels && q.channels == v.channels,
            "attention channel mismatch");
  check_dim(q.channels % heads == 0, "channels not divisible by heads");
  const std::int64_t t = q.timesteps, n = q.tokens, d = q.channels, dh = d / heads;

  const std::vector<std::int64_t> split{t, 1, n, heads, dh};
  const std::vector<int> to_heads{0, 1, 3, 2, 4};
  Tensor qh = permute_copy(q.as_tensor().reshaped({t, 1, n, d}), split, to_heads);
  Tensor kh = permute_copy(k.as_tensor().reshaped({t, 1, n, d}), split, to_heads);
  Tensor vh = permute_copy(v.as_tensor().reshaped({t, 1, n, d}), split, to_heads);
  const std::int64_t g = t * heads;
  Tensor attn({g, n, n});
  kern::bmm(qh.data(), kh.data(), attn.data(), g, n, dh, n, false, true, false);
  Tensor av({g, n, dh});
  kern::bmm(attn.data(), vh.data(), av.data(), g, n, n, dh, false, false, false);
  kern::vscale(av.data(), scale, av.data(), av.numel());
  return permute_copy(av, {t, 1, heads, n, dh}, {0, 1, 3, 2, 4}).reshaped({t, n, d});
}

}  // namespace spikeprune

