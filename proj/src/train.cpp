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

#include "spikeprune/train.hpp"

#include <algorithm>
#include <cmath>

namespace spikeprune {

namespace {

// Batch of samples as one input tensor; all samples must share the layout.
Tensor stack_images(const std::vector<Sample>& samples,
                    const std::vector<std::int64_t>& idx, std::int64_t lo,
                    std::int64_t hi) {
  const Tensor& first = samples[static_cast<std::size_t>(idx[lo])].image;
  std::vector<std::int64_t> shape;
  shape.push_back(hi - lo);
  for (auto d : first.shape) shape.push_back(d);
  Tensor out(shape);
  const std::int64_t stride = first.numel();
  for (std::int64_t i = lo; i < hi; ++i) {
    const Tensor& img = samples[static_cast<std::size_t>(idx[i])].image;
    check_dim(img.shape == first.shape, "ragged sample shapes in one batch");
    std::copy(img.v.begin(), img.v.end(), out.v.begin() + (i - lo) * stride);
  }
  return out;
}

double gumbel_temperature_at(const SelectorConfig& sel, std::int64_t step,
                             std::int64_t total_steps) {
  if (sel.temperature_schedule == TemperatureSchedule::constant || total_steps <= 1)
    return sel.gumbel_temperature;
  const double progress =
      static_cast<double>(step) / static_cast<double>(total_steps - 1);
  return 5.0 + (0.5 - 5.0) * progress;
}

}  // namespace

AdamW::AdamW(std::vector<Parameter*> params, const OptimConfig& cfg)
    : params_(std::move(params)), weight_decay_(cfg.weight_decay),
      clip_norm_(cfg.clip_norm) {
  cfg.validate();
  for (Parameter* p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape));
    v_.push_back(Tensor::zeros(p->value.shape));
  }
}

void AdamW::step(double lr_now) {
  ++t_;
  // Gradients to pruned weights are zeroed before the update.
  for (Parameter* p : params_) {
    p->ensure_grad();
    if (!p->prunable) continue;
    for (std::int64_t i = 0; i < p->numel(); ++i)
      if (p->mask.v[i] == 0.0f) p->grad.v[i] = 0.0f;
  }
  if (clip_norm_ > 0.0) {
    double sq = 0.0;
    for (Parameter* p : params_)
      for (float g : p->grad.v) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > clip_norm_) {
      const float scale = static_cast<float>(clip_norm_ / norm);
      for (Parameter* p : params_)
        for (auto& g : p->grad.v) g *= scale;
    }
  }
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t pi = 0; pi < params_.size(); ++pi) {
    Parameter* p = params_[pi];
    const bool decay_this = p->value.rank() >= 2;  // no decay on biases
    float* w = p->value.data();
    const float* g = p->grad.data();
    float* m = m_[pi].data();
    float* v = v_[pi].data();
    const std::int64_t n = p->numel();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
      m[i] = static_cast<float>(beta1_ * m[i] + (1.0 - beta1_) * g[i]);
      v[i] = static_cast<float>(beta2_ * v[i] +
                                (1.0 - beta2_) * static_cast<double>(g[i]) * g[i]);
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      double upd = lr_now * mhat / (std::sqrt(vhat) + eps_);
      if (decay_this) upd += lr_now * weight_decay_ * w[i];
      w[i] = static_cast<float>(w[i] - upd);
    }
  }
}

double evaluate_accuracy(const Model& model, const std::vector<Sample>& samples,
                         const EvalOptions& opts, int batch_size) {
  if (samples.empty()) return 0.0;
  std::int64_t correct = 0;
  const auto total = static_cast<std::int64_t>(samples.size());
  std::vector<std::int64_t> idx(static_cast<std::size_t>(total));
  for (std::int64_t i = 0; i < total; ++i) idx[static_cast<std::size_t>(i)] = i;
  for (std::int64_t lo = 0; lo < total; lo += batch_size) {
    const std::int64_t hi = std::min<std::int64_t>(total, lo + batch_size);
    Tensor images = stack_images(samples, idx, lo, hi);
    EvalResult res = model.forward_eval(images, opts);
    const std::int64_t classes = res.logits.dim(1);
    for (std::int64_t b = 0; b < hi - lo; ++b) {
      std::int64_t best = 0;
      for (std::int64_t c = 1; c < classes; ++c)
        if (res.logits.v[b * classes + c] > res.logits.v[b * classes + best]) best = c;
      correct += best == samples[static_cast<std::size_t>(lo + b)].label ? 1 : 0;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

TrainStats train_model(Model& model, const Dataset& data,
                       const TrainSettings& settings) {
  settings.optim.validate();
  settings.selector.validate();
  TrainStats stats;
  if (settings.optim.epochs == 0) return stats;

  std::mt19937_64 data_rng(settings.seed ^ 0x9E3779B97F4A7C15ULL);
  std::mt19937_64 gumbel_rng(settings.seed ^ 0xC2B2AE3D27D4EB4FULL);

  auto params = model.parameters();
  AdamW opt(params, settings.optim);

  const auto train_n = static_cast<std::int64_t>(data.train.size());
  check_config(train_n >= 1, "training split is empty");
  const std::int64_t steps_per_epoch =
      (train_n + settings.optim.batch_size - 1) / settings.optim.batch_size;
  const std::int64_t total_steps = steps_per_epoch * settings.optim.epochs;

  EvalOptions eval_opts;
  eval_opts.selector_enabled = settings.selector_enabled;
  eval_opts.random_selector = settings.random_selector;
  eval_opts.random_selector_seed = settings.seed ^ 0xA5A5A5A5ULL;
  eval_opts.rho_override = settings.selector.rho;

  std::vector<std::int64_t> idx(static_cast<std::size_t>(train_n));
  for (std::int64_t i = 0; i < train_n; ++i) idx[static_cast<std::size_t>(i)] = i;

  std::int64_t step = 0;
  for (int epoch = 0; epoch < settings.optim.epochs; ++epoch) {
    std::shuffle(idx.begin(), idx.end(), data_rng);
    double loss_sum = 0.0;
    std::int64_t loss_count = 0;
    for (std::int64_t lo = 0; lo < train_n; lo += settings.optim.batch_size) {
      const std::int64_t hi =
          std::min<std::int64_t>(train_n, lo + settings.optim.batch_size);
      Tensor images = stack_images(data.train, idx, lo, hi);
      std::vector<int> labels;
      labels.reserve(static_cast<std::size_t>(hi - lo));
      for (std::int64_t i = lo; i < hi; ++i)
        labels.push_back(data.train[static_cast<std::size_t>(idx[i])].label);

      for (Parameter* p : params) p->zero_grad();
      Tape tape;
      TrainSelectorOptions sel;
      sel.enabled = settings.selector_enabled;
      sel.rho = settings.selector.rho;
      sel.gumbel_temperature = gumbel_temperature_at(settings.selector, step, total_steps);
      sel.random_selector = settings.random_selector;
      sel.keep_reg_weight = settings.optim.keep_reg_weight;
      TrainForward tf = model.forward_train(tape, images, labels, sel, gumbel_rng);
      const double loss = static_cast<double>(tape.value(tf.loss).v[0]);
      tape.backward(tf.loss);

      if (!std::isfinite(loss)) {
        double sq = 0.0;
        for (Parameter* p : params)
          for (float g : p->grad.v) sq += static_cast<double>(g) * g;
        const double lr_now = settings.optim.lr;
        throw TrainingDiverged("loss is not finite at step " + std::to_string(step) +
                               " (lr " + std::to_string(lr_now) + ", grad norm " +
                               std::to_string(std::sqrt(sq)) + ")");
      }

      double lr_now = settings.optim.lr;
      if (settings.optim.schedule == "cosine" && total_steps > 0)
        lr_now *= 0.5 * (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                        static_cast<double>(total_steps)));
      opt.step(lr_now);
      loss_sum += loss * static_cast<double>(hi - lo);
      loss_count += hi - lo;
      ++step;
    }
    EpochLog el;
    el.epoch = epoch;
    el.train_loss = loss_sum / static_cast<double>(loss_count);
    el.eval_acc = evaluate_accuracy(model, data.eval_set, eval_opts,
                                    settings.optim.batch_size);
    stats.log.push_back(el);
    if (settings.on_epoch) settings.on_epoch(model, epoch);
  }
  stats.final_train_loss = stats.log.back().train_loss;
  stats.final_eval_acc = stats.log.back().eval_acc;
  return stats;
}

}  // namespace spikeprune
