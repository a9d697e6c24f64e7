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

#include <doctest.h>

#include <random>

#include "spikeprune/model.hpp"

using namespace spikeprune;

namespace {

ModelConfig small_config() {
  ModelConfig cfg;
  cfg.timesteps = 2;
  cfg.depth = 4;
  cfg.embed_dim = 16;
  cfg.heads = 2;
  cfg.mlp_ratio = 2.0;
  cfg.image_hw = 16;
  cfg.image_channels = 3;
  cfg.num_classes = 4;
  cfg.selector_layers = {2, 3, 4};
  cfg.rho = 0.7;
  cfg.sps_stages = {{8, 2, false}, {16, 2, false}};
  return cfg;
}

Model make_model(const ModelConfig& cfg, std::uint64_t seed) {
  Model m(cfg);
  std::mt19937_64 rng(seed);
  m.init_params(rng);
  return m;
}

SpikeTensor random_spikes(std::int64_t t, std::int64_t n, std::int64_t d,
                          std::mt19937_64& rng, double p = 0.45) {
  SpikeTensor s(t, n, d);
  std::bernoulli_distribution coin(p);
  for (auto& v : s.data) v = coin(rng) ? 1.0f : 0.0f;
  return s;
}

Tensor random_images(std::int64_t b, std::int64_t c, std::int64_t hw,
                     std::mt19937_64& rng) {
  Tensor t({b, c, hw, hw});
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : t.v) v = dist(rng);
  return t;
}

// Gather the kept tokens of x into a compact spike tensor.
SpikeTensor gather_tokens(const SpikeTensor& x, const std::vector<float>& keep) {
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < x.tokens; ++i)
    if (keep[static_cast<std::size_t>(i)] != 0.0f) idx.push_back(i);
  SpikeTensor out(x.timesteps, static_cast<std::int64_t>(idx.size()), x.channels);
  for (std::int64_t t = 0; t < x.timesteps; ++t)
    for (std::size_t j = 0; j < idx.size(); ++j)
      for (std::int64_t d = 0; d < x.channels; ++d)
        out.at(t, static_cast<std::int64_t>(j), d) = x.at(t, idx[j], d);
  return out;
}

// Scatter compact tokens back over a base tensor at the kept positions.
SpikeTensor scatter_tokens(const SpikeTensor& compact, const SpikeTensor& base,
                           const std::vector<float>& keep) {
  SpikeTensor out = base;
  std::int64_t slot = 0;
  for (std::int64_t i = 0; i < base.tokens; ++i) {
    if (keep[static_cast<std::size_t>(i)] == 0.0f) continue;
    for (std::int64_t t = 0; t < base.timesteps; ++t)
      for (std::int64_t d = 0; d < base.channels; ++d)
        out.at(t, i, d) = compact.at(t, slot, d);
    ++slot;
  }
  return out;
}

}  // namespace

TEST_CASE("config arithmetic: 32x32 with two stride-2 stages yields 64 tokens") {
  ModelConfig cfg;
  cfg.image_hw = 32;
  cfg.sps_stages = {{48, 2, false}, {96, 2, false}};
  cfg.embed_dim = 96;
  cfg.heads = 3;
  // Oracle: each stride-2 stage halves the resolution.
  std::int64_t side = 32;
  for (const auto& st : cfg.sps_stages) side /= st.stride;
  CHECK(cfg.tokens() == side * side);
  CHECK(cfg.tokens() == 64);
}

TEST_CASE("config validation rejects bad shapes") {
  ModelConfig cfg = small_config();
  cfg.heads = 3;  // 16 % 3 != 0
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.selector_layers = {5};
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.rho = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = small_config();
  cfg.sps_stages.back().pool = true;  // resolution arithmetic still fine
  cfg.validate();
  CHECK_THROWS_AS(Model{cfg}, ConfigError);  // but the runtime rejects pools
}

TEST_CASE("zero image produces zero spikes after SPS") {
  Model m = make_model(small_config(), 11);
  Tensor img = Tensor::zeros({3, 16, 16});
  SpikeTensor s = m.sps_forward(img);
  CHECK(s.tokens == 16);
  CHECK(s.channels == 16);
  for (float v : s.data) CHECK(v == 0.0f);
}

TEST_CASE("SPS output is binary on random input and matches config extents") {
  Model m = make_model(small_config(), 13);
  std::mt19937_64 rng(17);
  Tensor img({3, 16, 16});
  std::uniform_real_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : img.v) v = dist(rng);
  SpikeTensor s = m.sps_forward(img);
  CHECK(s.is_binary());
  CHECK(s.timesteps == 2);
  CHECK(s.tokens == m.config().tokens());
}

TEST_CASE("ssa with an all-ones mask equals the unmasked call") {
  Model m = make_model(small_config(), 19);
  std::mt19937_64 rng(23);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> ones(16, 1.0f);
  SpikeTensor a = m.ssa_forward(1, x, ones);
  SpikeTensor b = m.ssa_forward(1, x, {});
  CHECK(a.data == b.data);
  CHECK(a.is_binary());
}

TEST_CASE("masked ssa equals gather, compute, scatter exactly") {
  Model m = make_model(small_config(), 29);
  std::mt19937_64 rng(31);
  SpikeTensor x = random_spikes(2, 4, 16, rng);
  std::vector<float> keep{1.0f, 1.0f, 0.0f, 0.0f};

  SpikeTensor masked = m.ssa_forward(2, x, keep);
  SpikeTensor compact = m.ssa_forward(2, gather_tokens(x, keep),
                                      std::vector<float>(2, 1.0f));
  SpikeTensor zeros(2, 4, 16);
  SpikeTensor oracle = scatter_tokens(compact, zeros, keep);
  CHECK(masked.data == oracle.data);
}

TEST_CASE("all-zero input spikes give an all-zero attention product") {
  SpikeTensor z(2, 4, 16);
  Tensor prod = Model::attention_product(z, z, z, 2, 0.25f);
  for (float v : prod.v) CHECK(v == 0.0f);
}

TEST_CASE("mlp with keep all-zeros is the pure residual identity") {
  Model m = make_model(small_config(), 37);
  std::mt19937_64 rng(41);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> none(16, 0.0f);
  SpikeTensor y = m.mlp_forward(1, x, none);
  CHECK(y.data == x.data);
}

TEST_CASE("mlp with zero weights passes the input through the residual") {
  ModelConfig cfg = small_config();
  Model m(cfg);  // parameters default to zero before init
  std::mt19937_64 rng(43);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> ones(16, 1.0f);
  SpikeTensor y = m.mlp_forward(1, x, ones);
  CHECK(y.data == x.data);
}

TEST_CASE("masked mlp equals gather, compute, scatter exactly") {
  Model m = make_model(small_config(), 47);
  std::mt19937_64 rng(53);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> keep(16, 1.0f);
  std::uniform_int_distribution<int> bit(0, 1);
  for (auto& k : keep) k = static_cast<float>(bit(rng));
  keep[3] = 1.0f;  // at least one kept

  SpikeTensor masked = m.mlp_forward(3, x, keep);
  SpikeTensor compact = m.mlp_forward(
      3, gather_tokens(x, keep),
      std::vector<float>(static_cast<std::size_t>(gather_tokens(x, keep).tokens), 1.0f));
  SpikeTensor oracle = scatter_tokens(compact, x, keep);  // dropped keep x rows
  CHECK(masked.data == oracle.data);
}

TEST_CASE("encoder block leaves the decision unchanged off the selector layers") {
  Model m = make_model(small_config(), 59);
  std::mt19937_64 rng(61);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  TokenDecision keep = TokenDecision::all_ones(16);
  auto [out, updated] = m.encoder_block_forward(1, x, keep);
  CHECK(updated.hard == keep.hard);
  CHECK(out.is_binary());
}

TEST_CASE("selector layer at rho 1.0 keeps the decision unchanged") {
  ModelConfig cfg = small_config();
  cfg.rho = 1.0;
  Model m = make_model(cfg, 67);
  std::mt19937_64 rng(71);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  TokenDecision keep = TokenDecision::all_ones(16);
  auto [out, updated] = m.encoder_block_forward(2, x, keep);
  CHECK(updated.hard == keep.hard);
}

TEST_CASE("selector layer at rho 0.5 keeps exactly half of 8 alive tokens") {
  ModelConfig cfg = small_config();
  cfg.rho = 0.5;
  Model m = make_model(cfg, 73);
  std::mt19937_64 rng(79);
  SpikeTensor x = random_spikes(2, 8, 16, rng);
  TokenDecision keep = TokenDecision::all_ones(8);
  auto [out, updated] = m.encoder_block_forward(2, x, keep);
  CHECK(updated.alive() == 4);
  for (std::size_t i = 0; i < 8; ++i) CHECK(updated.hard[i] <= keep.hard[i]);
}

TEST_CASE("classify: uniform spikes and a zero-weight head give the bias") {
  ModelConfig cfg = small_config();
  Model m(cfg);  // zero weights, zero bias
  Parameter* hb = m.find_parameter("head.b");
  REQUIRE(hb != nullptr);
  for (std::int64_t c = 0; c < cfg.num_classes; ++c)
    hb->value.v[c] = 0.25f * static_cast<float>(c + 1);
  SpikeTensor x(2, 16, 16);
  std::fill(x.data.begin(), x.data.end(), 1.0f);
  std::vector<float> ones(16, 1.0f);
  Tensor logits = m.classify(x, ones);
  for (std::int64_t c = 0; c < cfg.num_classes; ++c)
    CHECK(logits.v[c] == doctest::Approx(0.25f * static_cast<float>(c + 1)));
}

TEST_CASE("classify ignores garbage at dropped positions") {
  Model m = make_model(small_config(), 83);
  std::mt19937_64 rng(89);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> keep(16, 1.0f);
  keep[2] = keep[7] = keep[11] = 0.0f;
  Tensor a = m.classify(x, keep);
  SpikeTensor garbled = x;
  for (std::int64_t t = 0; t < 2; ++t)
    for (std::int64_t d = 0; d < 16; ++d) {
      garbled.at(t, 2, d) = 1.0f - garbled.at(t, 2, d);
      garbled.at(t, 7, d) = 1.0f;
    }
  Tensor b = m.classify(garbled, keep);
  CHECK(a.v == b.v);
}

TEST_CASE("classify equals a gather-based oracle head") {
  Model m = make_model(small_config(), 97);
  std::mt19937_64 rng(101);
  SpikeTensor x = random_spikes(2, 4, 16, rng);
  std::vector<float> keep{1.0f, 0.0f, 1.0f, 1.0f};
  Tensor masked = m.classify(x, keep);
  SpikeTensor compact = gather_tokens(x, keep);
  Tensor oracle = m.classify(compact, std::vector<float>(3, 1.0f));
  CHECK(masked.v == oracle.v);
}

TEST_CASE("classify with zero kept tokens reports an empty token set") {
  Model m = make_model(small_config(), 103);
  SpikeTensor x(2, 16, 16);
  std::vector<float> none(16, 0.0f);
  CHECK_THROWS_WITH_AS(m.classify(x, none),
                       doctest::Contains("empty token set"), UsageError);
}

TEST_CASE("head permutation equivariance: permuting kept tokens leaves logits put") {
  Model m = make_model(small_config(), 107);
  std::mt19937_64 rng(109);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> keep(16, 1.0f);
  std::uniform_int_distribution<int> bit(0, 1);
  for (auto& k : keep) k = static_cast<float>(bit(rng));
  keep[0] = 1.0f;
  Tensor base = m.classify(x, keep);

  std::vector<std::int64_t> perm(16);
  for (std::int64_t i = 0; i < 16; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  SpikeTensor px(2, 16, 16);
  std::vector<float> pkeep(16);
  for (std::int64_t i = 0; i < 16; ++i) {
    pkeep[static_cast<std::size_t>(i)] = keep[static_cast<std::size_t>(perm[i])];
    for (std::int64_t t = 0; t < 2; ++t)
      for (std::int64_t d = 0; d < 16; ++d) px.at(t, i, d) = x.at(t, perm[i], d);
  }
  Tensor permuted = m.classify(px, pkeep);
  for (std::int64_t c = 0; c < 4; ++c)
    CHECK(permuted.v[c] == doctest::Approx(base.v[c]).epsilon(1e-6));
}

TEST_CASE("selector composition is monotone along the eval pipeline") {
  ModelConfig cfg = small_config();
  cfg.rho = 0.6;
  Model m = make_model(cfg, 113);
  std::mt19937_64 rng(127);
  Tensor imgs = random_images(3, 3, 16, rng);
  EvalResult r = m.forward_eval(imgs, EvalOptions{});
  REQUIRE(r.cum_masks.size() == 3);
  for (std::size_t s = 1; s < r.cum_masks.size(); ++s)
    for (std::int64_t i = 0; i < r.cum_masks[s].numel(); ++i)
      CHECK(r.cum_masks[s].v[i] <= r.cum_masks[s - 1].v[i]);
  // Kept counts follow the ceil schedule.
  auto expect = keep_schedule(0.6, cfg.selector_layers, 16);
  for (std::size_t s = 0; s < 3; ++s) {
    for (std::int64_t b = 0; b < 3; ++b) {
      std::int64_t cnt = 0;
      for (std::int64_t i = 0; i < 16; ++i)
        cnt += r.cum_masks[s].v[b * 16 + i] != 0.0f ? 1 : 0;
      CHECK(cnt == expect[s]);
    }
  }
}

TEST_CASE("keep-all neutrality: rho 1.0 equals the selector compiled out") {
  ModelConfig cfg = small_config();
  cfg.rho = 1.0;
  Model m = make_model(cfg, 131);
  std::mt19937_64 rng(137);
  Tensor imgs = random_images(4, 3, 16, rng);
  EvalOptions with_sel;
  EvalResult a = m.forward_eval(imgs, with_sel);
  EvalOptions no_sel;
  no_sel.selector_enabled = false;
  EvalResult b = m.forward_eval(imgs, no_sel);
  CHECK(a.logits.v == b.logits.v);
}

TEST_CASE("masked and gather execution produce bitwise identical logits") {
  ModelConfig cfg = small_config();
  cfg.rho = 0.6;
  Model m = make_model(cfg, 139);
  std::mt19937_64 rng(149);
  Tensor imgs = random_images(5, 3, 16, rng);
  EvalOptions masked;
  masked.exec = ExecMode::masked;
  EvalOptions gather;
  gather.exec = ExecMode::gather;
  EvalResult a = m.forward_eval(imgs, masked);
  EvalResult b = m.forward_eval(imgs, gather);
  CHECK(a.logits.v == b.logits.v);
  CHECK(a.final_mask.v == b.final_mask.v);
  REQUIRE(a.cum_masks.size() == b.cum_masks.size());
  for (std::size_t s = 0; s < a.cum_masks.size(); ++s)
    CHECK(a.cum_masks[s].v == b.cum_masks[s].v);
}

TEST_CASE("dropped-token independence: values at dropped positions never reach logits") {
  Model m = make_model(small_config(), 151);
  std::mt19937_64 rng(157);
  SpikeTensor x = random_spikes(2, 16, 16, rng);
  std::vector<float> keep(16, 1.0f);
  keep[1] = keep[5] = keep[9] = keep[13] = 0.0f;

  // Run two encoder blocks plus the head on both variants.
  SpikeTensor y = x;
  for (std::int64_t t = 0; t < 2; ++t)
    for (std::int64_t d = 0; d < 16; ++d) {
      y.at(t, 1, d) = 1.0f - y.at(t, 1, d);
      y.at(t, 9, d) = 1.0f;
    }
  auto run = [&](const SpikeTensor& in) {
    TokenDecision dec = TokenDecision::all_ones(16);
    dec.hard = keep;
    dec.soft = keep;
    auto [o1, d1] = m.encoder_block_forward(1, in, dec);
    auto [o2, d2] = m.encoder_block_forward(2, o1, d1);
    return m.classify(o2, d2.hard);
  };
  Tensor a = run(x);
  Tensor b = run(y);
  CHECK(a.v == b.v);
}

TEST_CASE("training forward: straight-through masks are exactly binary and "
          "scorer gradients flow") {
  ModelConfig cfg = small_config();
  Model m = make_model(cfg, 163);
  std::mt19937_64 rng(167);
  Tensor imgs = random_images(4, 3, 16, rng);
  std::vector<int> labels{0, 1, 2, 3};

  for (Parameter* p : m.parameters()) p->zero_grad();
  Tape tape;
  std::mt19937_64 gum(171);
  TrainSelectorOptions sel;
  sel.rho = 0.7;
  TrainForward tf = m.forward_train(tape, imgs, labels, sel, gum);

  REQUIRE(tf.hard_masks.size() == 3);
  for (std::size_t s = 0; s < tf.hard_masks.size(); ++s)
    for (float v : tf.hard_masks[s].v) CHECK((v == 0.0f || v == 1.0f));
  for (std::size_t s = 1; s < tf.hard_masks.size(); ++s)
    for (std::int64_t i = 0; i < tf.hard_masks[s].numel(); ++i)
      CHECK(tf.hard_masks[s].v[i] <= tf.hard_masks[s - 1].v[i]);
  // Every image keeps at least one token.
  for (std::int64_t b = 0; b < 4; ++b) {
    std::int64_t cnt = 0;
    for (std::int64_t i = 0; i < 16; ++i)
      cnt += tf.hard_masks.back().v[b * 16 + i] != 0.0f ? 1 : 0;
    CHECK(cnt >= 1);
  }

  tape.backward(tf.loss);
  double scorer_grad = 0.0;
  for (std::size_t app = 0; app < m.selector_count(); ++app) {
    ScorerView sv = m.scorer(app);
    for (Parameter* p : {sv.w1, sv.b1, sv.w2, sv.b2})
      for (float g : p->grad.v) scorer_grad = std::max(scorer_grad, std::abs((double)g));
  }
  CHECK(scorer_grad > 0.0);
}

TEST_CASE("training forward is deterministic given the same seed") {
  ModelConfig cfg = small_config();
  Model m = make_model(cfg, 173);
  std::mt19937_64 rng(179);
  Tensor imgs = random_images(3, 3, 16, rng);
  std::vector<int> labels{1, 2, 0};
  TrainSelectorOptions sel;

  auto run = [&]() {
    Tape tape;
    std::mt19937_64 gum(99);
    TrainForward tf = m.forward_train(tape, imgs, labels, sel, gum);
    return tape.value(tf.loss).v[0];
  };
  CHECK(run() == run());
}

TEST_CASE("binarity holds through the whole eval pipeline") {
  ModelConfig cfg = small_config();
  Model m = make_model(cfg, 181);
  std::mt19937_64 rng(191);
  Tensor imgs = random_images(2, 3, 16, rng);
  EvalOptions opts;
  opts.capture_layer = 2;
  opts.capture_count = 2;
  EvalResult r = m.forward_eval(imgs, opts);
  REQUIRE(r.captured.size() == 2);
  for (const auto& st : r.captured) CHECK(st.is_binary());
}
