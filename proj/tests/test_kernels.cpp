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
#include <omp.h>

#include <random>
#include <vector>

#include "spikeprune/kernels.hpp"
#include "spikeprune/tensor.hpp"

using namespace spikeprune;

namespace {

std::vector<float> random_vec(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
  std::vector<float> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

}  // namespace

TEST_CASE("parallel matmul matches serial reference bitwise in all transpose modes") {
  std::mt19937_64 rng(7);
  const std::int64_t m = 33, k = 17, n = 29;
  auto a = random_vec(static_cast<std::size_t>(m * k), rng);
  auto b = random_vec(static_cast<std::size_t>(k * n), rng);
  for (bool ta : {false, true}) {
    for (bool tb : {false, true}) {
      std::vector<float> c1(static_cast<std::size_t>(m * n), 0.0f);
      std::vector<float> c2(static_cast<std::size_t>(m * n), 1.0f);
      kern::matmul(a.data(), b.data(), c1.data(), m, k, n, ta, tb, false);
      ref::matmul(a.data(), b.data(), c2.data(), m, k, n, ta, tb, false);
      for (std::size_t i = 0; i < c1.size(); ++i) REQUIRE(c1[i] == c2[i]);
    }
  }
}

TEST_CASE("matmul accumulate adds onto the destination") {
  std::mt19937_64 rng(9);
  const std::int64_t m = 5, k = 4, n = 3;
  auto a = random_vec(static_cast<std::size_t>(m * k), rng);
  auto b = random_vec(static_cast<std::size_t>(k * n), rng);
  auto seed = random_vec(static_cast<std::size_t>(m * n), rng);
  std::vector<float> c1 = seed, c2 = seed;
  kern::matmul(a.data(), b.data(), c1.data(), m, k, n, false, false, true);
  ref::matmul(a.data(), b.data(), c2.data(), m, k, n, false, false, true);
  REQUIRE(c1 == c2);
  // Accumulation must change the seeded destination.
  REQUIRE(c1 != seed);
}

TEST_CASE("bmm and broadcast bmm match the serial reference bitwise") {
  std::mt19937_64 rng(11);
  const std::int64_t g = 6, m = 8, k = 5, n = 7;
  auto a = random_vec(static_cast<std::size_t>(g * m * k), rng);
  auto b = random_vec(static_cast<std::size_t>(g * k * n), rng);
  for (bool tb : {false, true}) {
    std::vector<float> c1(static_cast<std::size_t>(g * m * n), 0.0f);
    std::vector<float> c2(static_cast<std::size_t>(g * m * n), 0.0f);
    kern::bmm(a.data(), b.data(), c1.data(), g, m, k, n, false, tb, false);
    ref::bmm(a.data(), b.data(), c2.data(), g, m, k, n, false, tb, false);
    REQUIRE(c1 == c2);
  }
  auto w = random_vec(static_cast<std::size_t>(m * k), rng);
  std::vector<float> c1(static_cast<std::size_t>(g * m * n), 0.0f);
  std::vector<float> c2(static_cast<std::size_t>(g * m * n), 0.0f);
  kern::bmm_broadcast_a(w.data(), b.data(), c1.data(), g, m, k, n, false, false);
  ref::bmm_broadcast_a(w.data(), b.data(), c2.data(), g, m, k, n, false, false);
  REQUIRE(c1 == c2);
}

TEST_CASE("im2col/col2im round trip matches reference and accumulates overlaps") {
  std::mt19937_64 rng(13);
  const std::int64_t bc = 3, c = 2, h = 9, w = 9, kk = 3, stride = 2, pad = 1;
  const std::int64_t oh = (h + 2 * pad - kk) / stride + 1;
  const std::int64_t ow = (w + 2 * pad - kk) / stride + 1;
  auto x = random_vec(static_cast<std::size_t>(bc * c * h * w), rng);
  std::vector<float> col1(static_cast<std::size_t>(bc * c * kk * kk * oh * ow));
  std::vector<float> col2 = col1;
  kern::im2col(x.data(), col1.data(), bc, c, h, w, kk, stride, pad);
  ref::im2col(x.data(), col2.data(), bc, c, h, w, kk, stride, pad);
  REQUIRE(col1 == col2);

  std::vector<float> g1(x.size(), 0.0f), g2(x.size(), 0.0f);
  kern::col2im(col1.data(), g1.data(), bc, c, h, w, kk, stride, pad);
  ref::col2im(col2.data(), g2.data(), bc, c, h, w, kk, stride, pad);
  REQUIRE(g1 == g2);
}

TEST_CASE("parallel LIF sequence matches serial reference bitwise") {
  std::mt19937_64 rng(17);
  const std::int64_t t = 6, q = 201;
  auto x = random_vec(static_cast<std::size_t>(t * q), rng);
  for (bool hard : {true, false}) {
    std::vector<float> u1(x.size()), s1(x.size()), u2(x.size()), s2(x.size());
    kern::lif_forward(x.data(), u1.data(), s1.data(), t, q, 1.0f, 0.5f, hard);
    ref::lif_forward(x.data(), u2.data(), s2.data(), t, q, 1.0f, 0.5f, hard);
    REQUIRE(u1 == u2);
    REQUIRE(s1 == s2);
  }
}

TEST_CASE("kernel results do not depend on the OpenMP thread count") {
  std::mt19937_64 rng(19);
  const std::int64_t m = 40, k = 24, n = 32;
  auto a = random_vec(static_cast<std::size_t>(m * k), rng);
  auto b = random_vec(static_cast<std::size_t>(k * n), rng);
  const int saved = omp_get_max_threads();
  std::vector<float> c1(static_cast<std::size_t>(m * n)), c2 = c1;
  omp_set_num_threads(1);
  kern::matmul(a.data(), b.data(), c1.data(), m, k, n, false, false, false);
  omp_set_num_threads(saved > 1 ? saved : 2);
  kern::matmul(a.data(), b.data(), c2.data(), m, k, n, false, false, false);
  omp_set_num_threads(saved);
  REQUIRE(c1 == c2);
}

TEST_CASE("permute_copy reorders axes") {
  Tensor x({2, 3}, {0, 1, 2, 3, 4, 5});
  Tensor y = permute_copy(x, {2, 3}, {1, 0});
  REQUIRE(y.shape == std::vector<std::int64_t>{3, 2});
  REQUIRE(y.v == std::vector<float>{0, 3, 1, 4, 2, 5});
}
