// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "resnext/checks.hpp"
#include "resnext/collapse.hpp"
#include "resnext/errors.hpp"
#include "resnext/layers.hpp"

using namespace resnext;

TEST_CASE("C=2, d=4, 8->8 collapse") {
  std::mt19937_64 rng(1);
  std::vector<DensePath<double>> paths(2);
  for (auto& p : paths) p.layers = {random_normal<double>({4, 8}, rng), random_normal<double>({8, 4}, rng)};
  const auto x = random_normal<double>({3, 8}, rng);
  const auto wide = collapse_depth2<double>(paths);
  CHECK(wide.first.shape() == Shape{8, 8});
  CHECK(wide.second.shape() == Shape{8, 8});
  for (const bool relu : {false, true}) {
    Tensor<double> expect({3, 8});
    for (const auto& p : paths) {
      auto h = oracle::matmul_t(x, p.layers[0]);
      if (relu) h = relu_forward(h);
      add_inplace(expect, oracle::matmul_t(h, p.layers[1]));
    }
    CHECK(max_rel_diff(multipath_forward<double>(paths, x, relu), expect) <= 1e-12);
    CHECK(max_rel_diff(wide_forward(wide, x, relu), expect) <= 1e-6);
  }
}

TEST_CASE("C=1 collapse is the identity on weights") {
  std::mt19937_64 rng(2);
  std::vector<DensePath<float>> paths(1);
  paths[0].layers = {random_normal<float>({3, 5}, rng), random_normal<float>({6, 3}, rng)};
  const auto wide = collapse_depth2<float>(paths);
  CHECK(wide.first == paths[0].layers[0]);
  CHECK(wide.second == paths[0].layers[1]);
}

TEST_CASE("depth other than 2 is refused") {
  std::mt19937_64 rng(3);
  std::vector<DensePath<double>> paths(2);
  for (auto& p : paths)
    p.layers = {random_normal<double>({4, 8}, rng), random_normal<double>({4, 4}, rng),
                random_normal<double>({8, 4}, rng)};
  CHECK_THROWS_AS(collapse_depth2<double>(paths), InvalidSpecError);
  paths[0].layers.resize(2);
  CHECK_THROWS_AS(collapse_depth2<double>(paths), InvalidSpecError);
}

TEST_CASE("collapsed input gradient matches") {
  std::mt19937_64 rng(4);
  std::vector<DensePath<double>> paths(3);
  for (auto& p : paths) p.layers = {random_normal<double>({2, 5}, rng), random_normal<double>({7, 2}, rng)};
  const auto x = random_normal<double>({2, 5}, rng);
  const auto g = random_normal<double>({2, 7}, rng);
  const auto wide = collapse_depth2<double>(paths);
  for (const bool relu : {false, true}) {
    // linear case oracle: g * (sum_i W2_i W1_i)
    const auto gm = multipath_input_grad<double>(paths, x, g, relu);
    CHECK(max_rel_diff(gm, wide_input_grad(wide, x, g, relu)) <= 1e-6);
    if (!relu) {
      Tensor<double> expect({2, 5});
      for (const auto& p : paths) {
        // W^T applied to g: matmul_t with transposed weights
        Tensor<double> w2t({2, 7}), w1t({5, 2});
        for (std::size_t o = 0; o < 7; ++o)
          for (std::size_t i = 0; i < 2; ++i) w2t[i * 7 + o] = p.layers[1][o * 2 + i];
        for (std::size_t o = 0; o < 2; ++o)
          for (std::size_t i = 0; i < 5; ++i) w1t[i * 2 + o] = p.layers[0][o * 5 + i];
        add_inplace(expect, oracle::matmul_t(oracle::matmul_t(g, w2t), w1t));
      }
      CHECK(max_rel_diff(gm, expect) <= 1e-12);
    }
  }
}

TEST_CASE("collapse_check helper") {
  const auto r = collapse_check<double>({20, 5});
  CHECK(r.cases == 20);
  CHECK(r.pass());
  CHECK(collapse_check<float>({10, 6}).pass());
}
