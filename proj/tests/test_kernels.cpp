// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "resnext/conv.hpp"
#include "resnext/kernels.hpp"

using namespace resnext;
namespace k = resnext::kernels;

namespace {

template <typename T>
std::vector<T> randv(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> d;
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(d(rng));
  return v;
}

template <typename T>
double rel(const std::vector<T>& a, const std::vector<T>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(a[i]) - b[i]));
    den = std::max({den, std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i]))});
  }
  return den == 0 ? num : num / den;
}

}  // namespace

TEST_CASE("isa names") {
  CHECK(k::parse_isa("scalar") == k::Isa::Scalar);
  CHECK(k::parse_isa("reference") == k::Isa::Scalar);
  CHECK(k::parse_isa("avx2") == k::Isa::Avx2);
  CHECK(k::parse_isa("auto") == k::best_isa());
  CHECK_THROWS(k::parse_isa("neon"));
  CHECK(k::isa_supported(k::Isa::Scalar));
  CHECK(k::active_isa() == k::Isa::Scalar);
  {
    k::ScopedIsa s(k::best_isa());
    CHECK(k::active_isa() == k::best_isa());
  }
  CHECK(k::active_isa() == k::Isa::Scalar);
}

TEST_CASE("scalar kernels match a plain loop exactly") {
  std::mt19937_64 rng(5);
  for (std::size_t n : {0u, 1u, 7u, 33u, 100u}) {
    const auto x = randv<double>(n, rng);
    auto y = randv<double>(n, rng);
    auto expect = y;
    for (std::size_t i = 0; i < n; ++i) expect[i] += 0.75 * x[i];
    k::scalar::axpy(n, 0.75, x.data(), y.data());
    CHECK(y == expect);
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) dot += x[i] * expect[i];
    CHECK(k::scalar::dot(n, x.data(), expect.data()) == dot);
  }
}

TEST_CASE_TEMPLATE("avx2 kernels agree with scalar within 1e-6", T, float, double) {
  if (!k::isa_supported(k::Isa::Avx2)) {
    MESSAGE("AVX2 not available; skipping");
    return;
  }
  std::mt19937_64 rng(6);
  for (std::size_t n : {1u, 3u, 4u, 8u, 9u, 15u, 16u, 17u, 31u, 64u, 1000u, 4099u}) {
    const auto x = randv<T>(n, rng);
    const auto y0 = randv<T>(n, rng);
    auto ys = y0, yv = y0;
    k::scalar::axpy(n, T(0.3), x.data(), ys.data());
    k::avx2::axpy(n, T(0.3), x.data(), yv.data());
    CHECK(rel(ys, yv) <= 1e-6);
    const double ds = k::scalar::dot(n, x.data(), y0.data());
    const double dv = k::avx2::dot(n, x.data(), y0.data());
    double scale = 0;
    for (std::size_t i = 0; i < n; ++i) scale += std::abs(static_cast<double>(x[i]) * y0[i]);
    CHECK(std::abs(ds - dv) <= 1e-6 * scale);
  }
}

TEST_CASE_TEMPLATE("conv under avx2 agrees with scalar reference", T, float, double) {
  if (!k::isa_supported(k::Isa::Avx2)) return;
  std::mt19937_64 rng(7);
  const ConvSpec spec{8, 8, 3, 1, 1, 2};
  const auto x = random_normal<T>({2, 8, 9, 9}, rng);
  const auto w = random_normal<T>(spec.weight_shape(), rng);
  const auto g = random_normal<T>({2, 8, 9, 9}, rng);
  const auto ref = conv2d_forward(x, w, spec);
  const auto ref_g = conv2d_backward(x, w, spec, g);
  k::ScopedIsa s(k::Isa::Avx2);
  CHECK(max_rel_diff(ref, conv2d_forward(x, w, spec)) <= 1e-6);
  const auto vg = conv2d_backward(x, w, spec, g);
  CHECK(max_rel_diff(ref_g.input, vg.input) <= 1e-6);
  CHECK(max_rel_diff(ref_g.weight, vg.weight) <= 1e-6);
}

TEST_CASE("scalar reference is bit-reproducible") {
  std::mt19937_64 rng(8);
  const ConvSpec spec{4, 6, 3, 2, 1, 2};
  const auto x = random_normal<float>({2, 4, 7, 7}, rng);
  const auto w = random_normal<float>(spec.weight_shape(), rng);
  CHECK(conv2d_forward(x, w, spec) == conv2d_forward(x, w, spec));
}
