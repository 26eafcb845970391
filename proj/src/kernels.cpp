// SPDX-License-Identifier: Apache-2.0
#include "resnext/kernels.hpp"

#include <atomic>
#include <cassert>
#include <string>

#include "resnext/errors.hpp"

namespace resnext::kernels {

namespace {

Isa detect_best() {
#if defined(RESNEXT_HAVE_AVX2)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{Isa::Scalar};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar: return "scalar";
    case Isa::Avx2: return "avx2";
  }
  return "?";
}

Isa parse_isa(std::string_view name) {
  if (name == "scalar" || name == "reference") return Isa::Scalar;
  if (name == "avx2") return Isa::Avx2;
  if (name == "auto") return best_isa();
  throw InvalidSpecError("unknown isa '" + std::string(name) + "' (expected scalar, avx2 or auto)");
}

bool isa_supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
  static const Isa best = detect_best();
  return best == Isa::Avx2;
}

Isa best_isa() {
  static const Isa best = detect_best();
  return best;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_supported(isa))
    throw InvalidSpecError("isa '" + std::string(isa_name(isa)) + "' is not supported on this CPU");
  current().store(isa, std::memory_order_relaxed);
}

namespace scalar {

template <typename T>
static void axpy_impl(std::size_t n, T a, const T* x, T* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
static T dot_impl(std::size_t n, const T* x, const T* y) {
  T s = 0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void axpy(std::size_t n, float a, const float* x, float* y) { axpy_impl(n, a, x, y); }
void axpy(std::size_t n, double a, const double* x, double* y) { axpy_impl(n, a, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return dot_impl(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return dot_impl(n, x, y); }

}  // namespace scalar

#if !defined(RESNEXT_HAVE_AVX2)
namespace avx2 {
void axpy(std::size_t n, float a, const float* x, float* y) { scalar::axpy(n, a, x, y); }
void axpy(std::size_t n, double a, const double* x, double* y) { scalar::axpy(n, a, x, y); }
float dot(std::size_t n, const float* x, const float* y) { return scalar::dot(n, x, y); }
double dot(std::size_t n, const double* x, const double* y) { return scalar::dot(n, x, y); }
}  // namespace avx2
#endif

void axpy(float a, std::span<const float> x, std::span<float> y) {
  assert(x.size() == y.size());
  if (active_isa() == Isa::Avx2)
    avx2::axpy(x.size(), a, x.data(), y.data());
  else
    scalar::axpy(x.size(), a, x.data(), y.data());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  if (active_isa() == Isa::Avx2)
    avx2::axpy(x.size(), a, x.data(), y.data());
  else
    scalar::axpy(x.size(), a, x.data(), y.data());
}

float dot(std::span<const float> x, std::span<const float> y) {
  assert(x.size() == y.size());
  return active_isa() == Isa::Avx2 ? avx2::dot(x.size(), x.data(), y.data())
                                   : scalar::dot(x.size(), x.data(), y.data());
}

double dot(std::span<const double> x, std::span<const double> y) {
  assert(x.size() == y.size());
  return active_isa() == Isa::Avx2 ? avx2::dot(x.size(), x.data(), y.data())
                                   : scalar::dot(x.size(), x.data(), y.data());
}

}  // namespace resnext::kernels
