// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <string_view>

namespace resnext::kernels {

/// Instruction set used by the inner arithmetic loops.
///
/// Scalar is the reference: fixed summation order, no fused multiply-add,
/// bit-reproducible on every platform. Vector variants must agree with it to
/// within 1e-6 relative (checked by the kernel equivalence tests).
enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);
Isa parse_isa(std::string_view name);  // "scalar", "avx2", "auto"
bool isa_supported(Isa isa);
Isa best_isa();

Isa active_isa();
void set_isa(Isa isa);

/// Restores the previously active ISA on scope exit.
class ScopedIsa {
 public:
  explicit ScopedIsa(Isa isa) : saved_(active_isa()) { set_isa(isa); }
  ~ScopedIsa() { set_isa(saved_); }
  ScopedIsa(const ScopedIsa&) = delete;
  ScopedIsa& operator=(const ScopedIsa&) = delete;

 private:
  Isa saved_;
};

// y += a * x
void axpy(float a, std::span<const float> x, std::span<float> y);
void axpy(double a, std::span<const double> x, std::span<double> y);

// sum_i x[i] * y[i]
float dot(std::span<const float> x, std::span<const float> y);
double dot(std::span<const double> x, std::span<const double> y);

// Direct per-ISA entry points, used by the equivalence tests.
namespace scalar {
void axpy(std::size_t n, float a, const float* x, float* y);
void axpy(std::size_t n, double a, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace scalar

namespace avx2 {
void axpy(std::size_t n, float a, const float* x, float* y);
void axpy(std::size_t n, double a, const double* x, double* y);
float dot(std::size_t n, const float* x, const float* y);
double dot(std::size_t n, const double* x, const double* y);
}  // namespace avx2

}  // namespace resnext::kernels
