// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "resnext/block.hpp"

namespace resnext {

struct EquivOptions {
  std::size_t cardinality = 32;
  std::size_t bottleneck_width = 4;
  std::size_t in_width = 256;
  std::size_t out_width = 0;  // 0 = in_width
  std::size_t stride = 1;
  bool bn = true;
  std::uint64_t seed = 0;
  std::size_t batch = 2;
  std::size_t size = 8;
};

struct PairDiff {
  std::string pair;  // e.g. "a-b"
  double max_rel_diff = 0;
};

struct EquivReport {
  std::vector<PairDiff> pairs;
  double tolerance = 0;
  bool pass() const;
};

/// Builds form a, converts to b and c, and compares train-mode forward
/// outputs on one random input. Tolerance 1e-12 in f64, 1e-5 in f32.
template <typename T>
EquivReport equiv_check(const EquivOptions& options);

struct CollapseOptions {
  std::size_t cases = 50;
  std::uint64_t seed = 0;
};

struct CollapseReport {
  std::size_t cases = 0;
  double forward_max_rel_diff = 0;
  double grad_max_rel_diff = 0;
  double tolerance = 0;
  bool pass() const { return forward_max_rel_diff <= tolerance && grad_max_rel_diff <= tolerance; }
};

/// Random depth-2 multi-path blocks against their collapsed wide block.
/// Tolerance 1e-6 in f64, 1e-4 in f32.
template <typename T>
CollapseReport collapse_check(const CollapseOptions& options);

}  // namespace resnext
