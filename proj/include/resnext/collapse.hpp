// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

/// One path of a multi-path block made of fully-connected layers, each
/// weight shaped (out, in), no bias.
template <typename T>
struct DensePath {
  std::vector<Tensor<T>> layers;
};

/// A single two-layer block: first (C*d, in), second (out, C*d).
template <typename T>
struct WideBlock {
  Tensor<T> first;
  Tensor<T> second;
};

/// Merges C depth-2 paths into one wider two-layer block computing the same
/// sum. Paths of any other depth are refused with InvalidSpecError.
template <typename T>
WideBlock<T> collapse_depth2(std::span<const DensePath<T>> paths);

/// sum_i second_i(act(first_i x)), paths evaluated and summed in order.
template <typename T>
Tensor<T> multipath_forward(std::span<const DensePath<T>> paths, const Tensor<T>& x, bool inner_relu);
template <typename T>
Tensor<T> multipath_input_grad(std::span<const DensePath<T>> paths, const Tensor<T>& x, const Tensor<T>& grad_out,
                               bool inner_relu);

template <typename T>
Tensor<T> wide_forward(const WideBlock<T>& block, const Tensor<T>& x, bool inner_relu);
template <typename T>
Tensor<T> wide_input_grad(const WideBlock<T>& block, const Tensor<T>& x, const Tensor<T>& grad_out, bool inner_relu);

}  // namespace resnext
