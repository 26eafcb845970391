// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

enum class Mode { Train, Infer };

/// Per-channel batch-norm parameters and running statistics.
template <typename T>
struct BatchNormState {
  static constexpr double kEpsilon = 1e-5;
  static constexpr double kMomentum = 0.9;  // weight kept on the running history

  Tensor<T> gamma, beta;
  Tensor<T> running_mean, running_var;
  double epsilon = kEpsilon;
  double momentum = kMomentum;

  /// gamma = 1, beta = 0, running mean 0, running var 1.
  static BatchNormState fresh(std::size_t channels);
  std::size_t channels() const { return gamma.size(); }

  friend bool operator==(const BatchNormState&, const BatchNormState&) = default;
};

/// Channels [begin, begin+count) of every vector.
template <typename T>
BatchNormState<T> slice_bn(const BatchNormState<T>& s, std::size_t begin, std::size_t count);

template <typename T>
BatchNormState<T> concat_bn(std::span<const BatchNormState<T>> parts);

template <typename T>
struct BatchNormCache {
  Mode mode = Mode::Train;
  Tensor<T> x_hat;
  std::vector<double> inv_std;
};

template <typename T>
struct BatchNormResult {
  Tensor<T> output;
  BatchNormState<T> state;  // running stats advanced in train mode, unchanged in infer mode
  BatchNormCache<T> cache;
};

template <typename T>
struct BatchNormGrads {
  Tensor<T> input;
  Tensor<T> gamma;
  Tensor<T> beta;
};

/// Train mode normalizes with biased batch statistics over (N, H, W) and
/// blends the unbiased variance into the running estimate.
template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input, const BatchNormState<T>& state, Mode mode);

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormState<T>& state,
                                     const Tensor<T>& grad_out);

}  // namespace resnext
