// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);
/// Gradient passes where the forward input was strictly positive.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b);

/// 3x3 window, stride 2; padded cells never win the max.
template <typename T>
struct MaxPoolResult {
  Tensor<T> output;
  std::vector<std::uint32_t> argmax;  // flat input index within the sample-channel plane
};

template <typename T>
MaxPoolResult<T> maxpool3x3s2_forward(const Tensor<T>& x, std::size_t padding = 1);
template <typename T>
Tensor<T> maxpool3x3s2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                const Tensor<T>& grad_out);
std::size_t maxpool_out_extent(std::size_t in, std::size_t padding = 1);

/// (N, C, H, W) -> (N, C).
template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x);
template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out);

/// y = x W^T + b with x (N, in), W (out, in), b (out).
template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias);

template <typename T>
struct LinearGrads {
  Tensor<T> input;
  Tensor<T> weight;
  Tensor<T> bias;
};

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out);

template <typename T>
struct LossResult {
  double loss = 0;      // mean over the batch
  Tensor<T> grad;       // d loss / d logits
  std::size_t correct = 0;  // argmax hits
};

/// Mean softmax cross-entropy of (N, K) logits against integer labels.
template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels);

}  // namespace resnext
