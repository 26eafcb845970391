// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "resnext/tensor.hpp"

namespace resnext {

/// Hyper-parameters of a bias-free 2-D convolution with square kernels.
///
/// Input and output channels are split into `groups` equal slices; output
/// group g only sees input group g.
struct ConvSpec {
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t padding = 0;
  std::size_t groups = 1;

  std::size_t in_per_group() const { return in_channels / groups; }
  std::size_t out_per_group() const { return out_channels / groups; }

  /// Throws InvalidSpecError when the channel split or extents are invalid.
  void validate() const;
  /// floor((in + 2p - k) / s) + 1; throws InvalidSpecError if < 1.
  std::size_t out_extent(std::size_t in) const;
  Shape weight_shape() const { return {out_channels, in_per_group(), kernel, kernel}; }

  std::uint64_t param_count() const;
  /// Multiply-adds for one sample at the given output resolution.
  std::uint64_t macs(std::size_t out_h, std::size_t out_w) const;

  std::string str() const;
  friend bool operator==(const ConvSpec&, const ConvSpec&) = default;
};

/// Output of conv2d_backward.
template <typename T>
struct ConvGrads {
  Tensor<T> input;
  Tensor<T> weight;
};

/// Direct convolution; fixed loop nesting (group, out channel, in channel,
/// kernel row, kernel column), so results are reproducible.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec);

/// im2col + row-by-row accumulation. Alternate path, checked against the
/// direct one.
template <typename T>
Tensor<T> conv2d_forward_im2col(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec);

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                             const Tensor<T>& grad_out);

/// Dense (groups = 1) weight equal to `weight` placed on the block diagonal.
template <typename T>
Tensor<T> embed_block_diagonal(const Tensor<T>& weight, const ConvSpec& spec);

}  // namespace resnext
