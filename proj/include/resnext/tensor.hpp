// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "resnext/errors.hpp"

namespace resnext {

enum class DType : std::uint8_t { F32 = 1, F64 = 2 };

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::F32; }
template <>
constexpr DType dtype_of<double>() { return DType::F64; }

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);
std::size_t shape_numel(const Shape& s);

/**
 * Dense row-major tensor of rank 1..4, last axis fastest.
 *
 * Rank-4 activations are (N, C, H, W); conv weights are
 * (out, in_per_group, kh, kw).
 */
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* ptr() { return data_.data(); }
  const T* ptr() const { return data_.data(); }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  // Rank-4 accessors.
  std::size_t n() const { return shape_[0]; }
  std::size_t c() const { return shape_[1]; }
  std::size_t h() const { return shape_[2]; }
  std::size_t w() const { return shape_[3]; }
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  void fill(T v);
  bool all_finite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Either precision; what a file on disk decodes to.
using AnyTensor = std::variant<Tensor<float>, Tensor<double>>;

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t);

template <typename T>
Tensor<T> random_normal(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0);

template <typename T>
Tensor<T> random_uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi);

/// max|a-b| / max(max|a|, max|b|), 0 when both are identically zero.
template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
double max_abs(const Tensor<T>& a);

/// Concatenate rank-4 tensors along the channel axis.
template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts);

/// Channels [begin, begin+count) of a rank-4 tensor.
template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::size_t begin, std::size_t count);

/// Rows [begin, begin+count) along axis 0, any rank.
template <typename T>
Tensor<T> slice_outer(const Tensor<T>& t, std::size_t begin, std::size_t count);

/// Stack tensors with identical trailing extents along axis 0.
template <typename T>
Tensor<T> concat_outer(std::span<const Tensor<T>> parts);

}  // namespace resnext
