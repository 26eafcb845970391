// SPDX-License-Identifier: Apache-2.0
#include "resnext/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace resnext {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ',';
    os << s[i];
  }
  os << ')';
  return os.str();
}

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

namespace {

void check_shape(const Shape& s) {
  if (s.empty() || s.size() > 4)
    throw RejectedInputError("tensor rank must be 1..4, got shape " + shape_str(s));
  for (auto e : s)
    if (e == 0) throw RejectedInputError("tensor extents must be >= 1, got " + shape_str(s));
}

}  // namespace

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  check_shape(shape_);
  data_.assign(shape_numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_shape(shape_);
  if (data_.size() != shape_numel(shape_))
    throw RejectedInputError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape_str(shape_));
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename To, typename From>
Tensor<To> tensor_cast(const Tensor<From>& t) {
  std::vector<To> d(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) d[i] = static_cast<To>(t[i]);
  return Tensor<To>(t.shape(), std::move(d));
}

template <typename T>
Tensor<T> random_normal(const Shape& shape, std::mt19937_64& rng, double stddev) {
  Tensor<T> t(shape);
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
Tensor<T> random_uniform(const Shape& shape, std::mt19937_64& rng, double lo, double hi) {
  Tensor<T> t(shape);
  std::uniform_real_distribution<double> dist(lo, hi);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
double max_abs(const Tensor<T>& a) {
  double m = 0.0;
  for (auto v : a.data()) m = std::max(m, std::abs(static_cast<double>(v)));
  return m;
}

template <typename T>
double max_rel_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw RejectedInputError("max_rel_diff: shapes " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    diff = std::max(diff, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  const double scale = std::max(max_abs(a), max_abs(b));
  if (diff == 0.0) return 0.0;
  return diff / scale;
}

template <typename T>
Tensor<T> concat_channels(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw RejectedInputError("concat_channels: no inputs");
  const auto& first = parts.front();
  if (first.rank() != 4) throw RejectedInputError("concat_channels expects rank-4 tensors");
  std::size_t channels = 0;
  for (const auto& p : parts) {
    if (p.rank() != 4 || p.n() != first.n() || p.h() != first.h() || p.w() != first.w())
      throw RejectedInputError("concat_channels: incompatible shape " + shape_str(p.shape()));
    channels += p.c();
  }
  Tensor<T> out({first.n(), channels, first.h(), first.w()});
  const std::size_t plane = first.h() * first.w();
  for (std::size_t n = 0; n < first.n(); ++n) {
    T* dst = out.ptr() + n * channels * plane;
    for (const auto& p : parts) {
      const T* src = p.ptr() + n * p.c() * plane;
      dst = std::copy(src, src + p.c() * plane, dst);
    }
  }
  return out;
}

template <typename T>
Tensor<T> slice_channels(const Tensor<T>& t, std::size_t begin, std::size_t count) {
  if (t.rank() != 4 || count == 0 || begin + count > t.c())
    throw RejectedInputError("slice_channels: bad range on " + shape_str(t.shape()));
  Tensor<T> out({t.n(), count, t.h(), t.w()});
  const std::size_t plane = t.h() * t.w();
  for (std::size_t n = 0; n < t.n(); ++n) {
    const T* src = t.ptr() + (n * t.c() + begin) * plane;
    std::copy(src, src + count * plane, out.ptr() + n * count * plane);
  }
  return out;
}

template <typename T>
Tensor<T> slice_outer(const Tensor<T>& t, std::size_t begin, std::size_t count) {
  if (count == 0 || begin + count > t.extent(0))
    throw RejectedInputError("slice_outer: bad range on " + shape_str(t.shape()));
  Shape s = t.shape();
  s[0] = count;
  const std::size_t stride = t.size() / t.extent(0);
  std::vector<T> d(t.data().begin() + begin * stride, t.data().begin() + (begin + count) * stride);
  return Tensor<T>(std::move(s), std::move(d));
}

template <typename T>
Tensor<T> concat_outer(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw RejectedInputError("concat_outer: no inputs");
  Shape s = parts.front().shape();
  std::size_t rows = 0;
  std::vector<T> d;
  for (const auto& p : parts) {
    if (p.rank() != s.size() || !std::equal(p.shape().begin() + 1, p.shape().end(), s.begin() + 1))
      throw RejectedInputError("concat_outer: incompatible shape " + shape_str(p.shape()));
    rows += p.extent(0);
    d.insert(d.end(), p.data().begin(), p.data().end());
  }
  s[0] = rows;
  return Tensor<T>(std::move(s), std::move(d));
}

#define RESNEXT_INSTANTIATE(T)                                                            \
  template class Tensor<T>;                                                               \
  template Tensor<T> random_normal<T>(const Shape&, std::mt19937_64&, double);            \
  template Tensor<T> random_uniform<T>(const Shape&, std::mt19937_64&, double, double);   \
  template double max_abs<T>(const Tensor<T>&);                                           \
  template double max_rel_diff<T>(const Tensor<T>&, const Tensor<T>&);                    \
  template Tensor<T> concat_channels<T>(std::span<const Tensor<T>>);                      \
  template Tensor<T> slice_channels<T>(const Tensor<T>&, std::size_t, std::size_t);       \
  template Tensor<T> slice_outer<T>(const Tensor<T>&, std::size_t, std::size_t);          \
  template Tensor<T> concat_outer<T>(std::span<const Tensor<T>>);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

template Tensor<float> tensor_cast<float, double>(const Tensor<double>&);
template Tensor<double> tensor_cast<double, float>(const Tensor<float>&);
template Tensor<float> tensor_cast<float, float>(const Tensor<float>&);
template Tensor<double> tensor_cast<double, double>(const Tensor<double>&);

}  // namespace resnext
