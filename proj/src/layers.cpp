// SPDX-License-Identifier: Apache-2.0
#include "resnext/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resnext/kernels.hpp"

namespace resnext {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > T{0} ? x[i] : T{0};
  return y;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
  if (x.shape() != grad_out.shape())
    throw RejectedInputError("relu_backward: shape " + shape_str(grad_out.shape()) + " vs " + shape_str(x.shape()));
  Tensor<T> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T{0} ? grad_out[i] : T{0};
  return g;
}

template <typename T>
Tensor<T> add_forward(const Tensor<T>& a, const Tensor<T>& b) {
  Tensor<T> y = a;
  add_inplace(y, b);
  return y;
}

template <typename T>
void add_inplace(Tensor<T>& acc, const Tensor<T>& b) {
  if (acc.shape() != b.shape())
    throw RejectedInputError("add: shape " + shape_str(acc.shape()) + " vs " + shape_str(b.shape()));
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += b[i];
}

std::size_t maxpool_out_extent(std::size_t in, std::size_t padding) {
  if (in + 2 * padding < 3) throw RejectedInputError("maxpool input extent too small");
  return (in + 2 * padding - 3) / 2 + 1;
}

template <typename T>
MaxPoolResult<T> maxpool3x3s2_forward(const Tensor<T>& x, std::size_t padding) {
  if (x.rank() != 4) throw RejectedInputError("maxpool expects rank-4 input, got " + shape_str(x.shape()));
  const std::size_t H = x.h(), W = x.w();
  const std::size_t OH = maxpool_out_extent(H, padding), OW = maxpool_out_extent(W, padding);
  MaxPoolResult<T> r{Tensor<T>({x.n(), x.c(), OH, OW}), {}};
  r.argmax.resize(r.output.size());
  std::size_t o = 0;
  for (std::size_t n = 0; n < x.n(); ++n)
    for (std::size_t c = 0; c < x.c(); ++c) {
      const T* src = &x.at(n, c, 0, 0);
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow, ++o) {
          T best = -std::numeric_limits<T>::infinity();
          std::uint32_t arg = 0;
          for (std::size_t kh = 0; kh < 3; ++kh) {
            const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * 2 + kh) - static_cast<std::ptrdiff_t>(padding);
            if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kw = 0; kw < 3; ++kw) {
              const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * 2 + kw) - static_cast<std::ptrdiff_t>(padding);
              if (iw < 0 || iw >= static_cast<std::ptrdiff_t>(W)) continue;
              const std::size_t idx = static_cast<std::size_t>(ih) * W + static_cast<std::size_t>(iw);
              if (src[idx] > best) {
                best = src[idx];
                arg = static_cast<std::uint32_t>(idx);
              }
            }
          }
          r.output[o] = best;
          r.argmax[o] = arg;
        }
    }
  return r;
}

template <typename T>
Tensor<T> maxpool3x3s2_backward(const Shape& input_shape, std::span<const std::uint32_t> argmax,
                                const Tensor<T>& grad_out) {
  if (argmax.size() != grad_out.size() || grad_out.rank() != 4)
    throw RejectedInputError("maxpool_backward: argmax/grad_out mismatch");
  Tensor<T> g(input_shape);
  const std::size_t plane_in = input_shape[2] * input_shape[3];
  const std::size_t plane_out = grad_out.h() * grad_out.w();
  for (std::size_t p = 0; p < grad_out.n() * grad_out.c(); ++p)
    for (std::size_t i = 0; i < plane_out; ++i) g[p * plane_in + argmax[p * plane_out + i]] += grad_out[p * plane_out + i];
  return g;
}

template <typename T>
Tensor<T> global_avg_pool_forward(const Tensor<T>& x) {
  if (x.rank() != 4) throw RejectedInputError("global_avg_pool expects rank-4 input, got " + shape_str(x.shape()));
  const std::size_t plane = x.h() * x.w();
  Tensor<T> y({x.n(), x.c()});
  for (std::size_t p = 0; p < x.n() * x.c(); ++p) {
    double s = 0;
    const T* src = x.ptr() + p * plane;
    for (std::size_t i = 0; i < plane; ++i) s += src[i];
    y[p] = static_cast<T>(s / static_cast<double>(plane));
  }
  return y;
}

template <typename T>
Tensor<T> global_avg_pool_backward(const Shape& input_shape, const Tensor<T>& grad_out) {
  if (input_shape.size() != 4 || grad_out.shape() != Shape{input_shape[0], input_shape[1]})
    throw RejectedInputError("global_avg_pool_backward: grad_out " + shape_str(grad_out.shape()));
  const std::size_t plane = input_shape[2] * input_shape[3];
  Tensor<T> g(input_shape);
  for (std::size_t p = 0; p < grad_out.size(); ++p) {
    const T v = static_cast<T>(grad_out[p] / static_cast<double>(plane));
    std::fill(g.ptr() + p * plane, g.ptr() + (p + 1) * plane, v);
  }
  return g;
}

namespace {

template <typename T>
void check_linear(const Tensor<T>& x, const Tensor<T>& weight) {
  if (x.rank() != 2 || weight.rank() != 2 || x.extent(1) != weight.extent(1))
    throw RejectedInputError("linear: input " + shape_str(x.shape()) + " vs weight " + shape_str(weight.shape()));
}

}  // namespace

template <typename T>
Tensor<T> linear_forward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  check_linear(x, weight);
  const std::size_t N = x.extent(0), in = x.extent(1), out = weight.extent(0);
  if (bias.shape() != Shape{out}) throw RejectedInputError("linear: bias " + shape_str(bias.shape()));
  Tensor<T> y({N, out});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o)
      y[n * out + o] = kernels::dot(std::span<const T>(weight.ptr() + o * in, in), std::span<const T>(x.ptr() + n * in, in)) +
                       bias[o];
  return y;
}

template <typename T>
LinearGrads<T> linear_backward(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& grad_out) {
  check_linear(x, weight);
  const std::size_t N = x.extent(0), in = x.extent(1), out = weight.extent(0);
  if (grad_out.shape() != Shape{N, out})
    throw RejectedInputError("linear_backward: grad_out " + shape_str(grad_out.shape()));
  LinearGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(weight.shape()), Tensor<T>({out})};
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < out; ++o) {
      const T go = grad_out[n * out + o];
      kernels::axpy(go, std::span<const T>(weight.ptr() + o * in, in), std::span<T>(g.input.ptr() + n * in, in));
      kernels::axpy(go, std::span<const T>(x.ptr() + n * in, in), std::span<T>(g.weight.ptr() + o * in, in));
      g.bias[o] += go;
    }
  return g;
}

template <typename T>
LossResult<T> softmax_cross_entropy(const Tensor<T>& logits, std::span<const std::int32_t> labels) {
  if (logits.rank() != 2 || labels.size() != logits.extent(0))
    throw RejectedInputError("softmax_cross_entropy: logits " + shape_str(logits.shape()) + " with " +
                             std::to_string(labels.size()) + " labels");
  const std::size_t N = logits.extent(0), K = logits.extent(1);
  LossResult<T> r{0.0, Tensor<T>(logits.shape()), 0};
  double total = 0;
  std::vector<double> p(K);
  for (std::size_t n = 0; n < N; ++n) {
    const std::int32_t label = labels[n];
    if (label < 0 || static_cast<std::size_t>(label) >= K)
      throw RejectedInputError("label " + std::to_string(label) + " out of range [0," + std::to_string(K) + ")");
    const T* z = logits.ptr() + n * K;
    const std::size_t top = static_cast<std::size_t>(std::max_element(z, z + K) - z);
    if (top == static_cast<std::size_t>(label)) ++r.correct;
    const double zmax = z[top];
    double denom = 0;
    for (std::size_t k = 0; k < K; ++k) denom += (p[k] = std::exp(z[k] - zmax));
    for (std::size_t k = 0; k < K; ++k) p[k] /= denom;
    total += -(z[label] - zmax - std::log(denom));
    for (std::size_t k = 0; k < K; ++k)
      r.grad[n * K + k] = static_cast<T>((p[k] - (k == static_cast<std::size_t>(label) ? 1.0 : 0.0)) / static_cast<double>(N));
  }
  r.loss = total / static_cast<double>(N);
  return r;
}

#define RESNEXT_INSTANTIATE(T)                                                                          \
  template Tensor<T> relu_forward<T>(const Tensor<T>&);                                                  \
  template Tensor<T> relu_backward<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> add_forward<T>(const Tensor<T>&, const Tensor<T>&);                                 \
  template void add_inplace<T>(Tensor<T>&, const Tensor<T>&);                                            \
  template MaxPoolResult<T> maxpool3x3s2_forward<T>(const Tensor<T>&, std::size_t);                      \
  template Tensor<T> maxpool3x3s2_backward<T>(const Shape&, std::span<const std::uint32_t>, const Tensor<T>&); \
  template Tensor<T> global_avg_pool_forward<T>(const Tensor<T>&);                                       \
  template Tensor<T> global_avg_pool_backward<T>(const Shape&, const Tensor<T>&);                        \
  template Tensor<T> linear_forward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template LinearGrads<T> linear_backward<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);      \
  template LossResult<T> softmax_cross_entropy<T>(const Tensor<T>&, std::span<const std::int32_t>);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
