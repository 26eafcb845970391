// SPDX-License-Identifier: Apache-2.0
#include "resnext/batchnorm.hpp"

#include <cmath>

namespace resnext {

template <typename T>
BatchNormState<T> BatchNormState<T>::fresh(std::size_t channels) {
  BatchNormState s;
  s.gamma = Tensor<T>({channels}, T{1});
  s.beta = Tensor<T>({channels}, T{0});
  s.running_mean = Tensor<T>({channels}, T{0});
  s.running_var = Tensor<T>({channels}, T{1});
  return s;
}

template <typename T>
BatchNormState<T> slice_bn(const BatchNormState<T>& s, std::size_t begin, std::size_t count) {
  BatchNormState<T> out;
  out.gamma = slice_outer(s.gamma, begin, count);
  out.beta = slice_outer(s.beta, begin, count);
  out.running_mean = slice_outer(s.running_mean, begin, count);
  out.running_var = slice_outer(s.running_var, begin, count);
  out.epsilon = s.epsilon;
  out.momentum = s.momentum;
  return out;
}

template <typename T>
BatchNormState<T> concat_bn(std::span<const BatchNormState<T>> parts) {
  if (parts.empty()) throw RejectedInputError("concat_bn: no inputs");
  std::vector<Tensor<T>> g, b, m, v;
  for (const auto& p : parts) {
    g.push_back(p.gamma);
    b.push_back(p.beta);
    m.push_back(p.running_mean);
    v.push_back(p.running_var);
  }
  BatchNormState<T> out;
  out.gamma = concat_outer<T>(g);
  out.beta = concat_outer<T>(b);
  out.running_mean = concat_outer<T>(m);
  out.running_var = concat_outer<T>(v);
  out.epsilon = parts.front().epsilon;
  out.momentum = parts.front().momentum;
  return out;
}

template <typename T>
BatchNormResult<T> batchnorm_forward(const Tensor<T>& input, const BatchNormState<T>& state, Mode mode) {
  if (input.rank() != 4 || input.c() != state.channels())
    throw RejectedInputError("batchnorm input " + shape_str(input.shape()) + " vs " +
                             std::to_string(state.channels()) + " channels");
  const std::size_t N = input.n(), C = input.c(), plane = input.h() * input.w();
  const std::size_t count = N * plane;

  BatchNormResult<T> r{Tensor<T>(input.shape()), state, {mode, Tensor<T>(input.shape()), std::vector<double>(C)}};
  for (std::size_t c = 0; c < C; ++c) {
    double mean, var;
    if (mode == Mode::Train) {
      double sum = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) sum += x[i];
      }
      mean = sum / static_cast<double>(count);
      double sq = 0;
      for (std::size_t n = 0; n < N; ++n) {
        const T* x = &input.at(n, c, 0, 0);
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = x[i] - mean;
          sq += d * d;
        }
      }
      var = sq / static_cast<double>(count);
      const double unbiased = count > 1 ? sq / static_cast<double>(count - 1) : var;
      r.state.running_mean[c] =
          static_cast<T>(state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mean);
      r.state.running_var[c] =
          static_cast<T>(state.momentum * state.running_var[c] + (1.0 - state.momentum) * unbiased);
    } else {
      mean = state.running_mean[c];
      var = state.running_var[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + state.epsilon);
    r.cache.inv_std[c] = inv_std;
    const double gamma = state.gamma[c], beta = state.beta[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* x = &input.at(n, c, 0, 0);
      T* xh = &r.cache.x_hat.at(n, c, 0, 0);
      T* y = &r.output.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        const double h = (x[i] - mean) * inv_std;
        xh[i] = static_cast<T>(h);
        y[i] = static_cast<T>(gamma * h + beta);
      }
    }
  }
  return r;
}

template <typename T>
BatchNormGrads<T> batchnorm_backward(const BatchNormCache<T>& cache, const BatchNormState<T>& state,
                                     const Tensor<T>& grad_out) {
  const auto& xh = cache.x_hat;
  if (grad_out.shape() != xh.shape())
    throw RejectedInputError("batchnorm grad_out " + shape_str(grad_out.shape()) + " expected " +
                             shape_str(xh.shape()));
  const std::size_t N = xh.n(), C = xh.c(), plane = xh.h() * xh.w();
  const double count = static_cast<double>(N * plane);
  BatchNormGrads<T> g{Tensor<T>(xh.shape()), Tensor<T>({C}), Tensor<T>({C})};

  for (std::size_t c = 0; c < C; ++c) {
    double sum_dy = 0, sum_dy_xh = 0;
    for (std::size_t n = 0; n < N; ++n) {
      const T* dy = &grad_out.at(n, c, 0, 0);
      const T* h = &xh.at(n, c, 0, 0);
      for (std::size_t i = 0; i < plane; ++i) {
        sum_dy += dy[i];
        sum_dy_xh += static_cast<double>(dy[i]) * h[i];
      }
    }
    g.gamma[c] = static_cast<T>(sum_dy_xh);
    g.beta[c] = static_cast<T>(sum_dy);
    const double scale = state.gamma[c] * cache.inv_std[c];
    for (std::size_t n = 0; n < N; ++n) {
      const T* dy = &grad_out.at(n, c, 0, 0);
      const T* h = &xh.at(n, c, 0, 0);
      T* dx = &g.input.at(n, c, 0, 0);
      if (cache.mode == Mode::Train) {
        for (std::size_t i = 0; i < plane; ++i)
          dx[i] = static_cast<T>(scale * (dy[i] - sum_dy / count - h[i] * sum_dy_xh / count));
      } else {
        for (std::size_t i = 0; i < plane; ++i) dx[i] = static_cast<T>(scale * dy[i]);
      }
    }
  }
  return g;
}

#define RESNEXT_INSTANTIATE(T)                                                                              \
  template struct BatchNormState<T>;                                                                        \
  template BatchNormState<T> slice_bn<T>(const BatchNormState<T>&, std::size_t, std::size_t);               \
  template BatchNormState<T> concat_bn<T>(std::span<const BatchNormState<T>>);                              \
  template BatchNormResult<T> batchnorm_forward<T>(const Tensor<T>&, const BatchNormState<T>&, Mode);       \
  template BatchNormGrads<T> batchnorm_backward<T>(const BatchNormCache<T>&, const BatchNormState<T>&,      \
                                                   const Tensor<T>&);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
