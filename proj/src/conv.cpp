// SPDX-License-Identifier: Apache-2.0
#include "resnext/conv.hpp"

#include <algorithm>
#include <sstream>

#include "resnext/kernels.hpp"

namespace resnext {

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 || groups == 0)
    throw InvalidSpecError("conv spec has a zero field: " + str());
  if (in_channels % groups != 0 || out_channels % groups != 0)
    throw InvalidSpecError("groups must divide in and out channels: " + str());
  if (stride > 2) throw InvalidSpecError("conv stride must be 1 or 2: " + str());
}

std::size_t ConvSpec::out_extent(std::size_t in) const {
  if (in + 2 * padding < kernel)
    throw InvalidSpecError("input extent " + std::to_string(in) + " too small for " + str());
  return (in + 2 * padding - kernel) / stride + 1;
}

std::uint64_t ConvSpec::param_count() const {
  return static_cast<std::uint64_t>(out_channels) * in_per_group() * kernel * kernel;
}

std::uint64_t ConvSpec::macs(std::size_t out_h, std::size_t out_w) const {
  return param_count() * out_h * out_w;
}

std::string ConvSpec::str() const {
  std::ostringstream os;
  os << "conv(" << in_channels << "->" << out_channels << ", k=" << kernel << ", s=" << stride
     << ", p=" << padding << ", g=" << groups << ")";
  return os.str();
}

namespace {

template <typename T>
void check_conv_args(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec) {
  spec.validate();
  if (input.rank() != 4 || input.c() != spec.in_channels)
    throw RejectedInputError("conv input " + shape_str(input.shape()) + " does not match " + spec.str());
  if (weight.shape() != spec.weight_shape())
    throw RejectedInputError("conv weight " + shape_str(weight.shape()) + " expected " +
                             shape_str(spec.weight_shape()) + " for " + spec.str());
  spec.out_extent(input.h());
  spec.out_extent(input.w());
}

/// Output columns [lo, hi) whose input column ow*s + kw - p lies in [0, width).
struct ColRange {
  std::size_t lo, hi;
};

ColRange valid_cols(std::size_t out_w, std::size_t in_w, std::size_t kw, const ConvSpec& s) {
  // iw = ow*stride + kw - pad >= 0  ->  ow >= ceil((pad - kw) / stride)
  std::size_t lo = 0;
  if (s.padding > kw) lo = (s.padding - kw + s.stride - 1) / s.stride;
  // iw < in_w  ->  ow*stride < in_w + pad - kw
  std::size_t hi = 0;
  if (in_w + s.padding > kw) hi = (in_w + s.padding - kw - 1) / s.stride + 1;
  hi = std::min(hi, out_w);
  if (lo > hi) lo = hi;
  return {lo, hi};
}

}  // namespace

template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec) {
  check_conv_args(input, weight, spec);
  const std::size_t N = input.n(), H = input.h(), W = input.w();
  const std::size_t OH = spec.out_extent(H), OW = spec.out_extent(W);
  const std::size_t K = spec.kernel, S = spec.stride, P = spec.padding;
  const std::size_t icpg = spec.in_per_group(), ocpg = spec.out_per_group();
  Tensor<T> out({N, spec.out_channels, OH, OW});

  const bool pointwise = K == 1 && S == 1 && P == 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t g = 0; g < spec.groups; ++g) {
      for (std::size_t ocl = 0; ocl < ocpg; ++ocl) {
        const std::size_t oc = g * ocpg + ocl;
        T* dst = &out.at(n, oc, 0, 0);
        for (std::size_t icl = 0; icl < icpg; ++icl) {
          const std::size_t ic = g * icpg + icl;
          const T* src = &input.at(n, ic, 0, 0);
          const T* wk = weight.ptr() + (oc * icpg + icl) * K * K;
          if (pointwise) {
            kernels::axpy(wk[0], std::span<const T>(src, H * W), std::span<T>(dst, OH * OW));
            continue;
          }
          for (std::size_t kh = 0; kh < K; ++kh) {
            for (std::size_t kw = 0; kw < K; ++kw) {
              const T wv = wk[kh * K + kw];
              const auto cols = valid_cols(OW, W, kw, spec);
              if (cols.lo >= cols.hi) continue;
              for (std::size_t oh = 0; oh < OH; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) - static_cast<std::ptrdiff_t>(P);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                const T* srow = src + ih * W;
                T* drow = dst + oh * OW;
                const std::size_t iw0 = cols.lo * S + kw - P;
                if (S == 1) {
                  kernels::axpy(wv, std::span<const T>(srow + iw0, cols.hi - cols.lo),
                                std::span<T>(drow + cols.lo, cols.hi - cols.lo));
                } else {
                  for (std::size_t ow = cols.lo, iw = iw0; ow < cols.hi; ++ow, iw += S) drow[ow] += wv * srow[iw];
                }
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> conv2d_forward_im2col(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec) {
  check_conv_args(input, weight, spec);
  const std::size_t N = input.n(), H = input.h(), W = input.w();
  const std::size_t OH = spec.out_extent(H), OW = spec.out_extent(W);
  const std::size_t K = spec.kernel, S = spec.stride, P = spec.padding;
  const std::size_t icpg = spec.in_per_group(), ocpg = spec.out_per_group();
  const std::size_t rows = icpg * K * K, cols = OH * OW;
  Tensor<T> out({N, spec.out_channels, OH, OW});
  std::vector<T> col(rows * cols);

  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t g = 0; g < spec.groups; ++g) {
      for (std::size_t icl = 0; icl < icpg; ++icl) {
        const T* src = &input.at(n, g * icpg + icl, 0, 0);
        for (std::size_t kh = 0; kh < K; ++kh)
          for (std::size_t kw = 0; kw < K; ++kw) {
            T* crow = col.data() + ((icl * K + kh) * K + kw) * cols;
            for (std::size_t oh = 0; oh < OH; ++oh)
              for (std::size_t ow = 0; ow < OW; ++ow) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) - static_cast<std::ptrdiff_t>(P);
                const std::ptrdiff_t iw = static_cast<std::ptrdiff_t>(ow * S + kw) - static_cast<std::ptrdiff_t>(P);
                const bool inside = ih >= 0 && iw >= 0 && ih < static_cast<std::ptrdiff_t>(H) &&
                                    iw < static_cast<std::ptrdiff_t>(W);
                crow[oh * OW + ow] = inside ? src[ih * W + iw] : T{0};
              }
          }
      }
      for (std::size_t ocl = 0; ocl < ocpg; ++ocl) {
        const std::size_t oc = g * ocpg + ocl;
        const T* wrow = weight.ptr() + oc * rows;
        std::span<T> dst(&out.at(n, oc, 0, 0), cols);
        for (std::size_t r = 0; r < rows; ++r)
          kernels::axpy(wrow[r], std::span<const T>(col.data() + r * cols, cols), dst);
      }
    }
  }
  return out;
}

template <typename T>
ConvGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& weight, const ConvSpec& spec,
                             const Tensor<T>& grad_out) {
  check_conv_args(input, weight, spec);
  const std::size_t N = input.n(), H = input.h(), W = input.w();
  const std::size_t OH = spec.out_extent(H), OW = spec.out_extent(W);
  if (grad_out.shape() != Shape{N, spec.out_channels, OH, OW})
    throw RejectedInputError("conv grad_out " + shape_str(grad_out.shape()) + " expected " +
                             shape_str({N, spec.out_channels, OH, OW}));
  const std::size_t K = spec.kernel, S = spec.stride, P = spec.padding;
  const std::size_t icpg = spec.in_per_group(), ocpg = spec.out_per_group();
  ConvGrads<T> g{Tensor<T>(input.shape()), Tensor<T>(weight.shape())};

  const bool pointwise = K == 1 && S == 1 && P == 0;
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t grp = 0; grp < spec.groups; ++grp) {
      for (std::size_t ocl = 0; ocl < ocpg; ++ocl) {
        const std::size_t oc = grp * ocpg + ocl;
        const T* go = &grad_out.at(n, oc, 0, 0);
        for (std::size_t icl = 0; icl < icpg; ++icl) {
          const std::size_t ic = grp * icpg + icl;
          const T* src = &input.at(n, ic, 0, 0);
          T* gi = &g.input.at(n, ic, 0, 0);
          const std::size_t widx = (oc * icpg + icl) * K * K;
          const T* wk = weight.ptr() + widx;
          T* gw = g.weight.ptr() + widx;
          if (pointwise) {
            kernels::axpy(wk[0], std::span<const T>(go, OH * OW), std::span<T>(gi, H * W));
            gw[0] += kernels::dot(std::span<const T>(go, OH * OW), std::span<const T>(src, H * W));
            continue;
          }
          for (std::size_t kh = 0; kh < K; ++kh) {
            for (std::size_t kw = 0; kw < K; ++kw) {
              const T wv = wk[kh * K + kw];
              const auto cols = valid_cols(OW, W, kw, spec);
              if (cols.lo >= cols.hi) continue;
              const std::size_t len = cols.hi - cols.lo;
              T acc = 0;
              for (std::size_t oh = 0; oh < OH; ++oh) {
                const std::ptrdiff_t ih = static_cast<std::ptrdiff_t>(oh * S + kh) - static_cast<std::ptrdiff_t>(P);
                if (ih < 0 || ih >= static_cast<std::ptrdiff_t>(H)) continue;
                const std::size_t iw0 = cols.lo * S + kw - P;
                const T* srow = src + ih * W + iw0;
                T* girow = gi + ih * W + iw0;
                const T* gorow = go + oh * OW + cols.lo;
                if (S == 1) {
                  kernels::axpy(wv, std::span<const T>(gorow, len), std::span<T>(girow, len));
                  acc += kernels::dot(std::span<const T>(gorow, len), std::span<const T>(srow, len));
                } else {
                  for (std::size_t j = 0; j < len; ++j) {
                    girow[j * S] += wv * gorow[j];
                    acc += gorow[j] * srow[j * S];
                  }
                }
              }
              gw[kh * K + kw] += acc;
            }
          }
        }
      }
    }
  }
  return g;
}

template <typename T>
Tensor<T> embed_block_diagonal(const Tensor<T>& weight, const ConvSpec& spec) {
  spec.validate();
  if (weight.shape() != spec.weight_shape())
    throw RejectedInputError("embed_block_diagonal: weight " + shape_str(weight.shape()));
  const std::size_t K = spec.kernel, icpg = spec.in_per_group(), ocpg = spec.out_per_group();
  Tensor<T> dense({spec.out_channels, spec.in_channels, K, K});
  for (std::size_t oc = 0; oc < spec.out_channels; ++oc) {
    const std::size_t g = oc / ocpg;
    for (std::size_t icl = 0; icl < icpg; ++icl) {
      const T* src = weight.ptr() + (oc * icpg + icl) * K * K;
      T* dst = dense.ptr() + (oc * spec.in_channels + g * icpg + icl) * K * K;
      std::copy(src, src + K * K, dst);
    }
  }
  return dense;
}

#define RESNEXT_INSTANTIATE(T)                                                                        \
  template Tensor<T> conv2d_forward<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&);          \
  template Tensor<T> conv2d_forward_im2col<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&);   \
  template ConvGrads<T> conv2d_backward<T>(const Tensor<T>&, const Tensor<T>&, const ConvSpec&,       \
                                           const Tensor<T>&);                                         \
  template Tensor<T> embed_block_diagonal<T>(const Tensor<T>&, const ConvSpec&);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
