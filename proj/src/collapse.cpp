// SPDX-License-Identifier: Apache-2.0
#include "resnext/collapse.hpp"

#include "resnext/layers.hpp"

namespace resnext {

namespace {

template <typename T>
void check_paths(std::span<const DensePath<T>> paths) {
  if (paths.empty()) throw InvalidSpecError("collapse_depth2: no paths");
  const auto& ref = paths.front();
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    if (p.layers.size() != 2)
      throw InvalidSpecError("collapse_depth2: path " + std::to_string(i) + " has depth " +
                             std::to_string(p.layers.size()) + "; only depth-2 paths collapse into one wider block");
    const auto& a = p.layers[0];
    const auto& b = p.layers[1];
    if (a.rank() != 2 || b.rank() != 2 || b.extent(1) != a.extent(0))
      throw RejectedInputError("collapse_depth2: path " + std::to_string(i) + " layer shapes " + shape_str(a.shape()) +
                               ", " + shape_str(b.shape()));
    if (a.extent(1) != ref.layers[0].extent(1) || b.extent(0) != ref.layers[1].extent(0))
      throw RejectedInputError("collapse_depth2: path " + std::to_string(i) + " input/output width differs from path 0");
  }
}

template <typename T>
Tensor<T> zero_bias(std::size_t n) {
  return Tensor<T>({n});
}

}  // namespace

template <typename T>
WideBlock<T> collapse_depth2(std::span<const DensePath<T>> paths) {
  check_paths(paths);
  std::vector<Tensor<T>> firsts, seconds;
  for (const auto& p : paths) {
    firsts.push_back(p.layers[0]);
    // (out, d) -> (out, d, 1, 1) so the column blocks concatenate on axis 1.
    const auto& b = p.layers[1];
    seconds.push_back(Tensor<T>({b.extent(0), b.extent(1), 1, 1}, b.vec()));
  }
  WideBlock<T> w;
  w.first = concat_outer<T>(firsts);
  auto merged = concat_channels<T>(seconds);
  w.second = Tensor<T>({merged.extent(0), merged.extent(1)}, merged.vec());
  return w;
}

template <typename T>
Tensor<T> multipath_forward(std::span<const DensePath<T>> paths, const Tensor<T>& x, bool inner_relu) {
  check_paths(paths);
  Tensor<T> sum;
  for (std::size_t i = 0; i < paths.size(); ++i) {
    const auto& p = paths[i];
    auto h = linear_forward(x, p.layers[0], zero_bias<T>(p.layers[0].extent(0)));
    if (inner_relu) h = relu_forward(h);
    auto y = linear_forward(h, p.layers[1], zero_bias<T>(p.layers[1].extent(0)));
    if (i == 0)
      sum = std::move(y);
    else
      add_inplace(sum, y);
  }
  return sum;
}

template <typename T>
Tensor<T> multipath_input_grad(std::span<const DensePath<T>> paths, const Tensor<T>& x, const Tensor<T>& grad_out,
                               bool inner_relu) {
  check_paths(paths);
  Tensor<T> gx(x.shape());
  for (const auto& p : paths) {
    auto pre = linear_forward(x, p.layers[0], zero_bias<T>(p.layers[0].extent(0)));
    auto h = inner_relu ? relu_forward(pre) : pre;
    auto gh = linear_backward(h, p.layers[1], grad_out).input;
    if (inner_relu) gh = relu_backward(pre, gh);
    add_inplace(gx, linear_backward(x, p.layers[0], gh).input);
  }
  return gx;
}

template <typename T>
Tensor<T> wide_forward(const WideBlock<T>& block, const Tensor<T>& x, bool inner_relu) {
  auto h = linear_forward(x, block.first, zero_bias<T>(block.first.extent(0)));
  if (inner_relu) h = relu_forward(h);
  return linear_forward(h, block.second, zero_bias<T>(block.second.extent(0)));
}

template <typename T>
Tensor<T> wide_input_grad(const WideBlock<T>& block, const Tensor<T>& x, const Tensor<T>& grad_out, bool inner_relu) {
  auto pre = linear_forward(x, block.first, zero_bias<T>(block.first.extent(0)));
  auto h = inner_relu ? relu_forward(pre) : pre;
  auto gh = linear_backward(h, block.second, grad_out).input;
  if (inner_relu) gh = relu_backward(pre, gh);
  return linear_backward(x, block.first, gh).input;
}

#define RESNEXT_INSTANTIATE(T)                                                                                      \
  template WideBlock<T> collapse_depth2<T>(std::span<const DensePath<T>>);                                          \
  template Tensor<T> multipath_forward<T>(std::span<const DensePath<T>>, const Tensor<T>&, bool);                   \
  template Tensor<T> multipath_input_grad<T>(std::span<const DensePath<T>>, const Tensor<T>&, const Tensor<T>&, bool); \
  template Tensor<T> wide_forward<T>(const WideBlock<T>&, const Tensor<T>&, bool);                                  \
  template Tensor<T> wide_input_grad<T>(const WideBlock<T>&, const Tensor<T>&, const Tensor<T>&, bool);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
