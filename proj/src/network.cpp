// SPDX-License-Identifier: Apache-2.0
#include "resnext/network.hpp"

#include <cmath>
#include <random>

namespace resnext {

template <typename T>
Network<T> Network<T>::build(const ArchSpec& arch, BlockForm form, bool shortcuts, std::uint64_t seed) {
  arch.validate();
  Network net;
  net.arch_ = arch;
  net.form_ = form;
  net.shortcuts_ = shortcuts;
  for (const auto& stage : arch.stages)
    for (const auto& spec : stage.blocks(shortcuts)) net.block_specs_.push_back(spec);

  std::mt19937_64 rng(seed);
  const auto stem = arch.stem.conv();
  net.params_.stem_w = random_normal<T>(stem.weight_shape(), rng,
                                        std::sqrt(2.0 / static_cast<double>(stem.kernel * stem.kernel * stem.in_channels)));
  net.params_.stem_bn = BatchNormState<T>::fresh(stem.out_channels);
  for (const auto& spec : net.block_specs_) net.params_.blocks.push_back(build_block<T>(spec, form, rng()));
  const std::size_t features = arch.feature_width();
  net.params_.fc_w = random_normal<T>({arch.classes, features}, rng, std::sqrt(2.0 / static_cast<double>(features)));
  net.params_.fc_b = Tensor<T>({arch.classes});
  return net;
}

template <typename T>
Tensor<T> Network<T>::forward(const Tensor<T>& input, Mode mode, NetworkCache<T>* cache) {
  const auto stem = arch_.stem.conv();
  if (input.rank() != 4 || input.c() != stem.in_channels)
    throw RejectedInputError("network input " + shape_str(input.shape()) + " expected (N, " +
                             std::to_string(stem.in_channels) + ", H, W)");
  NetworkCache<T> local;
  NetworkCache<T>& c = cache ? *cache : local;
  c.input = input;

  auto bn = batchnorm_forward(conv2d_forward(input, params_.stem_w, stem), params_.stem_bn, mode);
  params_.stem_bn = std::move(bn.state);
  c.stem_bn = std::move(bn.cache);
  c.stem_pre = std::move(bn.output);
  c.stem_act = relu_forward(c.stem_pre);
  Tensor<T> x = c.stem_act;
  if (arch_.stem.max_pool) {
    c.pool_in_shape = x.shape();
    auto pool = maxpool3x3s2_forward(x);
    c.pool_argmax = std::move(pool.argmax);
    x = std::move(pool.output);
  }

  c.blocks.resize(block_specs_.size());
  for (std::size_t b = 0; b < block_specs_.size(); ++b) {
    auto r = block_forward(params_.blocks[b], block_specs_[b], x, mode);
    params_.blocks[b] = std::move(r.weights);
    c.blocks[b] = std::move(r.cache);
    x = std::move(r.output);
  }
  c.gap_in_shape = x.shape();
  c.features = global_avg_pool_forward(x);
  return linear_forward(c.features, params_.fc_w, params_.fc_b);
}

template <typename T>
NetworkParams<T> Network<T>::backward(const NetworkCache<T>& c, const Tensor<T>& grad_logits) const {
  NetworkParams<T> g;
  auto lg = linear_backward(c.features, params_.fc_w, grad_logits);
  g.fc_w = std::move(lg.weight);
  g.fc_b = std::move(lg.bias);
  Tensor<T> gx = global_avg_pool_backward(c.gap_in_shape, lg.input);

  g.blocks.resize(block_specs_.size());
  for (std::size_t b = block_specs_.size(); b-- > 0;) {
    auto bg = block_backward(params_.blocks[b], block_specs_[b], c.blocks[b], gx);
    g.blocks[b] = std::move(bg.weights);
    gx = std::move(bg.input);
  }
  if (arch_.stem.max_pool) gx = maxpool3x3s2_backward<T>(c.pool_in_shape, c.pool_argmax, gx);
  gx = relu_backward(c.stem_pre, gx);
  auto sb = batchnorm_backward(c.stem_bn, params_.stem_bn, gx);
  g.stem_bn = BatchNormState<T>::fresh(params_.stem_bn.channels());
  g.stem_bn.gamma = std::move(sb.gamma);
  g.stem_bn.beta = std::move(sb.beta);
  g.stem_bn.running_mean.fill(T{0});
  g.stem_bn.running_var.fill(T{0});
  g.stem_w = conv2d_backward(c.input, params_.stem_w, arch_.stem.conv(), sb.input).weight;
  return g;
}

template <typename T>
std::uint64_t Network<T>::trainable_count() {
  std::uint64_t n = 0;
  for_each_param(params_, [&](const std::string&, Tensor<T>& t, ParamKind kind) {
    if (kind != ParamKind::Buffer) n += t.size();
  });
  return n;
}

template <typename T>
NamedTensors Network<T>::to_named() const {
  NamedTensors out;
  auto copy = params_;
  for_each_param(copy, [&](const std::string& name, Tensor<T>& t, ParamKind) { out.emplace_back(name, t); });
  return out;
}

template <typename T>
void Network<T>::load_named(const NamedTensors& entries) {
  for_each_param(params_, [&](const std::string& name, Tensor<T>& t, ParamKind) {
    const auto& src = find_tensor<T>(entries, name);
    if (src.shape() != t.shape())
      throw FormatError("checkpoint tensor '" + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(t.shape()));
    t = src;
  });
}

template class Network<float>;
template class Network<double>;

}  // namespace resnext
