// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "resnext/arch.hpp"
#include "resnext/batchnorm.hpp"
#include "resnext/block.hpp"
#include "resnext/layers.hpp"

namespace resnext {

/// How the optimizer treats a tensor.
enum class ParamKind {
  Decayed,  // conv and fc weights
  Plain,    // BN gamma/beta, fc bias: trained without weight decay
  Buffer,   // BN running statistics: not trained
};

/// Every tensor of a network, in a fixed order.
template <typename T>
struct NetworkParams {
  Tensor<T> stem_w;
  BatchNormState<T> stem_bn;
  std::vector<BlockWeights<T>> blocks;
  Tensor<T> fc_w;  // (classes, features)
  Tensor<T> fc_b;

  friend bool operator==(const NetworkParams&, const NetworkParams&) = default;
};

/// Visits (name, tensor, kind) in a fixed order.
template <typename T, typename F>
void for_each_param(NetworkParams<T>& p, F&& fn);

template <typename T>
struct NetworkCache {
  Tensor<T> input;
  Tensor<T> stem_pre;  // after stem BN, before ReLU
  BatchNormCache<T> stem_bn;
  Tensor<T> stem_act;
  Shape pool_in_shape;
  std::vector<std::uint32_t> pool_argmax;
  std::vector<BlockCache<T>> blocks;
  Shape gap_in_shape;
  Tensor<T> features;
};

/// A full classifier: stem, stages of aggregated blocks, global average
/// pool, fully-connected head.
template <typename T>
class Network {
 public:
  /// He-normal init for every conv and the fc weight, zero fc bias.
  static Network build(const ArchSpec& arch, BlockForm form, bool shortcuts, std::uint64_t seed);

  const ArchSpec& arch() const { return arch_; }
  BlockForm form() const { return form_; }
  bool shortcuts() const { return shortcuts_; }
  const std::vector<BlockSpec>& block_specs() const { return block_specs_; }

  NetworkParams<T>& params() { return params_; }
  const NetworkParams<T>& params() const { return params_; }

  /// Logits (N, classes). Train mode advances BN running statistics.
  Tensor<T> forward(const Tensor<T>& input, Mode mode, NetworkCache<T>* cache = nullptr);
  /// Gradients in the layout of params(); buffers come back zeroed.
  NetworkParams<T> backward(const NetworkCache<T>& cache, const Tensor<T>& grad_logits) const;

  std::uint64_t trainable_count();

  NamedTensors to_named() const;
  void load_named(const NamedTensors& entries);

 private:
  ArchSpec arch_;
  BlockForm form_ = BlockForm::GroupedConv;
  bool shortcuts_ = true;
  std::vector<BlockSpec> block_specs_;
  NetworkParams<T> params_;
};

// ---------------------------------------------------------------------------

template <typename T, typename F>
void for_each_param(NetworkParams<T>& p, F&& fn) {
  fn(std::string("stem.w"), p.stem_w, ParamKind::Decayed);
  fn(std::string("stem.bn_gamma"), p.stem_bn.gamma, ParamKind::Plain);
  fn(std::string("stem.bn_beta"), p.stem_bn.beta, ParamKind::Plain);
  fn(std::string("stem.bn_mean"), p.stem_bn.running_mean, ParamKind::Buffer);
  fn(std::string("stem.bn_var"), p.stem_bn.running_var, ParamKind::Buffer);
  for (std::size_t b = 0; b < p.blocks.size(); ++b) {
    const std::string prefix = "block" + std::to_string(b) + ".";
    for_each_tensor(p.blocks[b], [&](const std::string& name, Tensor<T>& t, TensorRole role) {
      ParamKind kind = ParamKind::Decayed;
      if (role == TensorRole::BnGamma || role == TensorRole::BnBeta) kind = ParamKind::Plain;
      if (role == TensorRole::BnMean || role == TensorRole::BnVar) kind = ParamKind::Buffer;
      fn(prefix + name, t, kind);
    });
  }
  fn(std::string("fc.w"), p.fc_w, ParamKind::Decayed);
  fn(std::string("fc.b"), p.fc_b, ParamKind::Plain);
}

}  // namespace resnext
