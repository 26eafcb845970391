// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "resnext/batchnorm.hpp"
#include "resnext/conv.hpp"
#include "resnext/ntf.hpp"
#include "resnext/tensor.hpp"

namespace resnext {

/// The three equivalent realizations of an aggregated residual block.
enum class BlockForm {
  AggregateSum,  // C separate 1x1 -> 3x3 -> 1x1 paths, outputs summed
  ConcatMerge,   // C separate 1x1 -> 3x3 paths, concatenated, one wide 1x1 merge
  GroupedConv,   // 1x1 -> grouped 3x3 (groups = C) -> 1x1
};

std::string_view form_name(BlockForm f);
/// Accepts "a"/"b"/"c" or the enumerator names in snake case.
BlockForm parse_form(std::string_view s);

enum class Shortcut { Identity, Projection, None };

std::string_view shortcut_name(Shortcut s);

struct BlockSpec {
  std::size_t in_width = 256;
  std::size_t cardinality = 1;
  std::size_t bottleneck_width = 64;
  std::size_t out_width = 256;
  std::size_t stride = 1;
  Shortcut shortcut = Shortcut::Identity;
  bool with_bn = true;
  bool with_relu = true;

  /// Identity shortcut when shapes allow it, projection otherwise.
  static BlockSpec make(std::size_t in_width, std::size_t cardinality, std::size_t bottleneck_width,
                        std::size_t out_width, std::size_t stride = 1);

  void validate() const;
  std::size_t group_width() const { return cardinality * bottleneck_width; }

  // Layer shapes. "Branch" convs are per path in forms a/b and the single
  // wide conv in form c.
  ConvSpec branch_conv1(BlockForm form) const;
  ConvSpec branch_conv2(BlockForm form) const;
  /// d -> out for form a, C*d -> out for b and c.
  ConvSpec conv3(BlockForm form) const;
  ConvSpec projection() const;
  std::size_t branch_count(BlockForm form) const { return form == BlockForm::GroupedConv ? 1 : cardinality; }

  std::string str() const;
  friend bool operator==(const BlockSpec&, const BlockSpec&) = default;
};

/// Weights of one block in one form.
///
/// conv1/conv2/bn1/bn2 hold one entry per branch (C for forms a and b, one
/// for form c). conv3 holds C entries for form a and a single merge weight
/// otherwise. bn3 normalizes the aggregated residual, before the shortcut
/// addition. path_bn3 is the alternative placement (one BN per path before
/// summation); it is accepted for form a but cannot be converted.
template <typename T>
struct BlockWeights {
  BlockForm form = BlockForm::GroupedConv;
  std::vector<Tensor<T>> conv1, conv2, conv3;
  std::vector<BatchNormState<T>> bn1, bn2;
  std::optional<BatchNormState<T>> bn3;
  std::vector<BatchNormState<T>> path_bn3;
  std::optional<Tensor<T>> proj;
  std::optional<BatchNormState<T>> proj_bn;

  friend bool operator==(const BlockWeights&, const BlockWeights&) = default;
};

/// He-normal conv weights (std = sqrt(2 / (k*k*in_per_group))), BN gamma 1, beta 0.
template <typename T>
BlockWeights<T> build_block(const BlockSpec& spec, BlockForm form, std::uint64_t seed);

/// Exact conversion between forms by concatenation/slicing of weights.
template <typename T>
BlockWeights<T> convert_weights(const BlockWeights<T>& w, const BlockSpec& spec, BlockForm to);

/// Throws RejectedInputError if `w` does not fit `spec` in its form.
template <typename T>
void check_block_weights(const BlockWeights<T>& w, const BlockSpec& spec);

/// Intermediate activations of one branch.
template <typename T>
struct BranchCache {
  Tensor<T> act1_pre, act1;  // before/after the inner ReLU
  Tensor<T> act2_pre, act2;
  BatchNormCache<T> bn1, bn2;
};

template <typename T>
struct BlockCache {
  Tensor<T> input;
  std::vector<BranchCache<T>> branches;
  std::vector<BatchNormCache<T>> path_bn3;
  Tensor<T> merge_in;                    // form b, concatenated branch outputs
  Tensor<T> aggregate;                   // residual before bn3
  BatchNormCache<T> bn3;
  Tensor<T> proj_out;
  BatchNormCache<T> proj_bn;
  Tensor<T> pre_relu;                    // shortcut + residual
};

template <typename T>
struct BlockResult {
  Tensor<T> output;
  BlockWeights<T> weights;  // running statistics advanced in train mode
  BlockCache<T> cache;
};

/// y = relu(shortcut(x) + F(x)); form a evaluates every path and sums them in
/// path order.
template <typename T>
BlockResult<T> block_forward(const BlockWeights<T>& w, const BlockSpec& spec, const Tensor<T>& input, Mode mode);

/// Residual branch F(x) only: no shortcut and no output ReLU.
template <typename T>
Tensor<T> block_residual(const BlockWeights<T>& w, const BlockSpec& spec, const Tensor<T>& input, Mode mode);

template <typename T>
struct BlockGrads {
  Tensor<T> input;
  BlockWeights<T> weights;  // same layout as the forward weights; BN grads in gamma/beta
};

template <typename T>
BlockGrads<T> block_backward(const BlockWeights<T>& w, const BlockSpec& spec, const BlockCache<T>& cache,
                             const Tensor<T>& grad_out);

/// What a tensor inside BlockWeights is, for optimizers and serializers.
enum class TensorRole { ConvWeight, BnGamma, BnBeta, BnMean, BnVar };

/// Visits every tensor with its "layer.path.kind" name; layer 0 is the
/// projection shortcut.
template <typename T, typename F>
void for_each_tensor(BlockWeights<T>& w, F&& fn);

template <typename T>
NamedTensors block_to_named(const BlockWeights<T>& w, const std::string& prefix = "");
template <typename T>
BlockWeights<T> block_from_named(const NamedTensors& entries, const BlockSpec& spec, BlockForm form,
                                 const std::string& prefix = "");

// ---------------------------------------------------------------------------

namespace detail {

template <typename T, typename F>
void visit_bn(BatchNormState<T>& s, const std::string& base, F& fn) {
  fn(base + "bn_gamma", s.gamma, TensorRole::BnGamma);
  fn(base + "bn_beta", s.beta, TensorRole::BnBeta);
  fn(base + "bn_mean", s.running_mean, TensorRole::BnMean);
  fn(base + "bn_var", s.running_var, TensorRole::BnVar);
}

}  // namespace detail

template <typename T, typename F>
void for_each_tensor(BlockWeights<T>& w, F&& fn) {
  if (w.proj) fn(std::string("0.0.w"), *w.proj, TensorRole::ConvWeight);
  if (w.proj_bn) detail::visit_bn(*w.proj_bn, "0.0.", fn);
  for (std::size_t i = 0; i < w.conv1.size(); ++i) {
    const std::string p = "1." + std::to_string(i) + ".";
    fn(p + "w", w.conv1[i], TensorRole::ConvWeight);
    if (i < w.bn1.size()) detail::visit_bn(w.bn1[i], p, fn);
  }
  for (std::size_t i = 0; i < w.conv2.size(); ++i) {
    const std::string p = "2." + std::to_string(i) + ".";
    fn(p + "w", w.conv2[i], TensorRole::ConvWeight);
    if (i < w.bn2.size()) detail::visit_bn(w.bn2[i], p, fn);
  }
  for (std::size_t i = 0; i < w.conv3.size(); ++i) fn("3." + std::to_string(i) + ".w", w.conv3[i], TensorRole::ConvWeight);
  if (w.bn3) detail::visit_bn(*w.bn3, "3.0.", fn);
}

}  // namespace resnext
