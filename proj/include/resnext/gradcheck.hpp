// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

enum class GradOp {
  Conv2d,
  BatchNormTrain,
  BatchNormInfer,
  Relu,
  Add,
  MaxPool,
  GlobalAvgPool,
  Linear,
  SoftmaxCrossEntropy,
  BlockAggregateSum,
  BlockConcatMerge,
  BlockGroupedConv,
};

std::string_view grad_op_name(GradOp op);
GradOp parse_grad_op(std::string_view name);
std::vector<GradOp> all_grad_ops();
/// Acceptance threshold on the max relative error for `op`.
double gradcheck_tolerance(GradOp op);

struct GradcheckOptions {
  std::uint64_t seed = 0;
  double step = 1e-5;
  // Overrides for the conv case; zero keeps the default.
  std::size_t groups = 0;
  std::size_t stride = 0;
};

struct GradcheckReport {
  std::string op;
  double max_rel_err = 0;
  std::size_t coordinates = 0;
  std::string worst;  // "<tensor>[<flat index>]" of the max error
};

/// Central-difference check of every input and parameter coordinate, in f64.
/// Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-8).
GradcheckReport gradcheck(GradOp op, const GradcheckOptions& options = {});

/// A differentiable quantity under test: its current value and the
/// analytic gradient of the scalar loss with respect to it.
struct GradVar {
  std::string name;
  Tensor<double>* value;
  Tensor<double> analytic;
};

/// Engine behind gradcheck(); exposed for tests of custom compositions.
GradcheckReport compare_gradients(std::string op, std::vector<GradVar>& vars, const std::function<double()>& loss,
                                  double step);

}  // namespace resnext
