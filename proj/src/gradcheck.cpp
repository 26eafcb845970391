// SPDX-License-Identifier: Apache-2.0
#include "resnext/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "resnext/batchnorm.hpp"
#include "resnext/block.hpp"
#include "resnext/conv.hpp"
#include "resnext/layers.hpp"

namespace resnext {

namespace {

struct OpInfo {
  GradOp op;
  std::string_view name;
  double tolerance;
};

constexpr OpInfo kOps[] = {
    {GradOp::Conv2d, "conv2d", 1e-6},
    {GradOp::BatchNormTrain, "batchnorm", 1e-5},
    {GradOp::BatchNormInfer, "batchnorm_infer", 1e-5},
    {GradOp::Relu, "relu", 1e-5},
    {GradOp::Add, "add", 1e-5},
    {GradOp::MaxPool, "maxpool", 1e-5},
    {GradOp::GlobalAvgPool, "global_avg_pool", 1e-5},
    {GradOp::Linear, "linear", 1e-7},
    {GradOp::SoftmaxCrossEntropy, "softmax_cross_entropy", 1e-5},
    {GradOp::BlockAggregateSum, "block_a", 1e-5},
    {GradOp::BlockConcatMerge, "block_b", 1e-5},
    {GradOp::BlockGroupedConv, "block_c", 1e-5},
};

const OpInfo& info(GradOp op) {
  for (const auto& i : kOps)
    if (i.op == op) return i;
  throw InvalidSpecError("unknown gradcheck op");
}

double dot_all(const Tensor<double>& a, const Tensor<double>& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Entries in +-[0.1, 1], away from the ReLU kink.
Tensor<double> away_from_zero(const Shape& s, std::mt19937_64& rng) {
  auto t = random_uniform<double>(s, rng, 0.1, 1.0);
  std::bernoulli_distribution sign(0.5);
  for (auto& v : t.data())
    if (sign(rng)) v = -v;
  return t;
}

GradcheckReport check_conv(const GradcheckOptions& o, std::mt19937_64& rng) {
  ConvSpec spec{4, 4, 3, o.stride ? o.stride : 1, 1, o.groups ? o.groups : 2};
  auto x = random_normal<double>({1, 4, 4, 4}, rng);
  auto w = random_normal<double>(spec.weight_shape(), rng);
  const auto out_shape = conv2d_forward(x, w, spec).shape();
  auto r = random_normal<double>(out_shape, rng);
  auto g = conv2d_backward(x, w, spec, r);
  std::vector<GradVar> vars{{"input", &x, g.input}, {"weight", &w, g.weight}};
  return compare_gradients("conv2d", vars, [&] { return dot_all(conv2d_forward(x, w, spec), r); }, o.step);
}

GradcheckReport check_bn(const GradcheckOptions& o, std::mt19937_64& rng, Mode mode) {
  auto x = random_normal<double>({4, 3, 2, 2}, rng, 2.0);
  auto state = BatchNormState<double>::fresh(3);
  state.gamma = random_uniform<double>({3}, rng, 0.5, 1.5);
  state.beta = random_normal<double>({3}, rng);
  state.running_mean = random_normal<double>({3}, rng, 0.5);
  state.running_var = random_uniform<double>({3}, rng, 0.5, 2.0);
  auto r = random_normal<double>(x.shape(), rng);
  auto fwd = batchnorm_forward(x, state, mode);
  auto g = batchnorm_backward(fwd.cache, state, r);
  std::vector<GradVar> vars{{"input", &x, g.input}, {"gamma", &state.gamma, g.gamma}, {"beta", &state.beta, g.beta}};
  return compare_gradients(mode == Mode::Train ? "batchnorm" : "batchnorm_infer", vars,
                           [&] { return dot_all(batchnorm_forward(x, state, mode).output, r); }, o.step);
}

GradcheckReport check_block(const GradcheckOptions& o, std::mt19937_64& rng, BlockForm form, std::string name) {
  auto spec = BlockSpec::make(4, 2, 2, 8, o.stride ? o.stride : 2);
  auto w = build_block<double>(spec, form, rng());
  // Non-trivial affine parameters so their gradients are exercised.
  for_each_tensor(w, [&](const std::string&, Tensor<double>& t, TensorRole role) {
    if (role == TensorRole::BnGamma) t = random_uniform<double>(t.shape(), rng, 0.5, 1.5);
    if (role == TensorRole::BnBeta) t = random_normal<double>(t.shape(), rng, 0.2);
  });
  auto x = random_normal<double>({2, 4, 4, 4}, rng);
  auto fwd = block_forward(w, spec, x, Mode::Train);
  auto r = random_normal<double>(fwd.output.shape(), rng);
  auto g = block_backward(w, spec, fwd.cache, r);

  std::vector<GradVar> vars{{"input", &x, g.input}};
  std::vector<std::pair<std::string, Tensor<double>*>> params;
  for_each_tensor(w, [&](const std::string& n, Tensor<double>& t, TensorRole role) {
    if (role == TensorRole::ConvWeight || role == TensorRole::BnGamma || role == TensorRole::BnBeta)
      params.emplace_back(n, &t);
  });
  std::vector<Tensor<double>> grads;
  for_each_tensor(g.weights, [&](const std::string&, Tensor<double>& t, TensorRole role) {
    if (role == TensorRole::ConvWeight || role == TensorRole::BnGamma || role == TensorRole::BnBeta)
      grads.push_back(t);
  });
  for (std::size_t i = 0; i < params.size(); ++i) vars.push_back({params[i].first, params[i].second, grads[i]});
  return compare_gradients(std::move(name), vars,
                           [&] { return dot_all(block_forward(w, spec, x, Mode::Train).output, r); }, o.step);
}

}  // namespace

std::string_view grad_op_name(GradOp op) { return info(op).name; }

GradOp parse_grad_op(std::string_view name) {
  for (const auto& i : kOps)
    if (i.name == name) return i.op;
  if (name == "gap") return GradOp::GlobalAvgPool;
  if (name == "softmax_ce") return GradOp::SoftmaxCrossEntropy;
  throw InvalidSpecError("unknown gradcheck op '" + std::string(name) + "'");
}

std::vector<GradOp> all_grad_ops() {
  std::vector<GradOp> ops;
  for (const auto& i : kOps) ops.push_back(i.op);
  return ops;
}

double gradcheck_tolerance(GradOp op) { return info(op).tolerance; }

GradcheckReport compare_gradients(std::string op, std::vector<GradVar>& vars, const std::function<double()>& loss,
                                  double step) {
  GradcheckReport rep;
  rep.op = std::move(op);
  for (auto& v : vars) {
    if (v.analytic.shape() != v.value->shape())
      throw RejectedInputError("gradcheck: analytic gradient for " + v.name + " has shape " +
                               shape_str(v.analytic.shape()));
    for (std::size_t i = 0; i < v.value->size(); ++i) {
      double& coord = (*v.value)[i];
      const double saved = coord;
      coord = saved + step;
      const double up = loss();
      coord = saved - step;
      const double down = loss();
      coord = saved;
      const double numeric = (up - down) / (2 * step);
      const double a = v.analytic[i];
      const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      ++rep.coordinates;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst = v.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  return rep;
}

GradcheckReport gradcheck(GradOp op, const GradcheckOptions& o) {
  std::mt19937_64 rng(o.seed);
  switch (op) {
    case GradOp::Conv2d: return check_conv(o, rng);
    case GradOp::BatchNormTrain: return check_bn(o, rng, Mode::Train);
    case GradOp::BatchNormInfer: return check_bn(o, rng, Mode::Infer);
    case GradOp::Relu: {
      auto x = away_from_zero({2, 3, 4, 4}, rng);
      auto r = random_normal<double>(x.shape(), rng);
      std::vector<GradVar> vars{{"input", &x, relu_backward(x, r)}};
      return compare_gradients("relu", vars, [&] { return dot_all(relu_forward(x), r); }, o.step);
    }
    case GradOp::Add: {
      auto a = random_normal<double>({2, 3, 4, 4}, rng);
      auto b = random_normal<double>(a.shape(), rng);
      auto r = random_normal<double>(a.shape(), rng);
      std::vector<GradVar> vars{{"a", &a, r}, {"b", &b, r}};
      return compare_gradients("add", vars, [&] { return dot_all(add_forward(a, b), r); }, o.step);
    }
    case GradOp::MaxPool: {
      auto x = random_normal<double>({1, 2, 7, 7}, rng);
      auto fwd = maxpool3x3s2_forward(x);
      auto r = random_normal<double>(fwd.output.shape(), rng);
      std::vector<GradVar> vars{{"input", &x, maxpool3x3s2_backward<double>(x.shape(), fwd.argmax, r)}};
      return compare_gradients("maxpool", vars, [&] { return dot_all(maxpool3x3s2_forward(x).output, r); }, o.step);
    }
    case GradOp::GlobalAvgPool: {
      auto x = random_normal<double>({2, 3, 4, 4}, rng);
      auto r = random_normal<double>({2, 3}, rng);
      std::vector<GradVar> vars{{"input", &x, global_avg_pool_backward(x.shape(), r)}};
      return compare_gradients("global_avg_pool", vars, [&] { return dot_all(global_avg_pool_forward(x), r); },
                               o.step);
    }
    case GradOp::Linear: {
      auto x = random_normal<double>({2, 8}, rng);
      auto w = random_normal<double>({4, 8}, rng);
      auto b = random_normal<double>({4}, rng);
      auto r = random_normal<double>({2, 4}, rng);
      auto g = linear_backward(x, w, r);
      std::vector<GradVar> vars{{"input", &x, g.input}, {"weight", &w, g.weight}, {"bias", &b, g.bias}};
      return compare_gradients("linear", vars, [&] { return dot_all(linear_forward(x, w, b), r); }, o.step);
    }
    case GradOp::SoftmaxCrossEntropy: {
      auto z = random_normal<double>({4, 5}, rng);
      std::vector<std::int32_t> labels(4);
      std::uniform_int_distribution<int> pick(0, 4);
      for (auto& l : labels) l = pick(rng);
      std::vector<GradVar> vars{{"logits", &z, softmax_cross_entropy<double>(z, labels).grad}};
      return compare_gradients("softmax_cross_entropy", vars,
                               [&] { return softmax_cross_entropy<double>(z, labels).loss; }, o.step);
    }
    case GradOp::BlockAggregateSum: return check_block(o, rng, BlockForm::AggregateSum, "block_a");
    case GradOp::BlockConcatMerge: return check_block(o, rng, BlockForm::ConcatMerge, "block_b");
    case GradOp::BlockGroupedConv: return check_block(o, rng, BlockForm::GroupedConv, "block_c");
  }
  throw InvalidSpecError("unknown gradcheck op");
}

}  // namespace resnext
