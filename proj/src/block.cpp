// SPDX-License-Identifier: Apache-2.0
#include "resnext/block.hpp"

#include <cmath>
#include <random>
#include <sstream>

#include "resnext/layers.hpp"

namespace resnext {

std::string_view form_name(BlockForm f) {
  switch (f) {
    case BlockForm::AggregateSum: return "aggregate_sum";
    case BlockForm::ConcatMerge: return "concat_merge";
    case BlockForm::GroupedConv: return "grouped_conv";
  }
  return "?";
}

BlockForm parse_form(std::string_view s) {
  if (s == "a" || s == "aggregate_sum") return BlockForm::AggregateSum;
  if (s == "b" || s == "concat_merge") return BlockForm::ConcatMerge;
  if (s == "c" || s == "grouped_conv") return BlockForm::GroupedConv;
  throw InvalidSpecError("unknown block form '" + std::string(s) + "'");
}

std::string_view shortcut_name(Shortcut s) {
  switch (s) {
    case Shortcut::Identity: return "identity";
    case Shortcut::Projection: return "projection";
    case Shortcut::None: return "none";
  }
  return "?";
}

BlockSpec BlockSpec::make(std::size_t in_width, std::size_t cardinality, std::size_t bottleneck_width,
                          std::size_t out_width, std::size_t stride) {
  BlockSpec s;
  s.in_width = in_width;
  s.cardinality = cardinality;
  s.bottleneck_width = bottleneck_width;
  s.out_width = out_width;
  s.stride = stride;
  s.shortcut = (in_width == out_width && stride == 1) ? Shortcut::Identity : Shortcut::Projection;
  return s;
}

void BlockSpec::validate() const {
  if (in_width == 0 || out_width == 0 || cardinality == 0 || bottleneck_width == 0)
    throw InvalidSpecError("block widths and cardinality must be >= 1: " + str());
  if (stride != 1 && stride != 2) throw InvalidSpecError("block stride must be 1 or 2: " + str());
  if (shortcut == Shortcut::Identity && (in_width != out_width || stride != 1))
    throw InvalidSpecError("identity shortcut needs in_width == out_width and stride 1: " + str());
}

ConvSpec BlockSpec::branch_conv1(BlockForm form) const {
  const std::size_t width = form == BlockForm::GroupedConv ? group_width() : bottleneck_width;
  return {in_width, width, 1, 1, 0, 1};
}

ConvSpec BlockSpec::branch_conv2(BlockForm form) const {
  if (form == BlockForm::GroupedConv) return {group_width(), group_width(), 3, stride, 1, cardinality};
  return {bottleneck_width, bottleneck_width, 3, stride, 1, 1};
}

ConvSpec BlockSpec::conv3(BlockForm form) const {
  const std::size_t width = form == BlockForm::AggregateSum ? bottleneck_width : group_width();
  return {width, out_width, 1, 1, 0, 1};
}

ConvSpec BlockSpec::projection() const { return {in_width, out_width, 1, stride, 0, 1}; }

std::string BlockSpec::str() const {
  std::ostringstream os;
  os << "block(in=" << in_width << ", C=" << cardinality << ", d=" << bottleneck_width << ", out=" << out_width
     << ", stride=" << stride << ", shortcut=" << shortcut_name(shortcut) << ", bn=" << (with_bn ? "on" : "off")
     << ", relu=" << (with_relu ? "on" : "off") << ")";
  return os.str();
}

namespace {

template <typename T>
Tensor<T> he_normal(const ConvSpec& s, std::mt19937_64& rng) {
  const double fan_in = static_cast<double>(s.kernel * s.kernel * s.in_per_group());
  return random_normal<T>(s.weight_shape(), rng, std::sqrt(2.0 / fan_in));
}

void refuse_if_unconvertible(std::size_t path_bn3_count) {
  if (path_bn3_count > 0)
    throw ConversionRefusedError(
        "path_bn3 (layer 3): batch norm placed on each path before aggregation; the forms are only equivalent "
        "with one batch norm after the sum");
}

template <typename T>
BlockWeights<T> to_concat(const BlockWeights<T>& w, const BlockSpec& spec) {
  BlockWeights<T> out = w;
  out.form = BlockForm::ConcatMerge;
  const std::size_t C = spec.cardinality, d = spec.bottleneck_width;
  if (w.form == BlockForm::AggregateSum) {
    // Summing C projections == one projection of the concatenation.
    out.conv3 = {concat_channels<T>(w.conv3)};
  } else if (w.form == BlockForm::GroupedConv) {
    out.conv1.clear();
    out.conv2.clear();
    out.bn1.clear();
    out.bn2.clear();
    for (std::size_t i = 0; i < C; ++i) {
      out.conv1.push_back(slice_outer(w.conv1[0], i * d, d));
      out.conv2.push_back(slice_outer(w.conv2[0], i * d, d));
      if (!w.bn1.empty()) out.bn1.push_back(slice_bn(w.bn1[0], i * d, d));
      if (!w.bn2.empty()) out.bn2.push_back(slice_bn(w.bn2[0], i * d, d));
    }
  }
  return out;
}

template <typename T>
BlockWeights<T> from_concat(const BlockWeights<T>& w, const BlockSpec& spec, BlockForm to) {
  BlockWeights<T> out = w;
  out.form = to;
  const std::size_t C = spec.cardinality, d = spec.bottleneck_width;
  if (to == BlockForm::AggregateSum) {
    out.conv3.clear();
    for (std::size_t i = 0; i < C; ++i) out.conv3.push_back(slice_channels(w.conv3[0], i * d, d));
  } else if (to == BlockForm::GroupedConv) {
    // A grouped conv weight (C*d, d, 3, 3) is the per-path weights stacked.
    out.conv1 = {concat_outer<T>(w.conv1)};
    out.conv2 = {concat_outer<T>(w.conv2)};
    if (!w.bn1.empty()) out.bn1 = {concat_bn<T>(w.bn1)};
    if (!w.bn2.empty()) out.bn2 = {concat_bn<T>(w.bn2)};
  }
  return out;
}

}  // namespace

template <typename T>
void check_block_weights(const BlockWeights<T>& w, const BlockSpec& spec) {
  spec.validate();
  const auto form = w.form;
  const std::size_t branches = spec.branch_count(form);
  auto fail = [&](const std::string& what) {
    throw RejectedInputError("block weights (" + std::string(form_name(form)) + ") do not fit " + spec.str() + ": " +
                             what);
  };
  if (w.conv1.size() != branches || w.conv2.size() != branches) fail("branch count");
  const std::size_t n3 = form == BlockForm::AggregateSum ? spec.cardinality : 1;
  if (w.conv3.size() != n3) fail("conv3 count");
  for (const auto& t : w.conv1)
    if (t.shape() != spec.branch_conv1(form).weight_shape()) fail("conv1 shape " + shape_str(t.shape()));
  for (const auto& t : w.conv2)
    if (t.shape() != spec.branch_conv2(form).weight_shape()) fail("conv2 shape " + shape_str(t.shape()));
  for (const auto& t : w.conv3)
    if (t.shape() != spec.conv3(form).weight_shape()) fail("conv3 shape " + shape_str(t.shape()));
  if (spec.with_bn) {
    if (w.bn1.size() != branches || w.bn2.size() != branches) fail("bn1/bn2 count");
    if (!w.bn3 && w.path_bn3.empty()) fail("missing bn3");
    if (!w.path_bn3.empty() && (form != BlockForm::AggregateSum || w.path_bn3.size() != spec.cardinality || w.bn3))
      fail("per-path bn3 only applies to form a, one per path, without aggregate bn3");
  } else if (!w.bn1.empty() || !w.bn2.empty() || w.bn3 || !w.path_bn3.empty()) {
    fail("batch norm state present with bn off");
  }
  const bool need_proj = spec.shortcut == Shortcut::Projection;
  if (need_proj != w.proj.has_value()) fail("projection weight presence");
  if (w.proj && w.proj->shape() != spec.projection().weight_shape()) fail("projection shape");
  if (w.proj_bn.has_value() != (need_proj && spec.with_bn)) fail("projection bn presence");
}

template <typename T>
BlockWeights<T> build_block(const BlockSpec& spec, BlockForm form, std::uint64_t seed) {
  spec.validate();
  std::mt19937_64 rng(seed);
  // Draw in grouped form and convert, so every form starts from the same
  // function for a given seed.
  BlockWeights<T> w;
  w.form = BlockForm::GroupedConv;
  w.conv1 = {he_normal<T>(spec.branch_conv1(BlockForm::GroupedConv), rng)};
  w.conv2 = {he_normal<T>(spec.branch_conv2(BlockForm::GroupedConv), rng)};
  w.conv3 = {he_normal<T>(spec.conv3(BlockForm::GroupedConv), rng)};
  if (spec.with_bn) {
    w.bn1 = {BatchNormState<T>::fresh(spec.group_width())};
    w.bn2 = {BatchNormState<T>::fresh(spec.group_width())};
    w.bn3 = BatchNormState<T>::fresh(spec.out_width);
  }
  if (spec.shortcut == Shortcut::Projection) {
    w.proj = he_normal<T>(spec.projection(), rng);
    if (spec.with_bn) w.proj_bn = BatchNormState<T>::fresh(spec.out_width);
  }
  return form == BlockForm::GroupedConv ? w : convert_weights(w, spec, form);
}

template <typename T>
BlockWeights<T> convert_weights(const BlockWeights<T>& w, const BlockSpec& spec, BlockForm to) {
  check_block_weights(w, spec);
  refuse_if_unconvertible(w.path_bn3.size());
  if (w.form == to) return w;
  const auto mid = to_concat(w, spec);
  return to == BlockForm::ConcatMerge ? mid : from_concat(mid, spec, to);
}

namespace {

template <typename T>
Tensor<T> maybe_relu(const Tensor<T>& x, bool on) {
  return on ? relu_forward(x) : x;
}

template <typename T>
Tensor<T> maybe_relu_back(const Tensor<T>& pre, const Tensor<T>& g, bool on) {
  return on ? relu_backward(pre, g) : g;
}

template <typename T>
Tensor<T> bn_step(const Tensor<T>& x, BatchNormState<T>& state, BatchNormCache<T>& cache, Mode mode) {
  auto r = batchnorm_forward(x, state, mode);
  state = std::move(r.state);
  cache = std::move(r.cache);
  return std::move(r.output);
}

template <typename T>
Tensor<T> residual_forward(BlockWeights<T>& w, const BlockSpec& spec, const Tensor<T>& x, Mode mode,
                           BlockCache<T>& cache) {
  const auto form = w.form;
  const std::size_t branches = spec.branch_count(form);
  cache.branches.resize(branches);
  for (std::size_t i = 0; i < branches; ++i) {
    auto& b = cache.branches[i];
    auto h = conv2d_forward(x, w.conv1[i], spec.branch_conv1(form));
    b.act1_pre = spec.with_bn ? bn_step(h, w.bn1[i], b.bn1, mode) : std::move(h);
    b.act1 = maybe_relu(b.act1_pre, spec.with_relu);
    h = conv2d_forward(b.act1, w.conv2[i], spec.branch_conv2(form));
    b.act2_pre = spec.with_bn ? bn_step(h, w.bn2[i], b.bn2, mode) : std::move(h);
    b.act2 = maybe_relu(b.act2_pre, spec.with_relu);
  }

  Tensor<T> agg;
  if (form == BlockForm::AggregateSum) {
    cache.path_bn3.resize(w.path_bn3.size());
    for (std::size_t i = 0; i < branches; ++i) {
      auto t = conv2d_forward(cache.branches[i].act2, w.conv3[i], spec.conv3(form));
      if (!w.path_bn3.empty()) t = bn_step(t, w.path_bn3[i], cache.path_bn3[i], mode);
      if (i == 0)
        agg = std::move(t);
      else
        add_inplace(agg, t);
    }
  } else if (form == BlockForm::ConcatMerge) {
    std::vector<Tensor<T>> parts;
    parts.reserve(branches);
    for (const auto& b : cache.branches) parts.push_back(b.act2);
    cache.merge_in = concat_channels<T>(parts);
    agg = conv2d_forward(cache.merge_in, w.conv3[0], spec.conv3(form));
  } else {
    agg = conv2d_forward(cache.branches[0].act2, w.conv3[0], spec.conv3(form));
  }
  if (w.bn3) return bn_step(agg, *w.bn3, cache.bn3, mode);
  return agg;
}

}  // namespace

template <typename T>
BlockResult<T> block_forward(const BlockWeights<T>& w, const BlockSpec& spec, const Tensor<T>& input, Mode mode) {
  check_block_weights(w, spec);
  if (input.rank() != 4 || input.c() != spec.in_width)
    throw RejectedInputError("block input " + shape_str(input.shape()) + " does not match " + spec.str());
  BlockResult<T> r{{}, w, {}};
  r.cache.input = input;
  auto residual = residual_forward(r.weights, spec, input, mode, r.cache);
  switch (spec.shortcut) {
    case Shortcut::Identity:
      r.cache.pre_relu = add_forward(input, residual);
      break;
    case Shortcut::Projection: {
      auto p = conv2d_forward(input, *w.proj, spec.projection());
      if (spec.with_bn) p = bn_step(p, *r.weights.proj_bn, r.cache.proj_bn, mode);
      add_inplace(p, residual);
      r.cache.pre_relu = std::move(p);
      break;
    }
    case Shortcut::None:
      r.cache.pre_relu = std::move(residual);
      break;
  }
  r.output = maybe_relu(r.cache.pre_relu, spec.with_relu);
  return r;
}

template <typename T>
Tensor<T> block_residual(const BlockWeights<T>& w, const BlockSpec& spec, const Tensor<T>& input, Mode mode) {
  check_block_weights(w, spec);
  if (input.rank() != 4 || input.c() != spec.in_width)
    throw RejectedInputError("block input " + shape_str(input.shape()) + " does not match " + spec.str());
  BlockWeights<T> scratch = w;
  BlockCache<T> cache;
  return residual_forward(scratch, spec, input, mode, cache);
}

template <typename T>
BlockGrads<T> block_backward(const BlockWeights<T>& w, const BlockSpec& spec, const BlockCache<T>& cache,
                             const Tensor<T>& grad_out) {
  check_block_weights(w, spec);
  if (grad_out.shape() != cache.pre_relu.shape())
    throw RejectedInputError("block grad_out " + shape_str(grad_out.shape()) + " expected " +
                             shape_str(cache.pre_relu.shape()));
  const auto form = w.form;
  const std::size_t branches = spec.branch_count(form);
  BlockGrads<T> g;
  g.weights = w;
  const Tensor<T>& x = cache.input;

  const Tensor<T> g_pre = maybe_relu_back(cache.pre_relu, grad_out, spec.with_relu);

  // Shortcut.
  switch (spec.shortcut) {
    case Shortcut::Identity:
      g.input = g_pre;
      break;
    case Shortcut::Projection: {
      Tensor<T> gp = g_pre;
      if (spec.with_bn) {
        auto bg = batchnorm_backward(cache.proj_bn, *w.proj_bn, gp);
        g.weights.proj_bn->gamma = std::move(bg.gamma);
        g.weights.proj_bn->beta = std::move(bg.beta);
        gp = std::move(bg.input);
      }
      auto cg = conv2d_backward(x, *w.proj, spec.projection(), gp);
      g.weights.proj = std::move(cg.weight);
      g.input = std::move(cg.input);
      break;
    }
    case Shortcut::None:
      g.input = Tensor<T>(x.shape());
      break;
  }

  // Residual aggregate.
  Tensor<T> g_agg = g_pre;
  if (w.bn3) {
    auto bg = batchnorm_backward(cache.bn3, *w.bn3, g_agg);
    g.weights.bn3->gamma = std::move(bg.gamma);
    g.weights.bn3->beta = std::move(bg.beta);
    g_agg = std::move(bg.input);
  }

  std::vector<Tensor<T>> g_act2(branches);
  if (form == BlockForm::AggregateSum) {
    for (std::size_t i = 0; i < branches; ++i) {
      Tensor<T> gt = g_agg;
      if (!w.path_bn3.empty()) gt = batchnorm_backward(cache.path_bn3[i], w.path_bn3[i], gt).input;
      auto cg = conv2d_backward(cache.branches[i].act2, w.conv3[i], spec.conv3(form), gt);
      g.weights.conv3[i] = std::move(cg.weight);
      g_act2[i] = std::move(cg.input);
    }
  } else if (form == BlockForm::ConcatMerge) {
    auto cg = conv2d_backward(cache.merge_in, w.conv3[0], spec.conv3(form), g_agg);
    g.weights.conv3[0] = std::move(cg.weight);
    for (std::size_t i = 0; i < branches; ++i)
      g_act2[i] = slice_channels(cg.input, i * spec.bottleneck_width, spec.bottleneck_width);
  } else {
    auto cg = conv2d_backward(cache.branches[0].act2, w.conv3[0], spec.conv3(form), g_agg);
    g.weights.conv3[0] = std::move(cg.weight);
    g_act2[0] = std::move(cg.input);
  }

  for (std::size_t i = 0; i < branches; ++i) {
    const auto& b = cache.branches[i];
    Tensor<T> gh = maybe_relu_back(b.act2_pre, g_act2[i], spec.with_relu);
    if (spec.with_bn) {
      auto bg = batchnorm_backward(b.bn2, w.bn2[i], gh);
      g.weights.bn2[i].gamma = std::move(bg.gamma);
      g.weights.bn2[i].beta = std::move(bg.beta);
      gh = std::move(bg.input);
    }
    auto c2 = conv2d_backward(b.act1, w.conv2[i], spec.branch_conv2(form), gh);
    g.weights.conv2[i] = std::move(c2.weight);
    gh = maybe_relu_back(b.act1_pre, c2.input, spec.with_relu);
    if (spec.with_bn) {
      auto bg = batchnorm_backward(b.bn1, w.bn1[i], gh);
      g.weights.bn1[i].gamma = std::move(bg.gamma);
      g.weights.bn1[i].beta = std::move(bg.beta);
      gh = std::move(bg.input);
    }
    auto c1 = conv2d_backward(x, w.conv1[i], spec.branch_conv1(form), gh);
    g.weights.conv1[i] = std::move(c1.weight);
    add_inplace(g.input, c1.input);
  }

  // Running statistics carry no gradient.
  auto zero_stats = [](BatchNormState<T>& s) {
    s.running_mean.fill(T{0});
    s.running_var.fill(T{0});
  };
  for (auto& s : g.weights.bn1) zero_stats(s);
  for (auto& s : g.weights.bn2) zero_stats(s);
  if (g.weights.bn3) zero_stats(*g.weights.bn3);
  if (g.weights.proj_bn) zero_stats(*g.weights.proj_bn);
  g.weights.path_bn3.clear();
  return g;
}

template <typename T>
NamedTensors block_to_named(const BlockWeights<T>& w, const std::string& prefix) {
  if (!w.path_bn3.empty())
    throw RejectedInputError("per-path bn3 placement has no serialized form");
  NamedTensors out;
  auto copy = w;
  for_each_tensor(copy, [&](const std::string& name, Tensor<T>& t, TensorRole) { out.emplace_back(prefix + name, t); });
  return out;
}

template <typename T>
BlockWeights<T> block_from_named(const NamedTensors& entries, const BlockSpec& spec, BlockForm form,
                                 const std::string& prefix) {
  // Shape a skeleton and fill it by name.
  BlockWeights<T> w = build_block<T>(spec, form, 0);
  for_each_tensor(w, [&](const std::string& name, Tensor<T>& t, TensorRole) {
    const auto& src = find_tensor<T>(entries, prefix + name);
    if (src.shape() != t.shape())
      throw FormatError("tensor '" + prefix + name + "' has shape " + shape_str(src.shape()) + ", expected " +
                        shape_str(t.shape()));
    t = src;
  });
  return w;
}

#define RESNEXT_INSTANTIATE(T)                                                                                  \
  template void check_block_weights<T>(const BlockWeights<T>&, const BlockSpec&);                               \
  template BlockWeights<T> build_block<T>(const BlockSpec&, BlockForm, std::uint64_t);                          \
  template BlockWeights<T> convert_weights<T>(const BlockWeights<T>&, const BlockSpec&, BlockForm);             \
  template BlockResult<T> block_forward<T>(const BlockWeights<T>&, const BlockSpec&, const Tensor<T>&, Mode);   \
  template Tensor<T> block_residual<T>(const BlockWeights<T>&, const BlockSpec&, const Tensor<T>&, Mode);       \
  template BlockGrads<T> block_backward<T>(const BlockWeights<T>&, const BlockSpec&, const BlockCache<T>&,      \
                                           const Tensor<T>&);                                                   \
  template NamedTensors block_to_named<T>(const BlockWeights<T>&, const std::string&);                          \
  template BlockWeights<T> block_from_named<T>(const NamedTensors&, const BlockSpec&, BlockForm, const std::string&);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
