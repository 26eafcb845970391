// SPDX-License-Identifier: Apache-2.0
#include "resnext/checks.hpp"

#include <algorithm>
#include <random>

#include "resnext/collapse.hpp"

namespace resnext {

bool EquivReport::pass() const {
  return std::all_of(pairs.begin(), pairs.end(), [&](const PairDiff& p) { return p.max_rel_diff <= tolerance; });
}

namespace {

template <typename T>
void randomize_bn(BatchNormState<T>& s, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> gamma(0.5, 1.5), beta(-0.5, 0.5);
  for (auto& g : s.gamma.data()) g = static_cast<T>(gamma(rng));
  for (auto& b : s.beta.data()) b = static_cast<T>(beta(rng));
}

}  // namespace

template <typename T>
EquivReport equiv_check(const EquivOptions& o) {
  auto spec = BlockSpec::make(o.in_width, o.cardinality, o.bottleneck_width, o.out_width ? o.out_width : o.in_width,
                              o.stride);
  spec.with_bn = o.bn;
  spec.validate();

  auto a = build_block<T>(spec, BlockForm::AggregateSum, o.seed);
  if (o.bn) {
    std::mt19937_64 rng(o.seed ^ 0xb17b17b17ULL);
    for (auto& s : a.bn1) randomize_bn(s, rng);
    for (auto& s : a.bn2) randomize_bn(s, rng);
    randomize_bn(*a.bn3, rng);
    if (a.proj_bn) randomize_bn(*a.proj_bn, rng);
  }
  const auto b = convert_weights(a, spec, BlockForm::ConcatMerge);
  const auto c = convert_weights(a, spec, BlockForm::GroupedConv);

  std::mt19937_64 rng(o.seed + 1);
  const auto x = random_normal<T>({o.batch, o.in_width, o.size, o.size}, rng);
  const auto ya = block_forward(a, spec, x, Mode::Train).output;
  const auto yb = block_forward(b, spec, x, Mode::Train).output;
  const auto yc = block_forward(c, spec, x, Mode::Train).output;

  EquivReport r;
  r.tolerance = std::is_same_v<T, double> ? 1e-12 : 1e-5;
  r.pairs = {{"a-b", max_rel_diff(ya, yb)}, {"a-c", max_rel_diff(ya, yc)}, {"b-c", max_rel_diff(yb, yc)}};
  return r;
}

template <typename T>
CollapseReport collapse_check(const CollapseOptions& o) {
  std::mt19937_64 rng(o.seed);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  CollapseReport r;
  r.cases = o.cases;
  r.tolerance = std::is_same_v<T, double> ? 1e-6 : 1e-4;
  for (std::size_t i = 0; i < o.cases; ++i) {
    const std::size_t C = pick(1, 8), d = pick(1, 8), in = pick(1, 16), out = pick(1, 16), n = pick(1, 4);
    const bool relu = i % 2 == 1;
    std::vector<DensePath<T>> paths(C);
    for (auto& p : paths) {
      p.layers.push_back(random_normal<T>({d, in}, rng));
      p.layers.push_back(random_normal<T>({out, d}, rng));
    }
    const auto x = random_normal<T>({n, in}, rng);
    const auto g = random_normal<T>({n, out}, rng);
    const auto wide = collapse_depth2<T>(paths);
    r.forward_max_rel_diff = std::max(
        r.forward_max_rel_diff, max_rel_diff(multipath_forward<T>(paths, x, relu), wide_forward(wide, x, relu)));
    r.grad_max_rel_diff = std::max(r.grad_max_rel_diff, max_rel_diff(multipath_input_grad<T>(paths, x, g, relu),
                                                                       wide_input_grad(wide, x, g, relu)));
  }
  return r;
}

template EquivReport equiv_check<float>(const EquivOptions&);
template EquivReport equiv_check<double>(const EquivOptions&);
template CollapseReport collapse_check<float>(const CollapseOptions&);
template CollapseReport collapse_check<double>(const CollapseOptions&);

}  // namespace resnext
