// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "resnext/block.hpp"
#include "resnext/errors.hpp"
#include "resnext/gradcheck.hpp"
#include "resnext/layers.hpp"

using namespace resnext;

namespace {

constexpr BlockForm kForms[] = {BlockForm::AggregateSum, BlockForm::ConcatMerge, BlockForm::GroupedConv};

template <typename T>
void randomize_bn(BlockWeights<T>& w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.5, 1.5);
  auto fill = [&](BatchNormState<T>& s) {
    for (auto& v : s.gamma.data()) v = static_cast<T>(u(rng));
    for (auto& v : s.beta.data()) v = static_cast<T>(u(rng) - 1.0);
    for (auto& v : s.running_mean.data()) v = static_cast<T>(u(rng) - 1.0);
    for (auto& v : s.running_var.data()) v = static_cast<T>(u(rng));
  };
  for (auto& s : w.bn1) fill(s);
  for (auto& s : w.bn2) fill(s);
  if (w.bn3) fill(*w.bn3);
  if (w.proj_bn) fill(*w.proj_bn);
}

}  // namespace

TEST_CASE("32x4d layer widths") {
  const auto spec = BlockSpec::make(256, 32, 4, 256);
  const auto a = build_block<float>(spec, BlockForm::AggregateSum, 1);
  REQUIRE(a.conv1.size() == 32);
  REQUIRE(a.conv3.size() == 32);
  CHECK(a.conv1[0].shape() == Shape{4, 256, 1, 1});
  CHECK(a.conv2[0].shape() == Shape{4, 4, 3, 3});
  CHECK(a.conv3[0].shape() == Shape{256, 4, 1, 1});
  CHECK_FALSE(a.proj.has_value());
  const auto c = build_block<float>(spec, BlockForm::GroupedConv, 1);
  REQUIRE(c.conv1.size() == 1);
  CHECK(c.conv1[0].shape() == Shape{128, 256, 1, 1});
  CHECK(c.conv2[0].shape() == Shape{128, 4, 3, 3});
  CHECK(c.conv3[0].shape() == Shape{256, 128, 1, 1});
  const auto b = build_block<float>(spec, BlockForm::ConcatMerge, 1);
  CHECK(b.conv3.size() == 1);
  CHECK(b.conv3[0].shape() == Shape{256, 128, 1, 1});
}

TEST_CASE("1x64d is the plain bottleneck") {
  const auto spec = BlockSpec::make(256, 1, 64, 256);
  const auto c = build_block<float>(spec, BlockForm::GroupedConv, 2);
  CHECK(c.conv1[0].shape() == Shape{64, 256, 1, 1});
  CHECK(c.conv2[0].shape() == Shape{64, 64, 3, 3});
  CHECK(c.conv3[0].shape() == Shape{256, 64, 1, 1});
  CHECK(spec.branch_conv2(BlockForm::GroupedConv).groups == 1);
}

TEST_CASE("spec validation") {
  auto s = BlockSpec::make(64, 2, 4, 128);
  CHECK(s.shortcut == Shortcut::Projection);
  s.shortcut = Shortcut::Identity;
  CHECK_THROWS_AS(s.validate(), InvalidSpecError);
  CHECK_THROWS_AS(BlockSpec::make(64, 0, 4, 64).validate(), InvalidSpecError);
  CHECK_THROWS_AS(BlockSpec::make(64, 2, 4, 64, 3).validate(), InvalidSpecError);
  CHECK_THROWS_AS(build_block<float>(BlockSpec::make(64, 2, 0, 64), BlockForm::GroupedConv, 0), InvalidSpecError);
}

TEST_CASE("He init statistics and determinism") {
  const auto spec = BlockSpec::make(256, 8, 16, 256);
  const auto w = build_block<double>(spec, BlockForm::GroupedConv, 11);
  CHECK(w == build_block<double>(spec, BlockForm::GroupedConv, 11));
  CHECK_FALSE(w == build_block<double>(spec, BlockForm::GroupedConv, 12));
  auto stddev = [](const Tensor<double>& t) {
    double s = 0, s2 = 0;
    for (double v : t.vec()) s += v, s2 += v * v;
    const double m = s / t.size();
    return std::sqrt(s2 / t.size() - m * m);
  };
  CHECK(stddev(w.conv1[0]) == doctest::Approx(std::sqrt(2.0 / 256)).epsilon(0.05));
  CHECK(stddev(w.conv2[0]) == doctest::Approx(std::sqrt(2.0 / (9 * 16))).epsilon(0.05));
  CHECK(w.bn1[0].gamma[0] == 1.0);
  CHECK(w.bn1[0].beta[0] == 0.0);
}

TEST_CASE("C=1 forms carry identical values") {
  const auto spec = BlockSpec::make(16, 1, 8, 32, 2);
  const auto a = build_block<float>(spec, BlockForm::AggregateSum, 5);
  const auto b = convert_weights(a, spec, BlockForm::ConcatMerge);
  const auto c = convert_weights(a, spec, BlockForm::GroupedConv);
  for (const auto* w : {&b, &c}) {
    CHECK(w->conv1 == a.conv1);
    CHECK(w->conv2 == a.conv2);
    CHECK(w->conv3 == a.conv3);
    CHECK(w->bn3 == a.bn3);
    CHECK(w->proj == a.proj);
  }
}

TEST_CASE("conversion round trip is bit-exact") {
  for (const bool bn : {false, true}) {
    auto spec = BlockSpec::make(24, 4, 6, 48, 2);
    spec.with_bn = bn;
    auto a = build_block<float>(spec, BlockForm::AggregateSum, 7);
    if (bn) randomize_bn(a, 8);
    const auto b = convert_weights(a, spec, BlockForm::ConcatMerge);
    const auto c = convert_weights(b, spec, BlockForm::GroupedConv);
    const auto back = convert_weights(c, spec, BlockForm::AggregateSum);
    CHECK(back == a);
    CHECK(convert_weights(c, spec, BlockForm::ConcatMerge) == b);
    CHECK(convert_weights(a, spec, BlockForm::GroupedConv) == c);
    // merge weight is the input-channel concatenation of the per-path weights
    const std::vector<Tensor<float>> w3(a.conv3.begin(), a.conv3.end());
    CHECK(b.conv3[0] == concat_channels<float>(w3));
    CHECK(c.conv2[0] == concat_outer<float>(std::vector<Tensor<float>>(a.conv2.begin(), a.conv2.end())));
  }
}

TEST_CASE("form forward equivalence at the iso-complexity settings") {
  const std::pair<std::size_t, std::size_t> settings[] = {{1, 64}, {2, 40}, {4, 24}, {8, 14}, {32, 4}};
  std::mt19937_64 rng(9);
  for (const auto& [C, d] : settings) {
    auto spec = BlockSpec::make(64, C, d, 64);
    const auto a64 = build_block<double>(spec, BlockForm::AggregateSum, C);
    const auto x64 = random_normal<double>({2, 64, 4, 4}, rng);
    const auto a32 = build_block<float>(spec, BlockForm::AggregateSum, C);
    const auto x32 = tensor_cast<float>(x64);
    for (const auto mode : {Mode::Train, Mode::Infer}) {
      const auto ref64 = block_forward(a64, spec, x64, mode).output;
      const auto ref32 = block_forward(a32, spec, x32, mode).output;
      for (const auto f : {BlockForm::ConcatMerge, BlockForm::GroupedConv}) {
        CHECK(max_rel_diff(ref64, block_forward(convert_weights(a64, spec, f), spec, x64, mode).output) <= 1e-12);
        CHECK(max_rel_diff(ref32, block_forward(convert_weights(a32, spec, f), spec, x32, mode).output) <= 1e-5);
      }
    }
  }
}

TEST_CASE("running statistics convert across forms") {
  auto spec = BlockSpec::make(8, 2, 4, 8);
  const auto a = build_block<double>(spec, BlockForm::AggregateSum, 3);
  std::mt19937_64 rng(4);
  const auto x = random_normal<double>({4, 8, 5, 5}, rng);
  const auto ra = block_forward(a, spec, x, Mode::Train);
  const auto rc = block_forward(convert_weights(a, spec, BlockForm::GroupedConv), spec, x, Mode::Train);
  const auto conv = convert_weights(ra.weights, spec, BlockForm::GroupedConv);
  CHECK(max_rel_diff(conv.bn2[0].running_var, rc.weights.bn2[0].running_var) <= 1e-12);
  CHECK(max_rel_diff(conv.bn1[0].running_mean, rc.weights.bn1[0].running_mean) <= 1e-12);
}

TEST_CASE("per-path bn3 is refused") {
  auto spec = BlockSpec::make(8, 2, 4, 8);
  auto a = build_block<float>(spec, BlockForm::AggregateSum, 1);
  a.path_bn3 = {BatchNormState<float>::fresh(8), BatchNormState<float>::fresh(8)};
  a.bn3.reset();
  check_block_weights(a, spec);
  std::mt19937_64 rng(2);
  CHECK(block_forward(a, spec, random_normal<float>({2, 8, 3, 3}, rng), Mode::Train).output.all_finite());
  try {
    convert_weights(a, spec, BlockForm::GroupedConv);
    FAIL("expected ConversionRefusedError");
  } catch (const ConversionRefusedError& e) {
    CHECK(std::string(e.what()).find("bn3") != std::string::npos);
  }
}

TEST_CASE("zero weights with identity shortcut give relu(x)") {
  auto spec = BlockSpec::make(8, 2, 3, 8);
  spec.with_bn = false;
  for (const auto f : kForms) {
    auto w = build_block<double>(spec, f, 1);
    for (auto* v : {&w.conv1, &w.conv2, &w.conv3})
      for (auto& t : *v) t.fill(0.0);
    std::mt19937_64 rng(3);
    const auto x = random_normal<double>({2, 8, 4, 4}, rng);
    CHECK(block_forward(w, spec, x, Mode::Train).output == relu_forward(x));
  }
}

TEST_CASE("projection with stride 2 halves the spatial extent") {
  const auto spec = BlockSpec::make(8, 4, 2, 16, 2);
  std::mt19937_64 rng(5);
  const auto x = random_normal<float>({2, 8, 8, 8}, rng);
  for (const auto f : kForms) {
    const auto y = block_forward(build_block<float>(spec, f, 1), spec, x, Mode::Train).output;
    CHECK(y.shape() == Shape{2, 16, 4, 4});
  }
  const auto odd = random_normal<float>({1, 8, 7, 7}, rng);
  CHECK(block_forward(build_block<float>(spec, BlockForm::GroupedConv, 1), spec, odd, Mode::Train).output.shape() ==
        Shape{1, 16, 4, 4});
  CHECK_THROWS_AS(block_forward(build_block<float>(spec, BlockForm::GroupedConv, 1), spec,
                                Tensor<float>({1, 4, 8, 8}), Mode::Train),
                  RejectedInputError);
}

TEST_CASE("residual is the sum of the path transformations") {
  auto spec = BlockSpec::make(6, 3, 2, 6);
  spec.with_bn = false;
  const auto a = build_block<double>(spec, BlockForm::AggregateSum, 21);
  std::mt19937_64 rng(6);
  const auto x = random_normal<double>({2, 6, 5, 5}, rng);
  Tensor<double> sum({2, 6, 5, 5});
  for (std::size_t i = 0; i < 3; ++i) {
    auto h = relu_forward(oracle::conv2d(x, a.conv1[i], 1, 0, 1));
    h = relu_forward(oracle::conv2d(h, a.conv2[i], 1, 1, 1));
    add_inplace(sum, oracle::conv2d(h, a.conv3[i], 1, 0, 1));
  }
  const auto F = block_residual(a, spec, x, Mode::Train);
  CHECK(max_rel_diff(F, sum) <= 1e-12);

  auto linear = spec;
  linear.with_relu = false;
  const auto y = block_forward(a, linear, x, Mode::Train).output;
  CHECK(y == add_forward(x, block_residual(a, linear, x, Mode::Train)));

  auto none = spec;
  none.shortcut = Shortcut::None;
  none.with_relu = false;
  CHECK(block_forward(a, none, x, Mode::Train).output == block_residual(a, none, x, Mode::Train));
}

TEST_CASE("block gradients pass the finite-difference check in every form") {
  for (const auto op : {GradOp::BlockAggregateSum, GradOp::BlockConcatMerge, GradOp::BlockGroupedConv})
    CHECK(gradcheck(op).max_rel_err <= 1e-5);
}

TEST_CASE("block gradients agree across forms") {
  const auto spec = BlockSpec::make(8, 4, 2, 16, 2);
  const auto a = build_block<double>(spec, BlockForm::AggregateSum, 4);
  std::mt19937_64 rng(7);
  const auto x = random_normal<double>({2, 8, 6, 6}, rng);
  const auto g = random_normal<double>({2, 16, 3, 3}, rng);
  const auto ra = block_forward(a, spec, x, Mode::Train);
  const auto ga = block_backward(a, spec, ra.cache, g);
  const auto c = convert_weights(a, spec, BlockForm::GroupedConv);
  const auto gc = block_backward(c, spec, block_forward(c, spec, x, Mode::Train).cache, g);
  CHECK(max_rel_diff(ga.input, gc.input) <= 1e-12);
  const auto ga_as_c = convert_weights(ga.weights, spec, BlockForm::GroupedConv);
  CHECK(max_rel_diff(ga_as_c.conv2[0], gc.weights.conv2[0]) <= 1e-12);
  CHECK(max_rel_diff(ga_as_c.conv3[0], gc.weights.conv3[0]) <= 1e-12);
  CHECK(max_rel_diff(ga_as_c.bn1[0].gamma, gc.weights.bn1[0].gamma) <= 1e-12);
}

TEST_CASE("named serialization round trip") {
  const auto spec = BlockSpec::make(8, 2, 4, 16, 2);
  for (const auto f : kForms) {
    const auto w = build_block<float>(spec, f, 13);
    std::stringstream ss;
    write_named(ss, block_to_named(w, "block3."));
    const auto entries = read_named(ss);
    CHECK(block_from_named<float>(entries, spec, f, "block3.") == w);
  }
  const auto w = build_block<float>(spec, BlockForm::GroupedConv, 1);
  const auto named = block_to_named(w);
  bool has_proj = false, has_grouped = false;
  for (const auto& [n, t] : named) {
    has_proj |= n == "0.0.w";
    has_grouped |= n == "2.0.w";
  }
  CHECK(has_proj);
  CHECK(has_grouped);
  CHECK_THROWS_AS(block_from_named<float>(named, spec, BlockForm::AggregateSum), FormatError);
}
