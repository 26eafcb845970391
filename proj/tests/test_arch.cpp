// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cstdlib>
#include <sstream>

#include "oracles.hpp"
#include "resnext/arch.hpp"
#include "resnext/errors.hpp"

using namespace resnext;

TEST_CASE("block capacity") {
  CHECK(block_capacity(1, 64) == 69'632);
  CHECK(block_capacity(32, 4) == 70'144);
  CHECK(block_capacity(1, 1) == 521);
  for (std::uint64_t C : {1, 3, 16})
    for (std::uint64_t d : {1, 5, 40}) CHECK(block_capacity(C, d, 96) == oracle::block_params(C, d, 96));
}

TEST_CASE("solve_width against an exhaustive scan") {
  const std::pair<std::size_t, std::size_t> table[] = {{1, 64}, {2, 40}, {4, 24}, {8, 14}, {32, 4}};
  for (const auto& [C, d] : table) {
    CHECK(solve_width(C) == d);
    std::size_t best = 1;
    std::int64_t best_gap = INT64_MAX;
    for (std::size_t k = 1; k <= 128; ++k) {
      const auto gap = std::llabs(static_cast<std::int64_t>(oracle::block_params(C, k, 256)) - 69'632);
      if (gap < best_gap) best_gap = gap, best = k;
    }
    CHECK(best == d);
  }
  const std::size_t widths[] = {64, 80, 96, 112, 128};
  for (std::size_t i = 0; i < 5; ++i) CHECK(table[i].first * solve_width(table[i].first) == widths[i]);
  CHECK(solve_width(1, block_capacity(1, 7)) == 7);
}

TEST_CASE("ImageNet templates") {
  const auto r50 = build_imagenet_arch(50, 1, 64);
  CHECK(r50.notation() == "ResNet-50 (1x64d)");
  CHECK(r50.weighted_layers() == 50);
  const auto x50 = build_imagenet_arch(50, 32, 4);
  CHECK(x50.notation() == "ResNeXt-50 (32x4d)");
  REQUIRE(x50.stages.size() == 4);
  const std::size_t outs[] = {256, 512, 1024, 2048}, ds[] = {4, 8, 16, 32}, counts[] = {3, 4, 6, 3};
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(x50.stages[i].out_width == outs[i]);
    CHECK(x50.stages[i].bottleneck_width == ds[i]);
    CHECK(x50.stages[i].block_count == counts[i]);
    CHECK(x50.stages[i].cardinality == 32);
    CHECK(x50.stages[i].first_block_stride == (i == 0 ? 1u : 2u));
  }
  const auto x101 = build_imagenet_arch(101, 32, 4);
  CHECK(x101.stages[2].block_count == 23);
  CHECK(x101.weighted_layers() == 101);
  CHECK_THROWS_AS(build_imagenet_arch(34, 1, 64), InvalidSpecError);
}

TEST_CASE("stage blocks follow the template rules") {
  const auto arch = build_imagenet_arch(50, 32, 4);
  const auto blocks = arch.stages[1].blocks();
  REQUIRE(blocks.size() == 4);
  CHECK(blocks[0].stride == 2);
  CHECK(blocks[0].shortcut == Shortcut::Projection);
  CHECK(blocks[0].in_width == 256);
  for (std::size_t i = 1; i < 4; ++i) {
    CHECK(blocks[i].stride == 1);
    CHECK(blocks[i].shortcut == Shortcut::Identity);
    CHECK(blocks[i].in_width == 512);
  }
  const auto cut = arch.stages[1].blocks(false);
  for (const auto& b : cut) CHECK(b.shortcut == Shortcut::None);
}

TEST_CASE("CIFAR template") {
  const auto a = build_cifar_arch(8, 64);
  CHECK(a.notation() == "ResNeXt-29 (8x64d)");
  CHECK(a.weighted_layers() == 29);
  CHECK(a.stem.kernel == 3);
  CHECK(a.stem.stride == 1);
  CHECK_FALSE(a.stem.max_pool);
  CHECK(a.stages[0].out_width == 256);
  CHECK(a.stages[2].out_width == 1024);
  CHECK(a.stages[2].bottleneck_width == 256);
  const auto small = build_cifar_arch(4, 2, 10, 8);
  CHECK(small.stem.out_width == 8);
  CHECK(small.stages[0].out_width == 32);
  CHECK_NOTHROW(small.validate());
}

TEST_CASE("capacity totals equal their breakdown") {
  const auto rep = count_capacity(build_imagenet_arch(50, 32, 4));
  std::uint64_t p = 0, f = 0;
  for (const auto& r : rep.rows) p += r.params, f += r.flops;
  CHECK(p == rep.params_total);
  CHECK(f == rep.flops_total);
  CHECK(rep.stage_params("conv1") == 64ull * 3 * 49 + 128);
  CHECK(rep.resolution == 224);
}

TEST_CASE("iso-FLOP across stages for non-downsampling blocks") {
  const auto arch = build_imagenet_arch(50, 32, 4);
  std::size_t size = 56;
  std::uint64_t ref = 0;
  for (const auto& st : arch.stages) {
    const auto blocks = st.blocks();
    if (st.first_block_stride == 2) size /= 2;
    // conv params without BN or shortcut, times output area
    auto b = blocks.back();
    b.with_bn = false;
    const auto cost = block_cost(b, size);
    if (ref == 0) ref = cost.params * size * size;
    CHECK(cost.params * size * size == ref);
    CHECK(cost.flops == ref);
  }
}

TEST_CASE("CSV report") {
  const auto csv = count_capacity(build_imagenet_arch(50, 32, 4)).to_csv();
  CHECK(csv.find("ResNeXt-50 (32x4d)") != std::string::npos);
  CHECK(csv.find("stage,out_size,block,params,flops\n") != std::string::npos);
  CHECK(csv.find("conv2,56x56,1,") != std::string::npos);
  CHECK(csv.find("\nTOTAL,,,") != std::string::npos);
  CHECK(csv.back() == '\n');
}
