// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "resnext/block.hpp"

namespace resnext {

/// Conv parameters of one aggregated bottleneck block with in = out width:
/// C * (in*d + 9*d*d + d*in).
std::uint64_t block_capacity(std::uint64_t cardinality, std::uint64_t bottleneck_width, std::uint64_t in_width = 256);

/// Reference capacity of the 1x64d bottleneck on 256 channels.
inline constexpr std::uint64_t kReferenceBlockParams = 69'632;

/// d in [1, max_width] closest to the reference capacity; ties go to the
/// smaller d.
std::size_t solve_width(std::size_t cardinality, std::uint64_t reference_params = kReferenceBlockParams,
                        std::size_t max_width = 256);

enum class Family { ImageNet, Cifar };

struct StemSpec {
  std::size_t in_channels = 3;
  std::size_t out_width = 64;
  std::size_t kernel = 7;
  std::size_t stride = 2;
  std::size_t padding = 3;
  bool max_pool = true;  // 3x3 stride-2, padding 1

  ConvSpec conv() const { return {in_channels, out_width, kernel, stride, padding, 1}; }
};

/// One stage: blocks share hyper-parameters; only the first may change
/// width or resolution.
struct StageSpec {
  std::string name;
  std::size_t block_count = 1;
  std::size_t in_width = 64;
  std::size_t bottleneck_width = 64;
  std::size_t cardinality = 1;
  std::size_t out_width = 256;
  std::size_t first_block_stride = 1;

  std::vector<BlockSpec> blocks(bool shortcuts = true) const;
};

struct ArchSpec {
  Family family = Family::Cifar;
  std::size_t depth = 29;
  std::size_t cardinality = 1;
  std::size_t width = 64;  // template bottleneck width of the first stage
  StemSpec stem;
  std::vector<StageSpec> stages;
  std::size_t classes = 10;
  std::size_t default_resolution = 32;

  /// e.g. "ResNeXt-50 (32x4d)"; "ResNet-50 (1x64d)" when C = 1.
  std::string notation() const;
  /// Stem + 3 per block + classifier.
  std::size_t weighted_layers() const;
  std::size_t feature_width() const { return stages.back().out_width; }
  /// Checks the two template rules and channel chaining.
  void validate() const;
};

ArchSpec build_imagenet_arch(std::size_t depth, std::size_t cardinality, std::size_t width, std::size_t classes = 1000);

/// 3x3 stem, three stages of three blocks, widths doubling per stage.
/// `width_divisor` shrinks stem and stage output widths for desk-scale runs.
ArchSpec build_cifar_arch(std::size_t cardinality, std::size_t width, std::size_t classes = 10,
                          std::size_t width_divisor = 1);

struct CapacityRow {
  std::string stage;
  std::size_t out_size = 0;
  std::size_t block = 0;  // 1-based within the stage, 0 for stem and classifier
  std::uint64_t params = 0;
  std::uint64_t flops = 0;
};

/// Parameter count includes conv, BN (gamma and beta) and fc weights/bias.
/// FLOPs are multiply-adds of conv and fc layers only.
struct CapacityReport {
  std::string notation;
  std::size_t resolution = 0;
  std::vector<CapacityRow> rows;
  std::uint64_t params_total = 0;
  std::uint64_t flops_total = 0;

  std::uint64_t stage_params(const std::string& stage) const;
  std::uint64_t stage_flops(const std::string& stage) const;
  /// Header comment lines, then stage,out_size,block,params,flops and a TOTAL row.
  std::string to_csv() const;
};

/// Parameters and multiply-adds of a single block at the given input size.
CapacityRow block_cost(const BlockSpec& spec, std::size_t in_size);

CapacityReport count_capacity(const ArchSpec& arch, std::size_t input_resolution = 0);

}  // namespace resnext
