// SPDX-License-Identifier: Apache-2.0
#include "resnext/arch.hpp"

#include <limits>
#include <sstream>

#include "resnext/layers.hpp"

namespace resnext {

std::uint64_t block_capacity(std::uint64_t cardinality, std::uint64_t bottleneck_width, std::uint64_t in_width) {
  const std::uint64_t d = bottleneck_width;
  return cardinality * (in_width * d + 9 * d * d + d * in_width);
}

std::size_t solve_width(std::size_t cardinality, std::uint64_t reference_params, std::size_t max_width) {
  if (cardinality == 0) throw InvalidSpecError("solve_width: cardinality must be >= 1");
  std::size_t best = 1;
  std::uint64_t best_gap = std::numeric_limits<std::uint64_t>::max();
  for (std::size_t d = 1; d <= max_width; ++d) {
    const std::uint64_t p = block_capacity(cardinality, d);
    const std::uint64_t gap = p > reference_params ? p - reference_params : reference_params - p;
    if (gap < best_gap) {
      best_gap = gap;
      best = d;
    }
  }
  return best;
}

std::vector<BlockSpec> StageSpec::blocks(bool shortcuts) const {
  std::vector<BlockSpec> out;
  for (std::size_t b = 0; b < block_count; ++b) {
    auto s = b == 0 ? BlockSpec::make(in_width, cardinality, bottleneck_width, out_width, first_block_stride)
                    : BlockSpec::make(out_width, cardinality, bottleneck_width, out_width, 1);
    if (!shortcuts) s.shortcut = Shortcut::None;
    out.push_back(s);
  }
  return out;
}

std::string ArchSpec::notation() const {
  std::ostringstream os;
  os << (cardinality == 1 ? "ResNet-" : "ResNeXt-") << depth << " (" << cardinality << "x" << width << "d)";
  return os.str();
}

std::size_t ArchSpec::weighted_layers() const {
  std::size_t n = 2;
  for (const auto& s : stages) n += 3 * s.block_count;
  return n;
}

void ArchSpec::validate() const {
  if (stages.empty()) throw InvalidSpecError("architecture has no stages");
  if (classes == 0) throw InvalidSpecError("architecture needs at least one class");
  std::size_t width_in = stem.out_width;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    const auto& s = stages[i];
    if (s.block_count == 0 || s.cardinality == 0 || s.bottleneck_width == 0)
      throw InvalidSpecError("stage " + s.name + " has a zero hyper-parameter");
    if (s.in_width != width_in) throw InvalidSpecError("stage " + s.name + " input width does not chain");
    if (i > 0) {
      const auto& prev = stages[i - 1];
      // Downsampling doubles the width (and the bottleneck width with it).
      if (s.first_block_stride == 2 && (s.out_width != 2 * prev.out_width || s.bottleneck_width != 2 * prev.bottleneck_width))
        throw InvalidSpecError("stage " + s.name + " downsamples without doubling width");
    }
    for (const auto& b : s.blocks()) b.validate();
    width_in = s.out_width;
  }
}

ArchSpec build_imagenet_arch(std::size_t depth, std::size_t cardinality, std::size_t width, std::size_t classes) {
  std::vector<std::size_t> counts;
  if (depth == 50)
    counts = {3, 4, 6, 3};
  else if (depth == 101)
    counts = {3, 4, 23, 3};
  else
    throw InvalidSpecError("unsupported ImageNet depth " + std::to_string(depth) + " (expected 50 or 101)");
  if (cardinality == 0 || width == 0) throw InvalidSpecError("cardinality and width must be >= 1");
  ArchSpec a;
  a.family = Family::ImageNet;
  a.depth = depth;
  a.cardinality = cardinality;
  a.width = width;
  a.stem = StemSpec{3, 64, 7, 2, 3, true};
  a.classes = classes;
  a.default_resolution = 224;
  std::size_t in = 64, out = 256, d = width;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    a.stages.push_back({"conv" + std::to_string(i + 2), counts[i], in, d, cardinality, out, i == 0 ? 1u : 2u});
    in = out;
    out *= 2;
    d *= 2;
  }
  a.validate();
  return a;
}

ArchSpec build_cifar_arch(std::size_t cardinality, std::size_t width, std::size_t classes, std::size_t width_divisor) {
  if (cardinality == 0 || width == 0) throw InvalidSpecError("cardinality and width must be >= 1");
  if (width_divisor == 0 || 64 % width_divisor != 0)
    throw InvalidSpecError("width_divisor must divide 64, got " + std::to_string(width_divisor));
  ArchSpec a;
  a.family = Family::Cifar;
  a.depth = 29;
  a.cardinality = cardinality;
  a.width = width;
  a.stem = StemSpec{3, 64 / width_divisor, 3, 1, 1, false};
  a.classes = classes;
  a.default_resolution = 32;
  std::size_t in = a.stem.out_width, out = 256 / width_divisor, d = width;
  for (std::size_t i = 0; i < 3; ++i) {
    a.stages.push_back({"conv" + std::to_string(i + 2), 3, in, d, cardinality, out, i == 0 ? 1u : 2u});
    in = out;
    out *= 2;
    d *= 2;
  }
  a.validate();
  return a;
}

std::uint64_t CapacityReport::stage_params(const std::string& stage) const {
  std::uint64_t s = 0;
  for (const auto& r : rows)
    if (r.stage == stage) s += r.params;
  return s;
}

std::uint64_t CapacityReport::stage_flops(const std::string& stage) const {
  std::uint64_t s = 0;
  for (const auto& r : rows)
    if (r.stage == stage) s += r.flops;
  return s;
}

std::string CapacityReport::to_csv() const {
  std::ostringstream os;
  os << "# " << notation << " @" << resolution << "x" << resolution << "\n";
  os << "# params: conv + bn (gamma, beta) + fc; flops: multiply-adds of conv and fc only\n";
  os << "stage,out_size,block,params,flops\n";
  for (const auto& r : rows)
    os << r.stage << ',' << r.out_size << 'x' << r.out_size << ',' << r.block << ',' << r.params << ',' << r.flops
       << '\n';
  os << "TOTAL,,," << params_total << ',' << flops_total << '\n';
  return os.str();
}

CapacityRow block_cost(const BlockSpec& spec, std::size_t in_size) {
  spec.validate();
  const auto form = BlockForm::GroupedConv;
  const auto c1 = spec.branch_conv1(form), c2 = spec.branch_conv2(form), c3 = spec.conv3(form);
  const std::size_t out_size = c2.out_extent(in_size);
  CapacityRow r;
  r.out_size = out_size;
  r.params = c1.param_count() + c2.param_count() + c3.param_count();
  r.flops = c1.macs(in_size, in_size) + c2.macs(out_size, out_size) + c3.macs(out_size, out_size);
  if (spec.with_bn) r.params += 2 * (c1.out_channels + c2.out_channels + c3.out_channels);
  if (spec.shortcut == Shortcut::Projection) {
    const auto p = spec.projection();
    r.params += p.param_count() + (spec.with_bn ? 2 * p.out_channels : 0);
    r.flops += p.macs(out_size, out_size);
  }
  return r;
}

CapacityReport count_capacity(const ArchSpec& arch, std::size_t input_resolution) {
  arch.validate();
  const std::size_t res = input_resolution ? input_resolution : arch.default_resolution;
  CapacityReport rep;
  rep.notation = arch.notation();
  rep.resolution = res;

  const auto stem = arch.stem.conv();
  std::size_t size = stem.out_extent(res);
  rep.rows.push_back({"conv1", size, 0, stem.param_count() + 2 * stem.out_channels, stem.macs(size, size)});
  if (arch.stem.max_pool) size = maxpool_out_extent(size);

  for (const auto& stage : arch.stages) {
    std::size_t b = 0;
    for (const auto& spec : stage.blocks()) {
      auto row = block_cost(spec, size);
      row.stage = stage.name;
      row.block = ++b;
      size = row.out_size;
      rep.rows.push_back(row);
    }
  }
  const std::uint64_t fc_in = arch.feature_width();
  rep.rows.push_back({"fc", 1, 0, fc_in * arch.classes + arch.classes, fc_in * arch.classes});
  for (const auto& r : rep.rows) {
    rep.params_total += r.params;
    rep.flops_total += r.flops;
  }
  return rep;
}

}  // namespace resnext
