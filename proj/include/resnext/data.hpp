// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

/// Raw CIFAR-10 binary records: 1 label byte, then 1024 R, 1024 G, 1024 B bytes.
struct CifarRecords {
  static constexpr std::size_t kImageBytes = 3 * 32 * 32;
  static constexpr std::size_t kRecordBytes = 1 + kImageBytes;

  std::vector<std::uint8_t> labels;
  std::vector<std::uint8_t> pixels;  // kImageBytes per record

  std::size_t size() const { return labels.size(); }
  CifarRecords subset(std::size_t begin, std::size_t count) const;
  void append(const CifarRecords& other);
};

/// Reads up to `limit` records (0 = all). Truncated records and labels > 9
/// raise FormatError with the byte offset.
CifarRecords read_cifar10(const std::filesystem::path& path, std::size_t limit = 0);
void write_cifar10(const std::filesystem::path& path, const CifarRecords& records);

/// Per-channel mean and standard deviation of pixels scaled to [0, 1].
struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> stddev{};
};

ChannelStats channel_stats(const CifarRecords& records);

template <typename T>
struct Dataset {
  Tensor<T> images;  // (N, C, H, W)
  std::vector<std::int32_t> labels;
  std::size_t classes = 10;

  std::size_t size() const { return labels.size(); }
  std::size_t channels() const { return images.c(); }
  std::size_t height() const { return images.h(); }
  std::size_t width() const { return images.w(); }
};

/// Scales to [0, 1] and standardizes each channel with `stats`.
template <typename T>
Dataset<T> to_dataset(const CifarRecords& records, const ChannelStats& stats);

/// Class prototypes plus Gaussian noise; separable when noise is small.
struct SyntheticSpec {
  std::size_t classes = 2;
  std::size_t train_size = 256;
  std::size_t test_size = 128;
  std::size_t channels = 3;
  std::size_t image_size = 32;
  double noise = 0.5;
  std::uint64_t seed = 0;
};

template <typename T>
std::pair<Dataset<T>, Dataset<T>> make_synthetic(const SyntheticSpec& spec);

/// Copies the selected samples into one batch tensor.
template <typename T>
Tensor<T> gather_images(const Dataset<T>& data, std::span<const std::size_t> indices);

/// Zero-pad by 4 on every side, take the window at (dy, dx), optionally
/// mirror horizontally. Operates on one (C, H, W) image in place.
template <typename T>
void crop_flip(std::span<T> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t dy,
               std::size_t dx, bool flip);

struct AugmentDraw {
  std::size_t dy = 4, dx = 4;
  bool flip = false;
};

AugmentDraw draw_augment(std::mt19937_64& rng);

/// Random 8-pixel translation and horizontal flip with probability 0.5.
template <typename T>
void augment(std::span<T> image, std::size_t channels, std::size_t height, std::size_t width, std::mt19937_64& rng);

}  // namespace resnext
