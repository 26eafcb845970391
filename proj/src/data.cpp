// SPDX-License-Identifier: Apache-2.0
#include "resnext/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace resnext {

CifarRecords CifarRecords::subset(std::size_t begin, std::size_t count) const {
  if (begin + count > size()) throw RejectedInputError("CIFAR subset out of range");
  CifarRecords out;
  out.labels.assign(labels.begin() + begin, labels.begin() + begin + count);
  out.pixels.assign(pixels.begin() + begin * kImageBytes, pixels.begin() + (begin + count) * kImageBytes);
  return out;
}

void CifarRecords::append(const CifarRecords& other) {
  labels.insert(labels.end(), other.labels.begin(), other.labels.end());
  pixels.insert(pixels.end(), other.pixels.begin(), other.pixels.end());
}

CifarRecords read_cifar10(const std::filesystem::path& path, std::size_t limit) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RejectedInputError("cannot open CIFAR-10 file " + path.string());
  const std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
  if (bytes.size() % CifarRecords::kRecordBytes != 0) {
    const std::size_t offset = bytes.size() / CifarRecords::kRecordBytes * CifarRecords::kRecordBytes;
    throw FormatError(path.string() + ": truncated record at byte offset " + std::to_string(offset));
  }
  std::size_t count = bytes.size() / CifarRecords::kRecordBytes;
  if (limit) count = std::min(count, limit);
  CifarRecords r;
  r.labels.resize(count);
  r.pixels.resize(count * CifarRecords::kImageBytes);
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t offset = i * CifarRecords::kRecordBytes;
    const auto label = static_cast<std::uint8_t>(bytes[offset]);
    if (label > 9)
      throw FormatError(path.string() + ": label " + std::to_string(label) + " > 9 at byte offset " +
                        std::to_string(offset));
    r.labels[i] = label;
    std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset + 1), CifarRecords::kImageBytes,
                r.pixels.begin() + static_cast<std::ptrdiff_t>(i * CifarRecords::kImageBytes));
  }
  return r;
}

void write_cifar10(const std::filesystem::path& path, const CifarRecords& records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RejectedInputError("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < records.size(); ++i) {
    os.put(static_cast<char>(records.labels[i]));
    os.write(reinterpret_cast<const char*>(records.pixels.data() + i * CifarRecords::kImageBytes),
             CifarRecords::kImageBytes);
  }
}

ChannelStats channel_stats(const CifarRecords& records) {
  ChannelStats s;
  if (records.size() == 0) throw RejectedInputError("channel_stats: no records");
  constexpr std::size_t plane = 32 * 32;
  const double n = static_cast<double>(records.size() * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    double sum = 0, sq = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      const std::uint8_t* p = records.pixels.data() + i * CifarRecords::kImageBytes + c * plane;
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = p[k] / 255.0;
        sum += v;
        sq += v * v;
      }
    }
    s.mean[c] = sum / n;
    s.stddev[c] = std::sqrt(std::max(sq / n - s.mean[c] * s.mean[c], 0.0));
    if (s.stddev[c] == 0.0) s.stddev[c] = 1.0;
  }
  return s;
}

template <typename T>
Dataset<T> to_dataset(const CifarRecords& records, const ChannelStats& stats) {
  if (records.size() == 0) throw RejectedInputError("to_dataset: no records");
  Dataset<T> d;
  d.classes = 10;
  d.images = Tensor<T>({records.size(), 3, 32, 32});
  d.labels.assign(records.labels.begin(), records.labels.end());
  constexpr std::size_t plane = 32 * 32;
  for (std::size_t i = 0; i < records.size(); ++i)
    for (std::size_t c = 0; c < 3; ++c) {
      const std::uint8_t* src = records.pixels.data() + i * CifarRecords::kImageBytes + c * plane;
      T* dst = &d.images.at(i, c, 0, 0);
      for (std::size_t k = 0; k < plane; ++k)
        dst[k] = static_cast<T>((src[k] / 255.0 - stats.mean[c]) / stats.stddev[c]);
    }
  return d;
}

template <typename T>
std::pair<Dataset<T>, Dataset<T>> make_synthetic(const SyntheticSpec& spec) {
  if (spec.classes < 2 || spec.train_size == 0 || spec.test_size == 0 || spec.channels == 0 || spec.image_size == 0)
    throw InvalidSpecError("synthetic dataset needs >= 2 classes and non-empty splits");
  std::mt19937_64 rng(spec.seed);
  const Shape proto_shape{spec.classes, spec.channels, spec.image_size, spec.image_size};
  const auto protos = random_normal<double>(proto_shape, rng);
  const std::size_t per = spec.channels * spec.image_size * spec.image_size;
  std::normal_distribution<double> noise(0.0, spec.noise);
  std::uniform_int_distribution<std::size_t> pick(0, spec.classes - 1);
  auto make = [&](std::size_t count) {
    Dataset<T> d;
    d.classes = spec.classes;
    d.images = Tensor<T>({count, spec.channels, spec.image_size, spec.image_size});
    d.labels.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
      const std::size_t label = i < spec.classes ? i : pick(rng);  // every class appears
      d.labels[i] = static_cast<std::int32_t>(label);
      for (std::size_t k = 0; k < per; ++k) d.images[i * per + k] = static_cast<T>(protos[label * per + k] + noise(rng));
    }
    return d;
  };
  auto train = make(spec.train_size);
  auto test = make(spec.test_size);
  return {std::move(train), std::move(test)};
}

template <typename T>
Tensor<T> gather_images(const Dataset<T>& data, std::span<const std::size_t> indices) {
  if (indices.empty()) throw RejectedInputError("gather_images: empty batch");
  const std::size_t per = data.channels() * data.height() * data.width();
  Tensor<T> batch({indices.size(), data.channels(), data.height(), data.width()});
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= data.size()) throw RejectedInputError("gather_images: index out of range");
    const T* src = data.images.ptr() + indices[i] * per;
    std::copy(src, src + per, batch.ptr() + i * per);
  }
  return batch;
}

template <typename T>
void crop_flip(std::span<T> image, std::size_t channels, std::size_t height, std::size_t width, std::size_t dy,
               std::size_t dx, bool flip) {
  constexpr std::size_t pad = 4;
  if (image.size() != channels * height * width) throw RejectedInputError("crop_flip: image size mismatch");
  if (dy > 2 * pad || dx > 2 * pad) throw RejectedInputError("crop_flip: offset outside the padded image");
  std::vector<T> out(image.size(), T{0});
  for (std::size_t c = 0; c < channels; ++c)
    for (std::size_t y = 0; y < height; ++y) {
      const std::ptrdiff_t sy = static_cast<std::ptrdiff_t>(y + dy) - static_cast<std::ptrdiff_t>(pad);
      if (sy < 0 || sy >= static_cast<std::ptrdiff_t>(height)) continue;
      for (std::size_t x = 0; x < width; ++x) {
        const std::ptrdiff_t sx = static_cast<std::ptrdiff_t>(x + dx) - static_cast<std::ptrdiff_t>(pad);
        if (sx < 0 || sx >= static_cast<std::ptrdiff_t>(width)) continue;
        const std::size_t ox = flip ? width - 1 - x : x;
        out[(c * height + y) * width + ox] = image[(c * height + static_cast<std::size_t>(sy)) * width + static_cast<std::size_t>(sx)];
      }
    }
  std::copy(out.begin(), out.end(), image.begin());
}

AugmentDraw draw_augment(std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> offset(0, 8);
  std::bernoulli_distribution coin(0.5);
  AugmentDraw d;
  d.dy = offset(rng);
  d.dx = offset(rng);
  d.flip = coin(rng);
  return d;
}

template <typename T>
void augment(std::span<T> image, std::size_t channels, std::size_t height, std::size_t width, std::mt19937_64& rng) {
  const auto d = draw_augment(rng);
  crop_flip(image, channels, height, width, d.dy, d.dx, d.flip);
}

#define RESNEXT_INSTANTIATE(T)                                                                                       \
  template Dataset<T> to_dataset<T>(const CifarRecords&, const ChannelStats&);                                       \
  template std::pair<Dataset<T>, Dataset<T>> make_synthetic<T>(const SyntheticSpec&);                                \
  template Tensor<T> gather_images<T>(const Dataset<T>&, std::span<const std::size_t>);                              \
  template void crop_flip<T>(std::span<T>, std::size_t, std::size_t, std::size_t, std::size_t, std::size_t, bool);   \
  template void augment<T>(std::span<T>, std::size_t, std::size_t, std::size_t, std::mt19937_64&);

RESNEXT_INSTANTIATE(float)
RESNEXT_INSTANTIATE(double)
#undef RESNEXT_INSTANTIATE

}  // namespace resnext
