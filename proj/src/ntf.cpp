// SPDX-License-Identifier: Apache-2.0
#include "resnext/ntf.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace resnext {

namespace {

constexpr std::array<char, 4> kMagic{'N', 'T', 'F', '1'};

template <typename U>
void put_le(std::ostream& os, U v) {
  std::array<char, sizeof(U)> b;
  std::memcpy(b.data(), &v, sizeof(U));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  os.write(b.data(), b.size());
}

template <typename U>
U get_le(std::istream& is, const char* what) {
  std::array<char, sizeof(U)> b;
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(b.data(), b.size()))
    throw FormatError(std::string("truncated ") + what + " at byte " + std::to_string(offset));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b.begin(), b.end());
  U v;
  std::memcpy(&v, b.data(), sizeof(U));
  return v;
}

template <typename T>
Tensor<T> read_payload(std::istream& is, Shape shape) {
  std::vector<T> data(shape_numel(shape));
  for (auto& v : data) v = get_le<T>(is, "tensor payload");
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t) {
  os.write(kMagic.data(), kMagic.size());
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(dtype_of<T>()));
  put_le<std::uint8_t>(os, static_cast<std::uint8_t>(t.rank()));
  for (auto e : t.shape()) put_le<std::uint32_t>(os, static_cast<std::uint32_t>(e));
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(t.ptr()), static_cast<std::streamsize>(t.size() * sizeof(T)));
  } else {
    for (auto v : t.data()) put_le<T>(os, v);
  }
}

void write_tensor(std::ostream& os, const AnyTensor& t) {
  std::visit([&os](const auto& x) { write_tensor(os, x); }, t);
}

AnyTensor read_tensor(std::istream& is) {
  std::array<char, 4> magic;
  const auto offset = static_cast<long long>(is.tellg());
  if (!is.read(magic.data(), magic.size()) || magic != kMagic)
    throw FormatError("missing NTF1 magic at byte " + std::to_string(offset));
  const auto dtype = get_le<std::uint8_t>(is, "dtype");
  const auto rank = get_le<std::uint8_t>(is, "rank");
  if (rank < 1 || rank > 4) throw FormatError("NTF1 rank " + std::to_string(rank) + " outside 1..4");
  Shape shape(rank);
  for (auto& e : shape) {
    e = get_le<std::uint32_t>(is, "extent");
    if (e == 0) throw FormatError("NTF1 zero extent");
  }
  switch (dtype) {
    case 1: return read_payload<float>(is, std::move(shape));
    case 2: return read_payload<double>(is, std::move(shape));
    default: throw FormatError("NTF1 unknown dtype code " + std::to_string(dtype));
  }
}

template <typename T>
Tensor<T> read_tensor_as(std::istream& is) {
  auto any = read_tensor(is);
  if (auto* t = std::get_if<Tensor<T>>(&any)) return std::move(*t);
  throw FormatError("NTF1 dtype mismatch");
}

void write_named(std::ostream& os, const NamedTensors& entries) {
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, tensor] : entries) {
    if (name.size() > 0xFFFF) throw RejectedInputError("tensor name too long: " + name.substr(0, 32) + "...");
    put_le<std::uint16_t>(os, static_cast<std::uint16_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, tensor);
  }
}

NamedTensors read_named(std::istream& is) {
  const auto count = get_le<std::uint32_t>(is, "entry count");
  NamedTensors entries;
  entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = get_le<std::uint16_t>(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("truncated tensor name in entry " + std::to_string(i));
    entries.emplace_back(std::move(name), read_tensor(is));
  }
  return entries;
}

void save_named(const std::filesystem::path& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw RejectedInputError("cannot open " + path.string() + " for writing");
  write_named(os, entries);
  if (!os) throw RejectedInputError("write failed: " + path.string());
}

NamedTensors load_named(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw RejectedInputError("cannot open " + path.string());
  return read_named(is);
}

template <typename T>
const Tensor<T>& find_tensor(const NamedTensors& entries, const std::string& name) {
  for (const auto& [n, t] : entries) {
    if (n != name) continue;
    if (const auto* p = std::get_if<Tensor<T>>(&t)) return *p;
    throw FormatError("tensor '" + name + "' has the wrong dtype");
  }
  throw FormatError("tensor '" + name + "' not found");
}

template void write_tensor<float>(std::ostream&, const Tensor<float>&);
template void write_tensor<double>(std::ostream&, const Tensor<double>&);
template Tensor<float> read_tensor_as<float>(std::istream&);
template Tensor<double> read_tensor_as<double>(std::istream&);
template const Tensor<float>& find_tensor<float>(const NamedTensors&, const std::string&);
template const Tensor<double>& find_tensor<double>(const NamedTensors&, const std::string&);

}  // namespace resnext
