// SPDX-License-Identifier: Apache-2.0
#pragma once

// NTF1 tensor records and the named-tensor container.
//
//   tensor:    "NTF1" | u8 dtype (1 = f32, 2 = f64) | u8 rank | rank x u32 LE extents
//              | payload, little-endian, row-major
//   container: u32 LE count | count x (u16 LE name length | UTF-8 name | tensor)

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "resnext/tensor.hpp"

namespace resnext {

template <typename T>
void write_tensor(std::ostream& os, const Tensor<T>& t);
void write_tensor(std::ostream& os, const AnyTensor& t);
AnyTensor read_tensor(std::istream& is);

/// Reads a record and requires its dtype to be T.
template <typename T>
Tensor<T> read_tensor_as(std::istream& is);

using NamedTensors = std::vector<std::pair<std::string, AnyTensor>>;

void write_named(std::ostream& os, const NamedTensors& entries);
NamedTensors read_named(std::istream& is);

void save_named(const std::filesystem::path& path, const NamedTensors& entries);
NamedTensors load_named(const std::filesystem::path& path);

/// Looks up `name` and requires dtype T; FormatError when absent or mismatched.
template <typename T>
const Tensor<T>& find_tensor(const NamedTensors& entries, const std::string& name);

}  // namespace resnext
