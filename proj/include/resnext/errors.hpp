// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace resnext {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hyper-parameter combination that cannot describe a valid layer/block/net.
class InvalidSpecError : public Error {
 public:
  using Error::Error;
};

/// Well-formed spec, but the tensors handed in do not fit it.
class RejectedInputError : public Error {
 public:
  using Error::Error;
};

/// Weight conversion between block forms that would not be exact.
class ConversionRefusedError : public Error {
 public:
  using Error::Error;
};

/// Malformed file contents (NTF1, named-tensor container, CIFAR binary).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf detected in a gradient or loss during training.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

}  // namespace resnext
