// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace fedlsr {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed numeric input (non-finite values, shape mismatch).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// A hyperparameter outside its admissible range.
class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// File does not conform to its declared format.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File parsed but its content is semantically invalid (e.g. label out of range).
class DataError : public Error {
 public:
  using Error::Error;
};

/// A requested client partition cannot be built.
class PartitionError : public Error {
 public:
  using Error::Error;
};

/// Augmentation op requested on features that lack the layout it needs.
class UnsupportedAugmentation : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration failed to parse or validate.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedlsr
