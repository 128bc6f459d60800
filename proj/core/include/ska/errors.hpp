// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace ska {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents that do not fit the operation.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Invalid or contradictory configuration values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced by an operation, or a diverging training run.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable input file (IDX, PGM, config).
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint that is truncated, has an unknown version or does not match
/// the model it is loaded into.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

/// The finite-difference oracle cannot be trusted (loss is not deterministic).
class OracleInvalidError : public Error {
 public:
  using Error::Error;
};

}  // namespace ska
