#pragma once

#include <stdexcept>
#include <string>

namespace gestnet {

/// Shape or dimension mismatch between tensors or against a layer contract.
class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A forward operation produced NaN or Inf.
class NonFiniteError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of a gradient tape (double backward, non-scalar loss, foreign loss).
class TapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (skeleton text, manifest, config).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem-level failure (missing file, unwritable directory).
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid run configuration value.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gestnet
