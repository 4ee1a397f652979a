#pragma once

#include <stdexcept>
#include <string>

namespace vwsd {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vectors or tensors whose shapes disagree.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

// A vector whose norm is too small to define a direction.
class DegenerateEmbedding : public Error {
 public:
  using Error::Error;
};

// Malformed input data: dataset rows, inventory lines, store files.
class DataError : public Error {
 public:
  using Error::Error;
};

class StoreError : public DataError {
 public:
  enum class Kind {
    io,
    bad_magic,
    unsupported_version,
    bad_header,
    truncated,
    duplicate_id,
    trailing_bytes,
  };

  StoreError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

// Bad command line or configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Failure talking to an embedding provider.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, bool retryable) : Error(what), retryable_(retryable) {}

  bool retryable() const noexcept { return retryable_; }

 private:
  bool retryable_;
};

}  // namespace vwsd
