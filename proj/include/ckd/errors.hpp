#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ckd {

/// Root of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are not conformable.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside an operation's domain (epoch out of range, bad fraction, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration; raised before any training starts.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Corrupt, truncated or mismatched checkpoint/dataset file.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered in a loss or gradient.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, int epoch)
      : Error(what + " (epoch " + std::to_string(epoch) + ")"), epoch_(epoch) {}

  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

/// Tabulated teacher queried with an input it has no entry for.
class LookupError : public Error {
 public:
  LookupError(const std::string& what, std::size_t index)
      : Error(what + " (input index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

}  // namespace ckd
