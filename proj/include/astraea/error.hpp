#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace astraea {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration, mismatched dimensions, or violated preconditions.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during evaluation.
class NumericError : public Error {
 public:
  NumericError(const std::string& what, std::size_t index)
      : Error(what + " (index " + std::to_string(index) + ")"), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

/// Malformed on-disk data. `offset` is the byte position where parsing failed.
class FormatError : public Error {
 public:
  FormatError(const std::string& what, std::size_t offset)
      : Error(what + " at byte offset " + std::to_string(offset)), offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Not enough source samples of a class to satisfy a resampling request.
class ShortageError : public Error {
 public:
  ShortageError(int label, long long requested, long long available)
      : Error("class " + std::to_string(label) + ": requested " + std::to_string(requested) +
              " samples but only " + std::to_string(available) + " available"),
        label_(label) {}

  int label() const noexcept { return label_; }

 private:
  int label_;
};

/// KL divergence is infinite: P has mass where Q has none.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

}  // namespace astraea
