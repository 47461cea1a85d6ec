#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace pepsgen {

enum class ErrorKind {
  kDimension,
  kIndex,
  kNumeric,
  kCapacity,
  kFormat,
  kInput,
  kDegenerate,
  kInfiniteNll,
  kNoSupport,
  kEmptyMode,
};

const char* to_string(ErrorKind kind);

// Every failure raised by the library carries a kind so the CLI can map it
// onto a stable exit code.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Raised when a configuration has zero amplitude where a finite
// log-probability is required. `index` is the position within the batch.
class InfiniteNllError : public Error {
 public:
  InfiniteNllError(std::size_t index, const std::string& what)
      : Error(ErrorKind::kInfiniteNll, what), index_(index) {}

  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

// Raised by the sampler when no physical value at a site has positive
// conditional weight.
class DegenerateDistributionError : public Error {
 public:
  DegenerateDistributionError(std::size_t row, std::size_t col,
                              const std::string& what)
      : Error(ErrorKind::kDegenerate, what), row_(row), col_(col) {}

  std::size_t row() const noexcept { return row_; }
  std::size_t col() const noexcept { return col_; }

 private:
  std::size_t row_;
  std::size_t col_;
};

}  // namespace pepsgen
