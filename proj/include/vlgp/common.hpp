#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace vlgp {

using Index = std::ptrdiff_t;
using IndexList = std::vector<Index>;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad argument, violated precondition, or malformed input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A factorization or conditional variance hit a non-positive pivot.
/// `index()` is the failing column in the caller's indexing.
class NotPositiveDefinite : public Error {
 public:
  NotPositiveDefinite(const std::string& what, std::ptrdiff_t index)
      : Error(what + " (column " + std::to_string(index) + ")"), index_(index) {}
  std::ptrdiff_t index() const noexcept { return index_; }

 private:
  std::ptrdiff_t index_;
};

/// Non-finite values appeared during an iterative computation.
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {
inline void require(bool ok, const std::string& msg) {
  if (!ok) throw InvalidArgument(msg);
}
}  // namespace detail

}  // namespace vlgp
