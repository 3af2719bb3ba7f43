#ifndef QEBA_ERRORS_HPP
#define QEBA_ERRORS_HPP

#include <cstdint>
#include <stdexcept>
#include <string>

namespace qeba {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Shape / length mismatch between operands.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Scalar argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

// A caller-side precondition was violated (e.g. non-orthonormal basis
// passed where the projection formula requires one).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Requested configuration cannot be satisfied (e.g. more orthogonal
// directions than dimensions).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

// Malformed on-disk data; the message names the offending byte offset
// where one is known.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Invalid experiment configuration; the message names the field.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Oracle budget exhausted. Carries the number of queries answered so far.
class QueryBudgetError : public Error {
 public:
  QueryBudgetError(std::uint64_t count, const std::string& what)
      : Error(what), count_(count) {}
  std::uint64_t query_count() const { return count_; }

 private:
  std::uint64_t count_;
};

// The cosine lower bound is uninformative for the given inputs.
class BoundVacuousError : public Error {
 public:
  using Error::Error;
};

}  // namespace qeba

#endif
