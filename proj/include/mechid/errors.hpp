#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mechid {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inputs of incompatible shape, or otherwise outside an operation's domain.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::size_t step, double norm);
  std::size_t step() const { return step_; }
  double norm() const { return norm_; }

 private:
  std::size_t step_;
  double norm_;
};

/// A function evaluation produced NaN or Inf at a named point.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// An encoder was asked to invert a point that is not on its data manifold.
class OffManifoldError : public Error {
 public:
  using Error::Error;
};

/// The observed data do not span enough directions to pose the problem.
class DataDeficiencyError : public Error {
 public:
  using Error::Error;
};

class BudgetError : public Error {
 public:
  using Error::Error;
};

/// More than one candidate matched where at most one may.
class AmbiguityError : public Error {
 public:
  using Error::Error;
};

class IllConditionedError : public Error {
 public:
  using Error::Error;
};

}  // namespace mechid
