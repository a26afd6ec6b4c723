#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace rgem {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using index_t = Eigen::Index;

// Error hierarchy. Every failure raised by the library derives from rgem::Error
// so that callers (the CLI in particular) can map them onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input outside the domain of an operation (infeasible point, bad entropy reference).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Incompatible combination of geometry, policy, oracle or solver options.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Step-size policy requested outside its validity range (e.g. mu = 0 for a linear-rate policy).
class PolicyError : public Error {
 public:
  using Error::Error;
};

/// A quantity that needs the problem optimum was requested but no optimum is known.
class UnavailableError : public Error {
 public:
  using Error::Error;
};

/// Iteration budget exhausted before a certificate was reached.
class BudgetError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset or config text.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// The distributed simulator could not reach any responsive agent within its retry cap.
class LivelockError : public Error {
 public:
  using Error::Error;
};

inline bool all_finite(const Vector& v) { return v.allFinite(); }

}  // namespace rgem
