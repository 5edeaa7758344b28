#pragma once

#include <stdexcept>
#include <string>

namespace plmc {

/// Malformed arguments: wrong shapes, non-finite values, broken invariants.
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A factorization failed even after jitter escalation.
class NumericalDegeneracy : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The assembled noise precision D+^{-1} is not positive definite.
class IndefiniteNoise : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training could not recover from non-finite losses.
class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plmc
