#pragma once

#include <stdexcept>
#include <string>

namespace lfu {

/// Base of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid arguments or violated preconditions (bad ratios, dimension
/// mismatches, missing grid case for a task-aware run, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// File system failures.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Malformed input files (ragged CSV rows, bad JSON schema).
class FormatError : public IoError {
 public:
  using IoError::IoError;
};

/// Any failure of a numerical routine.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Rank-deficient least-squares system that cannot be repaired.
class RankError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InfeasibleError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& what, double residual)
      : NumericalError(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

/// Active constraint gradients are linearly dependent at a QP optimum.
class LicqError : public NumericalError {
 public:
  LicqError(const std::string& what, int rank_gap)
      : NumericalError(what), rank_gap_(rank_gap) {}
  int rank_gap() const noexcept { return rank_gap_; }

 private:
  int rank_gap_;
};

/// A constraint is active with a (numerically) zero multiplier, so the
/// solution map has a kink there.
class DegenerateError : public NumericalError {
 public:
  DegenerateError(const std::string& what, int constraint)
      : NumericalError(what), constraint_(constraint) {}
  int constraint() const noexcept { return constraint_; }

 private:
  int constraint_;
};

/// Emits a warning through the library logger.
void warn(const std::string& message);

/// Silences (false) or re-enables (true) library warnings.
void set_warnings_enabled(bool enabled);

}  // namespace lfu
