#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ppdyn {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value. `field()` is the dotted path of the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field_(std::move(field)) {}
  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// Precondition violated by a caller-supplied argument.
class DomainError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  explicit NumericalError(const std::string& what, double achieved_error = 0.0)
      : Error(what), achieved_error_(achieved_error) {}
  double achieved_error() const noexcept { return achieved_error_; }

 private:
  double achieved_error_;
};

/// Too few usable points in a scaling window.
class DegenerateWindow : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceFailure : public NumericalError {
 public:
  ConvergenceFailure(const std::string& what, std::size_t index)
      : NumericalError(what + " (index " + std::to_string(index) + ")"), index_(index) {}
  std::size_t index() const noexcept { return index_; }

 private:
  std::size_t index_;
};

class NotNormalized : public DomainError {
 public:
  using DomainError::DomainError;
};

/// A weakly-spaced selection found no input point inside the target window of `level()`.
class WindowEmpty : public Error {
 public:
  explicit WindowEmpty(long level)
      : Error("no input point inside the target window of level " + std::to_string(level)),
        level_(level) {}
  long level() const noexcept { return level_; }

 private:
  long level_;
};

class SummabilityViolated : public DomainError {
 public:
  using DomainError::DomainError;
};

class WitnessTooShallow : public DomainError {
 public:
  using DomainError::DomainError;
};

class MissingStage : public Error {
 public:
  explicit MissingStage(const std::string& stage) : Error("missing stage output: " + stage) {}
};

/// A bound or classification check did not hold.
class VerificationFailure : public Error {
 public:
  using Error::Error;
};

}  // namespace ppdyn
