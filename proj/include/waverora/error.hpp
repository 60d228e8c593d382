#ifndef WAVERORA_ERROR_HPP
#define WAVERORA_ERROR_HPP

#include <stdexcept>
#include <string>

namespace waverora {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Invalid or inconsistent configuration (unknown basis, bad split, J < 1, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// The requested decomposition depth collapses the length schedule.
class DepthError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

/// Coefficient lengths are inconsistent with the recorded forward schedule.
class ReconstructionError : public Error {
 public:
  using Error::Error;
};

/// A non-finite value appeared during evaluation or training.
class EvaluationError : public Error {
 public:
  using Error::Error;
};

/// CSV or checkpoint input could not be parsed.
class LoadError : public Error {
 public:
  using Error::Error;
};

/// A checkpoint does not match the requested run configuration.
class CompatibilityError : public Error {
 public:
  CompatibilityError(std::string field, const std::string& message)
      : Error(message), field_(std::move(field)) {}

  const std::string& field() const { return field_; }

 private:
  std::string field_;
};

}  // namespace waverora

#endif  // WAVERORA_ERROR_HPP
