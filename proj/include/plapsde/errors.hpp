#pragma once

#include <stdexcept>
#include <string>

namespace plapsde {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid argument or non-finite input.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// A model or noise configuration that violates a structural condition
/// (ellipticity, convexity, growth).
class ModelRejected : public Error {
 public:
  using Error::Error;
};

/// Newton (or quadrature) failed to reach its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_residual)
      : Error(what), last_residual_(last_residual) {}

  double last_residual() const noexcept { return last_residual_; }

 private:
  double last_residual_;
};

}  // namespace plapsde
