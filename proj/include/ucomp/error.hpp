#pragma once

#include <stdexcept>
#include <string>

namespace ucomp {

/// Base class of every error raised by the engine.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes or latent dimensions do not fit the requested operation.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A computation produced NaN or Inf.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Malformed or unreadable file, with location where known.
class IoError : public Error {
 public:
  using Error::Error;
};

/// Invalid user-supplied configuration or arguments.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Training diverged; the message names the offending loss term.
class DivergenceError : public Error {
 public:
  DivergenceError(std::string term, const std::string& detail)
      : Error("divergence in " + term + ": " + detail), term_(std::move(term)) {}

  const std::string& term() const noexcept { return term_; }

 private:
  std::string term_;
};

}  // namespace ucomp
