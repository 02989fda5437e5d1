#pragma once

#include <stdexcept>
#include <string>

namespace truthprobe {

// Exit-code category for each error family. The CLI maps these directly.
enum class ErrorKind : int {
  validation = 2,
  io = 3,
  divergence = 4,
  convergence = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }
  int exit_code() const noexcept { return static_cast<int>(kind_); }

 private:
  ErrorKind kind_;
};

class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& what) : Error(ErrorKind::validation, what) {}
};

/// Raised by the container loader; `reason` tells the individual failures apart.
class ContainerError : public ValidationError {
 public:
  enum class Reason { missing_blob, shape_mismatch, non_finite, corrupt_manifest, invalid_shape, invalid_labels };
  ContainerError(Reason reason, const std::string& what) : ValidationError(what), reason_(reason) {}
  Reason reason() const noexcept { return reason_; }

 private:
  Reason reason_;
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& what) : Error(ErrorKind::io, what) {}
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch) : Error(ErrorKind::divergence, what), epoch_(epoch) {}
  int epoch() const noexcept { return epoch_; }

 private:
  int epoch_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(ErrorKind::convergence, what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace truthprobe
