// Shared aliases and error types for the patch-model analysis library.
#pragma once

#include <Eigen/Dense>
#include <complex>
#include <stdexcept>
#include <string>

namespace patchhopf {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;
using Complex = std::complex<double>;

// Base error. `kind()` is a short stable token used in CSV error cells.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& msg)
      : std::runtime_error(msg), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

private:
  std::string kind_;
};

// Input shapes disagree (non-square matrix, mismatched vector length).
class DimensionError : public Error {
public:
  explicit DimensionError(const std::string& msg) : Error("dimension", msg) {}
};

// Structural hypotheses on the model data are violated.
class ValidationError : public Error {
public:
  explicit ValidationError(const std::string& msg) : Error("validation", msg) {}
};

// An iterative solver failed (stagnation, divergence, iteration cap).
class SolverError : public Error {
public:
  SolverError(std::string kind, const std::string& msg)
      : Error(std::move(kind), msg) {}
};

// The request is outside the regime where the quantity exists
// (no positive equilibrium, no Hopf point, patch not oscillatory, ...).
class RegimeError : public Error {
public:
  RegimeError(std::string kind, const std::string& msg)
      : Error(std::move(kind), msg) {}
};

}  // namespace patchhopf
