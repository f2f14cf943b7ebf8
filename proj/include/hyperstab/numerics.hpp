#pragma once

#include <complex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace hyperstab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Complex = std::complex<double>;

/// Selects between the OpenMP kernels and their serial reference versions.
enum class Exec { Serial, Parallel };

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative method exhausts its budget. Carries the residual
/// history so callers can report how far the iteration got.
class NumericalError : public std::runtime_error {
 public:
  NumericalError(const std::string& what, std::vector<double> residuals = {})
      : std::runtime_error(what), residuals_(std::move(residuals)) {}
  const std::vector<double>& residuals() const { return residuals_; }
  double last_residual() const { return residuals_.empty() ? 0.0 : residuals_.back(); }

 private:
  std::vector<double> residuals_;
};

/// Uniform grid of `points` abscissae on [a, b].
std::vector<double> uniform_grid(int points, double a = 0.0, double b = 1.0);

/// Composite trapezoid weights for an arbitrary increasing grid.
std::vector<double> trapezoid_weights(std::span<const double> grid);

/// Matrix-valued function sampled on a strictly increasing grid.
class SampledFunction {
 public:
  SampledFunction() = default;
  SampledFunction(std::vector<double> grid, std::vector<Matrix> values);
  /// Constant-zero function of the given shape.
  static SampledFunction zeros(std::vector<double> grid, int rows, int cols);
  static SampledFunction constant(std::vector<double> grid, const Matrix& value);

  const std::vector<double>& grid() const { return grid_; }
  const std::vector<Matrix>& values() const { return values_; }
  std::vector<Matrix>& values() { return values_; }
  const Matrix& operator[](std::size_t i) const { return values_[i]; }
  Matrix& operator[](std::size_t i) { return values_[i]; }
  std::size_t size() const { return grid_.size(); }
  int rows() const { return values_.empty() ? 0 : static_cast<int>(values_.front().rows()); }
  int cols() const { return values_.empty() ? 0 : static_cast<int>(values_.front().cols()); }
  double lower() const { return grid_.front(); }
  double upper() const { return grid_.back(); }

  /// Piecewise-linear evaluation, clamped to the end values outside the grid.
  Matrix at(double x) const;
  /// Resample onto another grid by linear interpolation.
  SampledFunction resample(const std::vector<double>& grid) const;
  /// Largest absolute entry over all samples.
  double sup_norm() const;

 private:
  std::vector<double> grid_;
  std::vector<Matrix> values_;
};

Matrix expm(const Matrix& a, double t = 1.0);

std::vector<Complex> eigenvalues(const Matrix& a);
double max_real_part(const Matrix& a);
double spectral_radius(const Eigen::MatrixXcd& a);

/// Stabilizing solution of A^T P + P A - P B B^T P + I = 0 through the
/// matrix sign function of the Hamiltonian. Empty when the stable invariant
/// subspace is not a graph (no stabilizing solution).
std::optional<Matrix> solve_care(const Matrix& a, const Matrix& b);

struct GainResult {
  std::optional<Matrix> gain;
  /// Closed-loop (or uncontrollable open-loop) eigenvalues that miss the margin.
  std::vector<Complex> offending;
  double max_real_part = 0.0;
  bool ok() const { return gain.has_value(); }
};

/// K with max Re eig(A + B K) <= -margin, or the eigenvalues that block it.
GainResult stabilizing_gain(const Matrix& a, const Matrix& b, double margin = 0.1);

/// Full-interval composite trapezoid integral.
Matrix trapezoid(const SampledFunction& f);

/// Which part of [0,1] a Volterra operator integrates over.
enum class VolterraBound {
  Upper,  ///< g(x) = f(x) + \int_x^1 K(x,v) g(v) dv
  Lower,  ///< g(x) = f(x) + \int_0^x K(x,v) g(v) dv
};

/// Square-matrix kernel sampled at node pairs (a, b) of a uniform grid.
/// Storage covers the full square; solvers only read the half they need.
class NodeKernel {
 public:
  NodeKernel() = default;
  NodeKernel(int points, int dim) : n_(points), d_(dim), data_(std::size_t(points) * points * dim * dim, 0.0) {}
  int points() const { return n_; }
  int dim() const { return d_; }
  Eigen::Map<Matrix> at(int a, int b) { return {data_.data() + offset(a, b), d_, d_}; }
  Eigen::Map<const Matrix> at(int a, int b) const { return {data_.data() + offset(a, b), d_, d_}; }

 private:
  std::size_t offset(int a, int b) const { return (std::size_t(a) * n_ + b) * d_ * d_; }
  int n_ = 0;
  int d_ = 0;
  std::vector<double> data_;
};

struct VolterraOptions {
  double tolerance = 1e-10;
  int max_iterations = 500;
};

/// Picard iteration for a second-kind Volterra equation on the kernel's
/// uniform grid, trapezoid quadrature.
SampledFunction volterra2_solve(const NodeKernel& kernel, const SampledFunction& forcing,
                                VolterraBound bound, const VolterraOptions& options = {});

/// Same discrete equations solved by forward/backward substitution. Used where
/// many solves are needed and as a cross-check for the Picard route.
SampledFunction volterra2_solve_direct(const NodeKernel& kernel, const SampledFunction& forcing,
                                       VolterraBound bound);

}  // namespace hyperstab
