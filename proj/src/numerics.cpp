#include "hyperstab/numerics.hpp"

#include <algorithm>
#include <cmath>

#include <unsupported/Eigen/MatrixFunctions>

namespace hyperstab {

std::vector<double> uniform_grid(int points, double a, double b) {
  if (points < 2) throw DimensionError("uniform_grid needs at least two points");
  std::vector<double> g(points);
  const double h = (b - a) / (points - 1);
  for (int i = 0; i < points; ++i) g[i] = a + h * i;
  g.back() = b;
  return g;
}

std::vector<double> trapezoid_weights(std::span<const double> grid) {
  std::vector<double> w(grid.size(), 0.0);
  for (std::size_t i = 0; i + 1 < grid.size(); ++i) {
    const double half = 0.5 * (grid[i + 1] - grid[i]);
    w[i] += half;
    w[i + 1] += half;
  }
  return w;
}

SampledFunction::SampledFunction(std::vector<double> grid, std::vector<Matrix> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
  if (grid_.size() < 2) throw DimensionError("SampledFunction needs at least two grid points");
  if (grid_.size() != values_.size()) throw DimensionError("SampledFunction grid/value size mismatch");
  for (std::size_t i = 1; i < grid_.size(); ++i) {
    if (!(grid_[i] > grid_[i - 1])) throw DimensionError("SampledFunction grid must be strictly increasing");
    if (values_[i].rows() != values_[0].rows() || values_[i].cols() != values_[0].cols())
      throw DimensionError("SampledFunction values must share one shape");
  }
}

SampledFunction SampledFunction::zeros(std::vector<double> grid, int rows, int cols) {
  std::vector<Matrix> v(grid.size(), Matrix::Zero(rows, cols));
  return {std::move(grid), std::move(v)};
}

SampledFunction SampledFunction::constant(std::vector<double> grid, const Matrix& value) {
  std::vector<Matrix> v(grid.size(), value);
  return {std::move(grid), std::move(v)};
}

Matrix SampledFunction::at(double x) const {
  if (x <= grid_.front()) return values_.front();
  if (x >= grid_.back()) return values_.back();
  auto it = std::upper_bound(grid_.begin(), grid_.end(), x);
  const std::size_t j = static_cast<std::size_t>(it - grid_.begin());
  const std::size_t i = j - 1;
  const double f = (x - grid_[i]) / (grid_[j] - grid_[i]);
  return (1.0 - f) * values_[i] + f * values_[j];
}

SampledFunction SampledFunction::resample(const std::vector<double>& grid) const {
  std::vector<Matrix> v;
  v.reserve(grid.size());
  for (double x : grid) v.push_back(at(x));
  return {grid, std::move(v)};
}

double SampledFunction::sup_norm() const {
  double s = 0.0;
  for (const auto& m : values_)
    if (m.size() > 0) s = std::max(s, m.cwiseAbs().maxCoeff());
  return s;
}

Matrix expm(const Matrix& a, double t) {
  if (a.rows() != a.cols()) throw DimensionError("expm requires a square matrix");
  if (a.rows() == 0) return a;
  const Matrix at = a * t;
  return at.exp();
}

std::vector<Complex> eigenvalues(const Matrix& a) {
  if (a.rows() != a.cols()) throw DimensionError("eigenvalues requires a square matrix");
  if (a.rows() == 0) return {};
  Eigen::EigenSolver<Matrix> solver;
  solver.setMaxIterations(100 * static_cast<int>(a.rows()));
  solver.compute(a, false);
  if (solver.info() != Eigen::Success) throw NumericalError("eigenvalue iteration did not converge");
  const auto ev = solver.eigenvalues();
  return {ev.data(), ev.data() + ev.size()};
}

double max_real_part(const Matrix& a) {
  double r = -std::numeric_limits<double>::infinity();
  for (const auto& l : eigenvalues(a)) r = std::max(r, l.real());
  return r;
}

double spectral_radius(const Eigen::MatrixXcd& a) {
  if (a.rows() == 0) return 0.0;
  if (a.rows() == 1) return std::abs(a(0, 0));
  Eigen::ComplexEigenSolver<Eigen::MatrixXcd> solver(a, false);
  if (solver.info() != Eigen::Success) throw NumericalError("complex eigenvalue iteration did not converge");
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

std::optional<Matrix> solve_care(const Matrix& a, const Matrix& b) {
  const Eigen::Index n = a.rows();
  if (a.cols() != n || b.rows() != n) throw DimensionError("solve_care: inconsistent dimensions");
  Matrix h(2 * n, 2 * n);
  h << a, -b * b.transpose(), -Matrix::Identity(n, n), -a.transpose();

  // Newton iteration for sign(H) with determinant scaling.
  Matrix z = h;
  bool converged = false;
  for (int it = 0; it < 100; ++it) {
    Eigen::PartialPivLU<Matrix> lu(z);
    const double det = std::abs(lu.determinant());
    if (!std::isfinite(det) || det < 1e-300) return std::nullopt;
    const double c = std::pow(det, -1.0 / static_cast<double>(2 * n));
    const Matrix next = 0.5 * (c * z + lu.inverse() / c);
    const double change = (next - z).norm() / std::max(1.0, next.norm());
    z = next;
    if (change < 1e-13) {
      converged = true;
      break;
    }
  }
  if (!converged) return std::nullopt;

  Matrix lhs(2 * n, n), rhs(2 * n, n);
  lhs << z.topRightCorner(n, n), z.bottomRightCorner(n, n) + Matrix::Identity(n, n);
  rhs << -(z.topLeftCorner(n, n) + Matrix::Identity(n, n)), -z.bottomLeftCorner(n, n);
  Eigen::ColPivHouseholderQR<Matrix> qr(lhs);
  qr.setThreshold(1e-10);
  if (qr.rank() < n) return std::nullopt;
  Matrix p = qr.solve(rhs);
  p = 0.5 * (p + p.transpose()).eval();
  const Matrix residual = a.transpose() * p + p * a - p * b * b.transpose() * p + Matrix::Identity(n, n);
  if (!p.allFinite() || residual.norm() > 1e-6 * std::max(1.0, p.norm() * p.norm())) return std::nullopt;
  return p;
}

namespace {

std::vector<Complex> uncontrollable_modes(const Matrix& a, const Matrix& b, double margin) {
  std::vector<Complex> out;
  const Eigen::Index n = a.rows();
  const double scale = std::max(1.0, a.norm() + b.norm());
  for (const auto& l : eigenvalues(a)) {
    if (l.real() <= -margin) continue;
    Eigen::MatrixXcd pbh(n, n + b.cols());
    pbh << a.cast<Complex>() - l * Eigen::MatrixXcd::Identity(n, n), b.cast<Complex>();
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(pbh);
    if (svd.singularValues()(n - 1) < 1e-8 * scale) out.push_back(l);
  }
  return out;
}

}  // namespace

GainResult stabilizing_gain(const Matrix& a, const Matrix& b, double margin) {
  if (a.rows() != a.cols() || b.rows() != a.rows()) throw DimensionError("stabilizing_gain: inconsistent dimensions");
  GainResult result;
  const Eigen::Index n = a.rows();
  auto attempt = [&](double shift) -> bool {
    const auto p = solve_care(a + shift * Matrix::Identity(n, n), b);
    if (!p) return false;
    const Matrix k = -b.transpose() * *p;
    const double mr = max_real_part(a + b * k);
    if (mr <= -margin + 1e-8) {
      result.gain = k;
      result.max_real_part = mr;
      return true;
    }
    return false;
  };
  // Plain identity-weight design first; shift the spectrum only when the
  // plain design misses the margin.
  if (attempt(0.0)) return result;
  for (double shift : {margin, 2.0 * margin, 4.0 * margin})
    if (attempt(shift)) return result;

  result.offending = uncontrollable_modes(a, b, margin);
  if (result.offending.empty()) {
    for (const auto& l : eigenvalues(a))
      if (l.real() > -margin) result.offending.push_back(l);
  }
  result.max_real_part = max_real_part(a);
  return result;
}

Matrix trapezoid(const SampledFunction& f) {
  const auto w = trapezoid_weights(f.grid());
  Matrix s = Matrix::Zero(f.rows(), f.cols());
  for (std::size_t i = 0; i < f.size(); ++i) s += w[i] * f[i];
  return s;
}

namespace {

void check_volterra_shapes(const NodeKernel& kernel, const SampledFunction& forcing) {
  if (static_cast<int>(forcing.size()) != kernel.points())
    throw DimensionError("volterra2_solve: kernel and forcing grids differ");
  if (forcing.rows() != kernel.dim()) throw DimensionError("volterra2_solve: kernel/forcing row mismatch");
}

}  // namespace

SampledFunction volterra2_solve(const NodeKernel& kernel, const SampledFunction& forcing, VolterraBound bound,
                                const VolterraOptions& options) {
  check_volterra_shapes(kernel, forcing);
  const int n = kernel.points();
  const double h = forcing.grid()[1] - forcing.grid()[0];
  std::vector<Matrix> g = forcing.values();
  std::vector<Matrix> next(g.size());
  std::vector<double> history;
  for (int it = 0; it < options.max_iterations; ++it) {
    double change = 0.0;
    for (int a = 0; a < n; ++a) {
      Matrix acc = forcing[a];
      const int lo = bound == VolterraBound::Upper ? a : 0;
      const int hi = bound == VolterraBound::Upper ? n - 1 : a;
      for (int b = lo; b <= hi && hi > lo; ++b) {
        const double w = (b == lo || b == hi) ? 0.5 * h : h;
        acc.noalias() += w * kernel.at(a, b) * g[b];
      }
      change = std::max(change, (acc - g[a]).cwiseAbs().maxCoeff());
      next[a] = std::move(acc);
    }
    std::swap(g, next);
    history.push_back(change);
    if (change <= options.tolerance) return {forcing.grid(), std::move(g)};
    if (!std::isfinite(change)) break;
  }
  throw NumericalError("Volterra Picard iteration did not converge", history);
}

SampledFunction volterra2_solve_direct(const NodeKernel& kernel, const SampledFunction& forcing,
                                       VolterraBound bound) {
  check_volterra_shapes(kernel, forcing);
  const int n = kernel.points();
  const int d = kernel.dim();
  const double h = forcing.grid()[1] - forcing.grid()[0];
  std::vector<Matrix> g(n);
  const Matrix id = Matrix::Identity(d, d);
  auto solve_node = [&](int a, int lo, int hi) {
    Matrix rhs = forcing[a];
    if (hi > lo) {
      for (int b = lo; b <= hi; ++b) {
        if (b == a) continue;
        const double w = (b == lo || b == hi) ? 0.5 * h : h;
        rhs.noalias() += w * kernel.at(a, b) * g[b];
      }
      g[a] = (id - 0.5 * h * kernel.at(a, a)).partialPivLu().solve(rhs);
    } else {
      g[a] = rhs;
    }
  };
  if (bound == VolterraBound::Upper) {
    for (int a = n - 1; a >= 0; --a) solve_node(a, a, n - 1);
  } else {
    for (int a = 0; a < n; ++a) solve_node(a, 0, a);
  }
  return {forcing.grid(), std::move(g)};
}

}  // namespace hyperstab
