#pragma once

#include <array>

#include <functional>
#include <vector>

#include "hyperstab/numerics.hpp"

namespace hyperstab {

/// Boundary-coupled transport system on a uniform grid of [0,1]:
///
///   a_t + diag(lambda) a_x = [S W]_a + Gout_a a(t,1) + Gin_a a(t,0) + Gext_a e(t)
///   b_t - diag(mu) b_x     = [S W]_b + Gout_b a(t,1) + Gin_b a(t,0) + Gext_b e(t)
///   b(t,1) = R a(t,1) + far(t, Y)
///   a(t,0) = Q b(t,0) + int_0^1 Fa a + Fb b dx + near(t, Y, W)
///   Y'     = ode(t, Y, a(t,1), b(t,0), a(t,0))
///
/// Plant, both target systems and the observer are instances.
struct TransportSystem {
  int n = 0, m = 0;
  Vector lambda, mu;
  std::vector<double> grid;
  std::vector<Matrix> sigma;    ///< (n+m)x(n+m) per node; empty when absent
  std::vector<Matrix> src_out;  ///< (n+m)xn per node
  std::vector<Matrix> src_in;   ///< (n+m)xn per node
  std::vector<Matrix> src_ext;  ///< (n+m)xk per node
  Matrix Q, R;
  std::vector<Matrix> F_alpha;  ///< nxn per node
  std::vector<Matrix> F_beta;   ///< nxm per node

  int nodes() const { return static_cast<int>(grid.size()); }
  double max_speed() const;
};

struct TransportState {
  Matrix W;  ///< nodes x (n+m): alpha columns then beta columns
  Vector Y;  ///< lumped ODE state

  Vector a1(int n) const;
  Vector a0(int n) const;
  Vector b0(int n) const;
};

struct Traces {
  Vector a1, b0, a0;
};

struct StepHooks {
  std::function<Vector(double t, const Vector& Y, const Traces& tr)> ode;
  std::function<Vector(double t, const Vector& Y)> far;
  std::function<Vector(double t, const Vector& Y, const Matrix& W)> near;
  std::function<Vector(double t)> ext;
};

enum class Interpolation { Linear, Cubic };

/// Semi-Lagrangian stepper: characteristic feet with linear or cubic Lagrange
/// interpolation, Heun predictor-corrector for sources, couplings and the
/// lumped ODE.
class TransportStepper {
 public:
  TransportStepper(TransportSystem system, double dt, Exec exec = Exec::Parallel,
                   Interpolation interp = Interpolation::Linear);

  void step(TransportState& state, double t, const StepHooks& hooks) const;

  const TransportSystem& system() const { return sys_; }
  double dt() const { return dt_; }

 private:
  struct Foot {
    int base = 0;
    int count = 1;
    std::array<double, 4> w{1.0, 0.0, 0.0, 0.0};
  };

  Matrix rates(const Matrix& W, const Vector& e) const;
  void transport(const Matrix& base, Matrix& out) const;
  void apply_boundaries(Matrix& W, double t, const Vector& Y, const StepHooks& hooks) const;

  TransportSystem sys_;
  double dt_;
  Exec exec_;
  int d_;
  std::vector<std::vector<Foot>> feet_;  // per component, per node
  Eigen::PartialPivLU<Matrix> near_lu_;
  std::vector<double> w_;
};

}  // namespace hyperstab
