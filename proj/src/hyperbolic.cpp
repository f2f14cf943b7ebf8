#include "hyperstab/hyperbolic.hpp"

#include <cmath>
#include <stdexcept>

namespace hyperstab {

double TransportSystem::max_speed() const {
  double s = 0.0;
  if (lambda.size() > 0) s = std::max(s, lambda.maxCoeff());
  if (mu.size() > 0) s = std::max(s, mu.maxCoeff());
  return s;
}

Vector TransportState::a1(int n) const { return W.row(W.rows() - 1).head(n).transpose(); }

Vector TransportState::a0(int n) const { return W.row(0).head(n).transpose(); }

Vector TransportState::b0(int n) const { return W.row(0).tail(W.cols() - n).transpose(); }

namespace {

Traces traces_of(const Matrix& W, int n) {
  const int last = static_cast<int>(W.rows()) - 1;
  return {W.row(last).head(n).transpose(), W.row(0).tail(W.cols() - n).transpose(), W.row(0).head(n).transpose()};
}

}  // namespace

TransportStepper::TransportStepper(TransportSystem system, double dt, Exec exec, Interpolation interp)
    : sys_(std::move(system)), dt_(dt), exec_(exec), d_(sys_.n + sys_.m) {
  const int N = sys_.nodes();
  if (N < 4) throw DimensionError("TransportStepper: grid too small");
  const double h = sys_.grid[1] - sys_.grid[0];
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  if (dt * sys_.max_speed() > h * (1.0 + 1e-9))
    throw std::invalid_argument("CFL condition violated: dt * max speed exceeds the grid spacing");
  feet_.resize(d_);
  for (int c = 0; c < d_; ++c) {
    const bool right = c < sys_.n;
    const double speed = right ? sys_.lambda(c) : sys_.mu(c - sys_.n);
    feet_[c].resize(N);
    for (int a = 0; a < N; ++a) {
      const double s = std::clamp(a + (right ? -1.0 : 1.0) * speed * dt / h, 0.0, static_cast<double>(N - 1));
      const double r = std::round(s);
      Foot f;
      if (std::abs(s - r) < 1e-12) {
        f.base = static_cast<int>(r);
      } else if (interp == Interpolation::Linear) {
        f.base = std::min(static_cast<int>(std::floor(s)), N - 2);
        f.count = 2;
        f.w = {1.0 - (s - f.base), s - f.base, 0.0, 0.0};
      } else {
        f.base = std::clamp(static_cast<int>(std::floor(s)) - 1, 0, N - 4);
        f.count = 4;
        const double x = s - f.base;
        for (int k = 0; k < 4; ++k) {
          double l = 1.0;
          for (int j = 0; j < 4; ++j)
            if (j != k) l *= (x - j) / (k - j);
          f.w[k] = l;
        }
      }
      feet_[c][a] = f;
    }
  }
  w_ = trapezoid_weights(sys_.grid);
  Matrix near = Matrix::Identity(sys_.n, sys_.n);
  if (!sys_.F_alpha.empty()) near -= w_[0] * sys_.F_alpha[0];
  near_lu_ = near.partialPivLu();
}

Matrix TransportStepper::rates(const Matrix& W, const Vector& e) const {
  const int N = sys_.nodes();
  Matrix F = Matrix::Zero(N, d_);
  const Traces tr = traces_of(W, sys_.n);
  for (int a = 0; a < N; ++a) {
    Vector f = Vector::Zero(d_);
    if (!sys_.sigma.empty()) f.noalias() += sys_.sigma[a] * W.row(a).transpose();
    if (!sys_.src_out.empty()) f.noalias() += sys_.src_out[a] * tr.a1;
    if (!sys_.src_in.empty()) f.noalias() += sys_.src_in[a] * tr.a0;
    if (!sys_.src_ext.empty()) f.noalias() += sys_.src_ext[a] * e;
    F.row(a) = f.transpose();
  }
  return F;
}

void TransportStepper::transport(const Matrix& base, Matrix& out) const {
  const int N = sys_.nodes();
  const bool par = exec_ == Exec::Parallel;
#pragma omp parallel for schedule(static) if (par)
  for (int c = 0; c < d_; ++c) {
    const bool right = c < sys_.n;
    const int lo = right ? 1 : 0;
    const int hi = right ? N - 1 : N - 2;
    for (int a = lo; a <= hi; ++a) {
      const Foot& f = feet_[c][a];
      double v = 0.0;
      for (int k = 0; k < f.count; ++k) v += f.w[k] * base(f.base + k, c);
      out(a, c) = v;
    }
  }
}

void TransportStepper::apply_boundaries(Matrix& W, double t, const Vector& Y, const StepHooks& hooks) const {
  const int N = sys_.nodes(), n = sys_.n, m = sys_.m;
  Vector b1 = sys_.R * W.row(N - 1).head(n).transpose();
  if (hooks.far) b1 += hooks.far(t, Y);
  W.row(N - 1).tail(m) = b1.transpose();

  Vector rest = sys_.Q * W.row(0).tail(m).transpose();
  for (int a = 0; a < N; ++a) {
    if (!sys_.F_alpha.empty() && a > 0) rest.noalias() += w_[a] * sys_.F_alpha[a] * W.row(a).head(n).transpose();
    if (!sys_.F_beta.empty()) rest.noalias() += w_[a] * sys_.F_beta[a] * W.row(a).tail(m).transpose();
  }
  if (hooks.near) rest += hooks.near(t, Y, W);
  W.row(0).head(n) = near_lu_.solve(rest).transpose();
}

void TransportStepper::step(TransportState& s, double t, const StepHooks& hooks) const {
  const double dt = dt_;
  const bool has_ext = !sys_.src_ext.empty();
  const Vector e0 = has_ext ? hooks.ext(t) : Vector();
  const Vector e1 = has_ext ? hooks.ext(t + dt) : Vector();
  const bool has_ode = hooks.ode && s.Y.size() > 0;

  const Matrix& W0 = s.W;
  const Matrix F0 = rates(W0, e0);
  const Vector f0 = has_ode ? hooks.ode(t, s.Y, traces_of(W0, sys_.n)) : Vector();

  Matrix Ws = W0;
  transport(W0 + dt * F0, Ws);
  const Vector Ys = has_ode ? Vector(s.Y + dt * f0) : s.Y;
  apply_boundaries(Ws, t + dt, Ys, hooks);

  const Matrix F1 = rates(Ws, e1);
  Matrix Wn = Ws;
  transport(W0 + 0.5 * dt * F0, Wn);
  const int N = sys_.nodes();
  for (int c = 0; c < d_; ++c) {
    const bool right = c < sys_.n;
    const int lo = right ? 1 : 0;
    const int hi = right ? N - 1 : N - 2;
    for (int a = lo; a <= hi; ++a) Wn(a, c) += 0.5 * dt * F1(a, c);
  }
  Vector Yn = s.Y;
  if (has_ode) Yn += 0.5 * dt * (f0 + hooks.ode(t + dt, Ys, traces_of(Ws, sys_.n)));
  apply_boundaries(Wn, t + dt, Yn, hooks);
  s.W = std::move(Wn);
  s.Y = std::move(Yn);
}

}  // namespace hyperstab
