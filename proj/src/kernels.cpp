#include "hyperstab/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace hyperstab {

TriGrid::TriGrid(int points) : N(points) {
  if (points < 3) throw std::invalid_argument("TriGrid needs N >= 3");
  h = 1.0 / (points - 1);
  x = uniform_grid(points);
}

namespace {

struct Stencil {
  int a[3];
  int b[3];
  double w[3];
};

// Triangulated linear interpolation. Each cell is split along its diagonal;
// for points with x <= nu only the upper-left triangle of a diagonal cell is
// touched.
Stencil upper_stencil(const TriGrid& g, double x, double nu) {
  x = std::clamp(x, 0.0, 1.0);
  nu = std::clamp(nu, 0.0, 1.0);
  if (x > nu) x = nu;
  const double sx = x / g.h, sn = nu / g.h;
  int a = std::min(static_cast<int>(sx), g.N - 2);
  int b = std::min(static_cast<int>(sn), g.N - 2);
  double fx = sx - a, fn = sn - b;
  if (a > b) {  // only possible through clamping at the top cell
    a = b;
    fx = std::min(fx, fn);
  }
  if (fx <= fn) {
    // (a,b), (a,b+1), (a+1,b+1)
    return {{a, a, a + 1}, {b, b + 1, b + 1}, {1.0 - fn, fn - fx, fx}};
  }
  // (a,b), (a+1,b), (a+1,b+1)
  return {{a, a + 1, a + 1}, {b, b, b + 1}, {1.0 - fx, fx - fn, fn}};
}

Stencil square_stencil(const TriGrid& g, double x, double y, double& fx_out, double& fy_out) {
  x = std::clamp(x, 0.0, 1.0);
  y = std::clamp(y, 0.0, 1.0);
  const int a = std::min(static_cast<int>(x / g.h), g.N - 2);
  const int b = std::min(static_cast<int>(y / g.h), g.N - 2);
  fx_out = x / g.h - a;
  fy_out = y / g.h - b;
  return {{a, a + 1, a}, {b, b, b + 1}, {0, 0, 0}};
}

// Value of sampled function at x on a uniform grid, single entry.
double interp_entry(const SampledFunction& f, double h, double x, int r, int c) {
  const int n = static_cast<int>(f.size());
  x = std::clamp(x, 0.0, 1.0);
  const int a = std::min(static_cast<int>(x / h), n - 2);
  const double t = x / h - a;
  return (1.0 - t) * f[a](r, c) + t * f[a + 1](r, c);
}

enum class Exit : unsigned char { Diagonal, LeftEdge, TopEdge };

struct Trace {
  double t = 0.0;        // parameter length to the exit
  double ex = 0.0;       // exit point
  double en = 0.0;
  Exit exit = Exit::Diagonal;
};

}  // namespace

Matrix interpolate_upper(const NodeKernel& k, const TriGrid& g, double x, double nu) {
  const Stencil s = upper_stencil(g, x, nu);
  Matrix out = s.w[0] * k.at(s.a[0], s.b[0]);
  out += s.w[1] * k.at(s.a[1], s.b[1]);
  out += s.w[2] * k.at(s.a[2], s.b[2]);
  return out;
}

Matrix interpolate_square(const NodeKernel& k, const TriGrid& g, double x, double y) {
  double fx = 0, fy = 0;
  const Stencil s = square_stencil(g, x, y, fx, fy);
  const int a = s.a[0], b = s.b[0];
  return (1 - fx) * (1 - fy) * k.at(a, b) + fx * (1 - fy) * k.at(a + 1, b) + (1 - fx) * fy * k.at(a, b + 1) +
         fx * fy * k.at(a + 1, b + 1);
}

// ---------------------------------------------------------------------------
// Observer kernels

namespace {

class ObserverKernelSolver {
 public:
  ObserverKernelSolver(const PlantModel& md, const TriGrid& g, const KernelOptions& opt)
      : md_(md), g_(g), opt_(opt), n_(md.n), m_(md.m), d_(md.n + md.m), speeds_(md.speeds()) {
    sigma_nodes_.reserve(g.N);
    for (double x : g.x) sigma_nodes_.push_back(md.sigma(x));
    has_sigma_ = false;
    for (const auto& s : sigma_nodes_) has_sigma_ = has_sigma_ || s.cwiseAbs().maxCoeff() > 0.0;
    build_traces();
  }

  KernelSetObserver solve() {
    KernelSetObserver ks;
    ks.grid = g_;
    ks.n = n_;
    ks.m = m_;
    ks.gamma = solve_gamma();
    NodeKernel cur(g_.N, d_);
    SampledFunction L1 = SampledFunction::zeros(g_.x, md_.p, n_);
    SampledFunction L2 = SampledFunction::zeros(g_.x, md_.p, m_);
    for (int sweep = 0; sweep < opt_.max_sweeps; ++sweep) {
      solve_boundary_odes(cur, L1, L2);
      NodeKernel next(g_.N, d_);
      const double change = sweep_once(cur, next, L1);
      cur = std::move(next);
      ks.sweep_changes.push_back(change);
      if (change <= opt_.tolerance && sweep > 0) {
        solve_boundary_odes(cur, L1, L2);
        ks.L = std::move(cur);
        ks.L1 = std::move(L1);
        ks.L2 = std::move(L2);
        return ks;
      }
      if (!std::isfinite(change)) break;
    }
    throw NumericalError("kernel Picard sweeps did not converge", ks.sweep_changes);
  }

 private:
  // Trace direction sign for component (r, c): which boundary carries data.
  int direction(int r, int c) const {
    const bool ra = r < n_, ca = c < n_;
    if (ra && ca) return r <= c ? -1 : 1;
    if (ra && !ca) return 1;
    if (!ra && ca) return -1;
    return (r - n_) > (c - n_) ? -1 : 1;
  }

  Trace trace(int r, int c, double x, double nu) const {
    const double sgn = direction(r, c);
    const double dx = sgn * speeds_(r), dn = sgn * speeds_(c);
    constexpr double inf = std::numeric_limits<double>::infinity();
    double t_left = inf, t_top = inf, t_diag = inf;
    if (dx < 0) t_left = x / (-dx);
    if (dn > 0) t_top = (1.0 - nu) / dn;
    if (dx > dn) t_diag = std::max(0.0, nu - x) / (dx - dn);
    Trace tr;
    constexpr double tie = 1e-13;
    if (t_left <= t_diag + tie && t_left <= t_top + tie) {
      tr.t = t_left;
      tr.exit = Exit::LeftEdge;
    } else if (t_diag <= t_top + tie) {
      tr.t = t_diag;
      tr.exit = Exit::Diagonal;
    } else {
      tr.t = t_top;
      tr.exit = Exit::TopEdge;
    }
    if (!std::isfinite(tr.t)) throw std::logic_error("kernel characteristic never leaves the triangle");
    tr.ex = std::clamp(x + tr.t * dx, 0.0, 1.0);
    tr.en = std::clamp(nu + tr.t * dn, 0.0, 1.0);
    if (tr.exit == Exit::LeftEdge) tr.ex = 0.0;
    if (tr.exit == Exit::TopEdge) tr.en = 1.0;
    if (tr.exit == Exit::Diagonal) tr.en = tr.ex;

    const bool ra = r < n_, ca = c < n_;
    const bool data_ok = (tr.exit == Exit::Diagonal && speeds_(r) != speeds_(c)) ||
                         (tr.exit == Exit::LeftEdge && ra == ca && (ra ? r <= c : r - n_ <= c - n_)) ||
                         (tr.exit == Exit::TopEdge && ra == ca && (ra ? r > c : r - n_ > c - n_));
    if (!data_ok) throw std::logic_error("kernel characteristic left the triangle through a data-free edge");
    return tr;
  }

  void build_traces() {
    traces_.resize(std::size_t(d_) * d_ * g_.N * g_.N);
    for (int r = 0; r < d_; ++r)
      for (int c = 0; c < d_; ++c)
        for (int a = 0; a < g_.N; ++a)
          for (int b = a; b < g_.N; ++b) traces_[index(r, c, a, b)] = trace(r, c, g_.x[a], g_.x[b]);
  }

  std::size_t index(int r, int c, int a, int b) const {
    return ((std::size_t(r) * d_ + c) * g_.N + a) * g_.N + b;
  }

  double sigma_entry(int r, int k, double x) const {
    const double s = std::clamp(x, 0.0, 1.0) / g_.h;
    const int a = std::min(static_cast<int>(s), g_.N - 2);
    const double t = s - a;
    return (1 - t) * sigma_nodes_[a](r, k) + t * sigma_nodes_[a + 1](r, k);
  }

  // Data on the characteristic's exit point.
  double datum(int r, int c, const Trace& tr, const NodeKernel& cur, const SampledFunction& L1) const {
    switch (tr.exit) {
      case Exit::Diagonal:
        return sigma_entry(r, c, tr.ex) / (speeds_(r) - speeds_(c));
      case Exit::TopEdge:
        return 0.0;
      case Exit::LeftEdge:
        if (r >= n_) return 0.0;
        {
          // (Q L^{beta alpha}(0,nu) + C0 L1(nu))_{rc}
          const Matrix lk = interpolate_upper(cur, g_, 0.0, tr.en);
          double v = 0.0;
          for (int k = 0; k < m_; ++k) v += md_.Q(r, k) * lk(n_ + k, c);
          for (int k = 0; k < md_.p; ++k) v += md_.C0(r, k) * interp_entry(L1, g_.h, tr.en, k, c);
          return v;
        }
    }
    return 0.0;
  }

  double path_integral(int r, int c, double x, double nu, const Trace& tr, const NodeKernel& src) const {
    if (!has_sigma_ || tr.t <= 0.0) return 0.0;
    const double sgn = direction(r, c);
    const double dx = sgn * speeds_(r), dn = sgn * speeds_(c);
    const double len = tr.t * std::hypot(dx, dn) / g_.h;
    const int K = std::max(1, static_cast<int>(std::ceil(len)));
    const double dt = tr.t / K;
    double acc = 0.0;
    for (int s = 0; s <= K; ++s) {
      const Stencil st = upper_stencil(g_, x + s * dt * dx, nu + s * dt * dn);
      const double val = st.w[0] * src.at(st.a[0], st.b[0])(r, c) + st.w[1] * src.at(st.a[1], st.b[1])(r, c) +
                         st.w[2] * src.at(st.a[2], st.b[2])(r, c);
      acc += (s == 0 || s == K ? 0.5 : 1.0) * val;
    }
    return sgn * acc * dt;
  }

  // Sigma(x) L(x, nu) on the nodes.
  NodeKernel source(const NodeKernel& cur) const {
    NodeKernel src(g_.N, d_);
    if (!has_sigma_) return src;
    for (int a = 0; a < g_.N; ++a)
      for (int b = a; b < g_.N; ++b) src.at(a, b).noalias() = sigma_nodes_[a] * cur.at(a, b);
    return src;
  }

  double sweep_once(const NodeKernel& cur, NodeKernel& next, const SampledFunction& L1) const {
    double change = 0.0;
    const bool par = opt_.exec == Exec::Parallel;
    const NodeKernel src = source(cur);
#pragma omp parallel for schedule(dynamic, 4) reduction(max : change) if (par)
    for (int a = 0; a < g_.N; ++a) {
      for (int b = a; b < g_.N; ++b) {
        for (int r = 0; r < d_; ++r) {
          for (int c = 0; c < d_; ++c) {
            const Trace& tr = traces_[index(r, c, a, b)];
            const double v = datum(r, c, tr, cur, L1) - path_integral(r, c, g_.x[a], g_.x[b], tr, src);
            next.at(a, b)(r, c) = v;
            change = std::max(change, std::abs(v - cur.at(a, b)(r, c)));
          }
        }
      }
    }
    return change;
  }

  // L1' Lambda+ = A0 L1 + E0 L^{ba}(0,.),  L1(0) = 0
  // L2' Lambda- = -A0 L2 - E0 L^{bb}(0,.), L2(0) Lambda- = E0
  void solve_boundary_odes(const NodeKernel& cur, SampledFunction& L1, SampledFunction& L2) const {
    const Vector inv_l = md_.lambda.cwiseInverse();
    const Vector inv_m = md_.mu.cwiseInverse();
    auto line = [&](double nu) -> Matrix {
      const double s = std::clamp(nu, 0.0, 1.0) / g_.h;
      const int b = std::min(static_cast<int>(s), g_.N - 2);
      const double t = s - b;
      return (1 - t) * cur.at(0, b) + t * cur.at(0, b + 1);
    };
    auto f1 = [&](double nu, const Matrix& y) -> Matrix {
      const Matrix lba = line(nu).block(n_, 0, m_, n_);
      return (md_.A0 * y + md_.E0 * lba) * inv_l.asDiagonal();
    };
    auto f2 = [&](double nu, const Matrix& y) -> Matrix {
      const Matrix lbb = line(nu).block(n_, n_, m_, m_);
      return -(md_.A0 * y + md_.E0 * lbb) * inv_m.asDiagonal();
    };
    L1[0] = Matrix::Zero(md_.p, n_);
    L2[0] = md_.E0 * inv_m.asDiagonal();
    const double h = g_.h;
    for (int a = 0; a + 1 < g_.N; ++a) {
      const double x = g_.x[a];
      {
        const Matrix& y = L1[a];
        const Matrix k1 = f1(x, y), k2 = f1(x + h / 2, y + h / 2 * k1), k3 = f1(x + h / 2, y + h / 2 * k2),
                     k4 = f1(x + h, y + h * k3);
        L1[a + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
      {
        const Matrix& y = L2[a];
        const Matrix k1 = f2(x, y), k2 = f2(x + h / 2, y + h / 2 * k1), k3 = f2(x + h / 2, y + h / 2 * k2),
                     k4 = f2(x + h, y + h * k3);
        L2[a + 1] = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      }
    }
  }

  // Lambda gamma' = Sigma gamma - gamma A1, gamma(1) = [0; C1]
  SampledFunction solve_gamma() const {
    SampledFunction gam = SampledFunction::zeros(g_.x, d_, md_.q);
    Matrix y = Matrix::Zero(d_, md_.q);
    y.bottomRows(m_) = md_.C1;
    gam[g_.N - 1] = y;
    const Vector inv_s = speeds_.cwiseInverse();
    auto sig = [&](double x) {
      const double s = std::clamp(x, 0.0, 1.0) / g_.h;
      const int a = std::min(static_cast<int>(s), g_.N - 2);
      const double t = s - a;
      return Matrix((1 - t) * sigma_nodes_[a] + t * sigma_nodes_[a + 1]);
    };
    auto f = [&](double x, const Matrix& z) -> Matrix {
      return inv_s.asDiagonal() * (sig(x) * z - z * md_.A1);
    };
    const double h = -g_.h;
    for (int a = g_.N - 1; a > 0; --a) {
      const double x = g_.x[a];
      const Matrix k1 = f(x, y), k2 = f(x + h / 2, y + h / 2 * k1), k3 = f(x + h / 2, y + h / 2 * k2),
                   k4 = f(x + h, y + h * k3);
      y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
      gam[a - 1] = y;
    }
    return gam;
  }

  const PlantModel& md_;
  const TriGrid& g_;
  KernelOptions opt_;
  int n_, m_, d_;
  Vector speeds_;
  std::vector<Matrix> sigma_nodes_;
  bool has_sigma_ = false;
  std::vector<Trace> traces_;
};

}  // namespace

KernelSetObserver solve_observer_kernels(const PlantModel& model, const TriGrid& grid, const KernelOptions& options) {
  ObserverKernelSolver solver(model, grid, options);
  return solver.solve();
}

double jump_condition_residual(const PlantModel& md, const KernelSetObserver& ks) {
  const Vector s = md.speeds();
  const int d = md.n + md.m;
  double res = 0.0;
  for (int a = 0; a < ks.grid.N; ++a) {
    const Matrix l = ks.L.at(a, a);
    const Matrix sig = md.sigma(ks.grid.x[a]);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < d; ++c) {
        if (s(r) == s(c)) continue;
        if (a == 0 && r < c && c < md.n) continue;  // corner node carries the x = 0 closure value
        res = std::max(res, std::abs((s(r) - s(c)) * l(r, c) - sig(r, c)));
      }
  }
  return res;
}

// ---------------------------------------------------------------------------
// Coupling functions

namespace {

Matrix boundary_stack(const PlantModel& md) {
  // Lambda [I; R]
  Matrix s(md.n + md.m, md.n);
  s << Matrix(md.lambda.asDiagonal()), -(md.mu.asDiagonal() * md.R);
  return s;
}

}  // namespace

CouplingFunctions solve_coupling_terms(const PlantModel& md, const KernelSetObserver& ks) {
  const int N = ks.grid.N, n = md.n, m = md.m;
  const Matrix lam_stack = boundary_stack(md);
  SampledFunction forcing = SampledFunction::zeros(ks.grid.x, n + m, n);
  for (int a = 0; a < N; ++a) forcing[a] = -ks.L.at(a, N - 1) * lam_stack - ks.gamma[a] * md.E1;
  const SampledFunction G = volterra2_solve(ks.L, forcing, VolterraBound::Upper);

  CouplingFunctions cf;
  cf.G1 = SampledFunction::zeros(ks.grid.x, n, n);
  cf.G2 = SampledFunction::zeros(ks.grid.x, m, n);
  cf.F_alpha = SampledFunction::zeros(ks.grid.x, n, n);
  cf.F_beta = SampledFunction::zeros(ks.grid.x, n, m);
  SampledFunction integrand = SampledFunction::zeros(ks.grid.x, md.p, n);
  for (int a = 0; a < N; ++a) {
    cf.G1[a] = G[a].topRows(n);
    cf.G2[a] = G[a].bottomRows(m);
    integrand[a] = ks.L1[a] * cf.G1[a] + ks.L2[a] * cf.G2[a];
    const Matrix l0 = ks.L.at(0, a);
    cf.F_alpha[a] = l0.topLeftCorner(n, n) - md.Q * l0.bottomLeftCorner(m, n) - md.C0 * ks.L1[a];
    cf.F_beta[a] = l0.topRightCorner(n, m) - md.Q * l0.bottomRightCorner(m, m) - md.C0 * ks.L2[a];
  }
  // Strict lower triangularity holds by the closure condition on x = 0.
  for (int a = 0; a < N; ++a) {
    for (int i = 0; i < n; ++i)
      for (int j = i; j < n; ++j) {
        if (std::abs(cf.F_alpha[a](i, j)) > 1e-8)
          throw NumericalError("F_alpha is not strictly lower triangular; kernel solve inconsistent");
        cf.F_alpha[a](i, j) = 0.0;
      }
  }
  cf.G3 = ks.L2[N - 1] * md.mu.asDiagonal() * md.R - ks.L1[N - 1] * md.lambda.asDiagonal() + trapezoid(integrand);
  const Matrix gb0 = ks.gamma[0].bottomRows(m);
  const Matrix ga0 = ks.gamma[0].topRows(n);
  cf.G4 = md.E0 * gb0;
  cf.K_X = md.Q * gb0 - ga0;
  return cf;
}

double coupling_residual(const PlantModel& md, const KernelSetObserver& ks, const CouplingFunctions& cf,
                         int refine) {
  const int n = md.n, m = md.m;
  const TriGrid fine((ks.grid.N - 1) * refine + 1);
  const Matrix lam_stack = boundary_stack(md);
  std::vector<Matrix> G(fine.N);
  for (int a = 0; a < fine.N; ++a) {
    G[a].resize(n + m, n);
    G[a] << cf.G1.at(fine.x[a]), cf.G2.at(fine.x[a]);
  }
  double res = 0.0;
  for (int a = 0; a < fine.N; ++a) {
    const double x = fine.x[a];
    Matrix r = G[a] + interpolate_upper(ks.L, ks.grid, x, 1.0) * lam_stack + ks.gamma.at(x) * md.E1;
    for (int b = a; b < fine.N; ++b) {
      if (a == fine.N - 1) break;
      const double w = (b == a || b == fine.N - 1) ? 0.5 * fine.h : fine.h;
      r -= w * interpolate_upper(ks.L, ks.grid, x, fine.x[b]) * G[b];
    }
    res = std::max(res, r.cwiseAbs().maxCoeff());
  }
  return res;
}

// ---------------------------------------------------------------------------
// Control kernels

KernelSetControl solve_control_kernels(const SampledFunction& G1, const PlantModel& md, const TriGrid& g,
                                       const CouplingFunctions& cf) {
  const int n = md.n, N = g.N;
  if (static_cast<int>(G1.size()) != N) throw DimensionError("solve_control_kernels: G1 grid mismatch");
  KernelSetControl kc;
  kc.grid = g;
  kc.n = n;
  kc.L_check = NodeKernel(N, n);
  kc.G_check = SampledFunction::zeros(g.x, n, n);
  kc.L_bar = NodeKernel(N, n);
  const auto& lam = md.lambda;

  auto interp_vec = [&](const std::vector<double>& f, double x) {
    const double s = std::clamp(x, 0.0, 1.0) / g.h;
    const int a = std::min(static_cast<int>(s), N - 2);
    const double t = s - a;
    return (1 - t) * f[a] + t * f[a + 1];
  };

  for (int j = 0; j < n; ++j) {
    if (j > 0) {
      NodeKernel kj(N, j);
      SampledFunction fj = SampledFunction::zeros(g.x, j, 1);
      for (int a = 0; a < N; ++a) {
        fj[a] = G1[a].block(0, j, j, 1);
        for (int b = a; b < N; ++b) kj.at(a, b) = kc.L_check.at(a, b).topLeftCorner(j, j);
      }
      SampledFunction gj;
      try {
        gj = volterra2_solve(kj, fj, VolterraBound::Upper);
      } catch (const NumericalError& e) {
        throw NumericalError("G_check Volterra solve failed for column " + std::to_string(j), e.residuals());
      }
      for (int a = 0; a < N; ++a) kc.G_check[a].block(0, j, j, 1) = gj[a];
    }
    for (int i = j; i < n; ++i) {
      std::vector<double> datum(N);
      for (int a = 0; a < N; ++a) {
        double integral = 0.0;
        for (int b = a; b < N && a < N - 1; ++b) {
          const double w = (b == a || b == N - 1) ? 0.5 * g.h : g.h;
          for (int k = 0; k < j; ++k) integral += w * kc.L_check.at(a, b)(i, k) * kc.G_check[b](k, j);
        }
        datum[a] = (G1[a](i, j) + integral) / lam(j);
      }
      for (int a = 0; a < N; ++a)
        for (int b = a; b < N; ++b) {
          const double xe = g.x[a] + (1.0 - g.x[b]) * lam(i) / lam(j);
          kc.L_check.at(a, b)(i, j) = xe <= 1.0 + 1e-12 ? interp_vec(datum, xe) : 0.0;
        }
    }
  }

  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j) {
      std::vector<double> datum(N);
      for (int a = 0; a < N; ++a) datum[a] = kc.G_check[a](i, j) / lam(j);
      for (int a = 0; a < N; ++a)
        for (int b = 0; b < N; ++b) {
          const double xe = g.x[a] + (1.0 - g.x[b]) * lam(i) / lam(j);
          kc.L_bar.at(a, b)(i, j) = xe <= 1.0 + 1e-12 ? interp_vec(datum, xe) : 0.0;
        }
    }

  // G5 = L_bar(x,0) Lambda + int_0^1 L_bar(x,y) G5(y) dy; nilpotent, n passes.
  const auto w = trapezoid_weights(g.x);
  kc.G5 = SampledFunction::zeros(g.x, n, n);
  for (int pass = 0; pass <= n; ++pass) {
    SampledFunction next = SampledFunction::zeros(g.x, n, n);
    for (int a = 0; a < N; ++a) {
      next[a] = kc.L_bar.at(a, 0) * lam.asDiagonal();
      for (int b = 0; b < N; ++b) next[a] += w[b] * kc.L_bar.at(a, b) * kc.G5[b];
    }
    kc.G5 = std::move(next);
  }

  // Boundary kernel of alpha_bar(t,0) after both transforms.
  const auto& Fa = cf.F_alpha;
  std::vector<Matrix> phi(N, Matrix::Zero(n, n));  // phi(eta) = int_0^eta F_alpha(nu) L_check(nu, eta) dnu
  for (int e = 1; e < N; ++e)
    for (int c = 0; c <= e; ++c) {
      const double wc = (c == 0 || c == e) ? 0.5 * g.h : g.h;
      phi[e] += wc * Fa[c] * kc.L_check.at(c, e);
    }
  kc.F_alpha_bar = SampledFunction::zeros(g.x, n, n);
  for (int b = 0; b < N; ++b) {
    Matrix f = Fa[b] + kc.L_bar.at(0, b) + kc.L_check.at(0, b);
    for (int c = 0; c < N; ++c) {
      f -= w[c] * kc.L_check.at(0, c) * kc.L_bar.at(c, b);
      f -= w[c] * Fa[c] * kc.L_bar.at(c, b);
      f += w[c] * phi[c] * kc.L_bar.at(c, b);
    }
    f -= phi[b];
    kc.F_alpha_bar[b] = f;
  }
  return kc;
}

double control_kernel_residual(const KernelSetControl& kc, const SampledFunction& G1, int refine) {
  const int n = kc.n;
  const TriGrid fine((kc.grid.N - 1) * refine + 1);
  std::vector<Matrix> gc(fine.N);
  for (int a = 0; a < fine.N; ++a) gc[a] = kc.G_check.at(fine.x[a]);
  double res = 0.0;
  for (int a = 0; a < fine.N; ++a) {
    const double x = fine.x[a];
    Matrix integral = Matrix::Zero(n, n);
    for (int b = a; b < fine.N && a < fine.N - 1; ++b) {
      const double w = (b == a || b == fine.N - 1) ? 0.5 * fine.h : fine.h;
      integral += w * interpolate_upper(kc.L_check, kc.grid, x, fine.x[b]) * gc[b];
    }
    const Matrix g1 = G1.at(x);
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) res = std::max(res, std::abs(gc[a](i, j) - g1(i, j) - integral(i, j)));
  }
  return res;
}

}  // namespace hyperstab
