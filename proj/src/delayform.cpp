#include "hyperstab/delayform.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <random>
#include <stdexcept>

#include "hyperstab/systems.hpp"

namespace hyperstab {

DelayExpr::DelayExpr(int rows, std::vector<int> signal_dims, double horizon, int intervals)
    : rows_(rows), dims_(std::move(signal_dims)), horizon_(horizon), intervals_(intervals) {
  if (!(horizon > 0.0) || intervals < 1) throw std::invalid_argument("DelayExpr: empty horizon");
  weights_ = trapezoid_weights(uniform_grid(intervals + 1, 0.0, horizon));
  terms_.resize(dims_.size());
}

void DelayExpr::check_delay(double d) const {
  if (d < -1e-12 || d > horizon_ + 4.01 * spacing())
    throw std::logic_error("delay " + std::to_string(d) + " outside the expression horizon " +
                           std::to_string(horizon_));
}

void DelayExpr::ensure_kernel(int s) {
  auto& k = terms_.at(s).kernel;
  if (k.empty()) k.assign(intervals_ + 1, Matrix::Zero(rows_, dims_.at(s)));
}

void DelayExpr::add_tap(int s, double delay, const Matrix& m) {
  check_delay(delay);
  if (m.rows() != rows_ || m.cols() != dims_.at(s)) throw DimensionError("DelayExpr::add_tap: shape mismatch");
  terms_.at(s).taps.emplace_back(std::clamp(delay, 0.0, horizon_), m);
}

void DelayExpr::deposit(int s, double theta, const Matrix& mass) {
  check_delay(theta);
  if (mass.rows() != rows_ || mass.cols() != dims_.at(s)) throw DimensionError("DelayExpr::deposit: shape mismatch");
  ensure_kernel(s);
  auto& k = terms_[s].kernel;
  const double u = std::clamp(theta, 0.0, horizon_) / spacing();
  int j = std::min(static_cast<int>(u), intervals_ - 1);
  double f = u - j;
  if (f > 1.0 - 1e-12) {
    ++j;
    f = 0.0;
  }
  if (j >= intervals_) {
    j = intervals_ - 1;
    f = 1.0;
  }
  if (f < 1e-12) {
    k[j] += mass / weights_[j];
    return;
  }
  k[j] += (1.0 - f) / weights_[j] * mass;
  k[j + 1] += f / weights_[j + 1] * mass;
}

void DelayExpr::add_density(int s, double lo, double hi, const std::function<Matrix(double)>& density) {
  if (hi <= lo) return;
  const int K = std::max(1, static_cast<int>(std::ceil((hi - lo) / spacing() - 1e-9)));
  const double step = (hi - lo) / K;
  for (int k = 0; k <= K; ++k) {
    const double th = lo + k * step;
    const double w = (k == 0 || k == K) ? 0.5 * step : step;
    deposit(s, th, w * density(th));
  }
}

void DelayExpr::add_shifted(const DelayExpr& e, const Matrix& left, double shift, double weight, bool smear) {
  if (e.dims_ != dims_) throw DimensionError("DelayExpr::add_shifted: signal layouts differ");
  if (left.rows() != rows_ || left.cols() != e.rows_) throw DimensionError("DelayExpr::add_shifted: left factor");
  if (weight == 0.0) return;
  for (int s = 0; s < signal_count(); ++s) {
    const DelayTerm& t = e.terms_[s];
    for (const auto& [d, m] : t.taps) {
      if (smear)
        deposit(s, d + shift, weight * left * m);
      else
        add_tap(s, d + shift, weight * left * m);
    }
    if (t.kernel.empty()) continue;
    const double h = e.spacing();
    for (int j = 0; j <= e.intervals_; ++j) {
      if (t.kernel[j].isZero(0.0)) continue;
      deposit(s, j * h + shift, (weight * e.weights_[j]) * left * t.kernel[j]);
    }
  }
}

DelayExpr DelayExpr::premultiplied(const Matrix& left) const {
  if (left.cols() != rows_) throw DimensionError("DelayExpr::premultiplied: shape mismatch");
  DelayExpr out(static_cast<int>(left.rows()), dims_, horizon_, intervals_);
  for (int s = 0; s < signal_count(); ++s) {
    for (const auto& [d, m] : terms_[s].taps) out.terms_[s].taps.emplace_back(d, left * m);
    if (!terms_[s].kernel.empty()) {
      out.ensure_kernel(s);
      for (int j = 0; j <= intervals_; ++j) out.terms_[s].kernel[j] = left * terms_[s].kernel[j];
    }
  }
  return out;
}

DelayExpr DelayExpr::select(const std::vector<int>& signals) const {
  std::vector<int> dims;
  for (int s : signals) dims.push_back(dims_.at(s));
  DelayExpr out(rows_, dims, horizon_, intervals_);
  for (std::size_t k = 0; k < signals.size(); ++k) out.terms_[k] = terms_[signals[k]];
  return out;
}

void DelayExpr::set_kernel(int s, std::vector<Matrix> samples) {
  if (static_cast<int>(samples.size()) != intervals_ + 1) throw DimensionError("DelayExpr::set_kernel: sample count");
  terms_.at(s).kernel = std::move(samples);
}

void DelayExpr::compact() {
  for (auto& t : terms_) {
    std::stable_sort(t.taps.begin(), t.taps.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::vector<std::pair<double, Matrix>> merged;
    for (auto& tap : t.taps) {
      if (!merged.empty() && std::abs(merged.back().first - tap.first) <= 1e-12)
        merged.back().second += tap.second;
      else
        merged.push_back(std::move(tap));
    }
    std::erase_if(merged, [](const auto& tap) { return tap.second.isZero(0.0); });
    t.taps = std::move(merged);
    if (!t.kernel.empty() && std::all_of(t.kernel.begin(), t.kernel.end(), [](const Matrix& k) { return k.isZero(0.0); }))
      t.kernel.clear();
  }
}

double DelayExpr::max_delay() const {
  double d = 0.0;
  for (const auto& t : terms_) {
    for (const auto& tap : t.taps) d = std::max(d, tap.first);
    for (int j = intervals_; j >= 0 && !t.kernel.empty(); --j)
      if (!t.kernel[j].isZero(0.0)) {
        d = std::max(d, j * spacing());
        break;
      }
  }
  return d;
}

Matrix DelayExpr::tap_sum(int s, double delay, double tol) const {
  Matrix out = Matrix::Zero(rows_, dims_.at(s));
  for (const auto& [d, m] : terms_.at(s).taps)
    if (std::abs(d - delay) <= tol) out += m;
  return out;
}

double DelayExpr::kernel_sup(int s) const {
  double v = 0.0;
  for (const auto& k : terms_.at(s).kernel) v = std::max(v, k.cwiseAbs().maxCoeff());
  return v;
}

Vector DelayExpr::evaluate(const std::vector<SignalView>& signals, double t) const {
  if (static_cast<int>(signals.size()) != signal_count()) throw DimensionError("DelayExpr::evaluate: signal count");
  Vector out = Vector::Zero(rows_);
  const double h = spacing();
  for (int s = 0; s < signal_count(); ++s) {
    const SignalView& v = signals[s];
    if (!v.history && !v.current) continue;
    for (const auto& [d, m] : terms_[s].taps) out.noalias() += m * v.at(t - d, t);
    const auto& k = terms_[s].kernel;
    for (int j = 0; j < static_cast<int>(k.size()); ++j) {
      if (k[j].isZero(0.0)) continue;
      out.noalias() += weights_[j] * (k[j] * v.at(t - j * h, t));
    }
  }
  return out;
}

void DelayExpr::write_csv(const std::filesystem::path& taps_file, const std::filesystem::path& kernel_file,
                          const std::vector<std::string>& names) const {
  std::ofstream ts(taps_file), ks(kernel_file);
  if (!ts || !ks) throw std::runtime_error("cannot write delay-form CSV");
  ts << std::setprecision(12) << "signal,delay,row,col,value\n";
  ks << std::setprecision(12) << "signal,nu,row,col,value\n";
  for (int s = 0; s < signal_count(); ++s) {
    const std::string& name = names.at(s);
    for (const auto& [d, m] : terms_[s].taps)
      for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c) ts << name << ',' << d << ',' << r << ',' << c << ',' << m(r, c) << '\n';
    const auto& k = terms_[s].kernel;
    for (int j = 0; j < static_cast<int>(k.size()); ++j)
      for (int r = 0; r < k[j].rows(); ++r)
        for (int c = 0; c < k[j].cols(); ++c)
          ks << name << ',' << j * spacing() << ',' << r << ',' << c << ',' << k[j](r, c) << '\n';
  }
}

// ---------------------------------------------------------------------------

namespace {

Matrix unit_row(int n, int i) {
  Matrix e = Matrix::Zero(1, n);
  e(0, i) = 1.0;
  return e;
}

// Trapezoid rule on [lo, hi] with spacing at most h.
Matrix integrate(double lo, double hi, double h, const std::function<Matrix(double)>& f) {
  const int K = std::max(1, static_cast<int>(std::ceil((hi - lo) / h - 1e-9)));
  const double step = (hi - lo) / K;
  Matrix acc = 0.5 * (f(lo) + f(hi));
  for (int k = 1; k < K; ++k) acc += f(lo + k * step);
  return acc * step;
}

}  // namespace

ObserverDelayForm derive_observer_delay_form(const PlantModel& md, const CouplingFunctions& cf) {
  const int n = md.n, m = md.m, p = md.p, q = md.q;
  const auto& xs = cf.G1.grid();
  const int N = static_cast<int>(xs.size());
  const double h = 1.0 / (N - 1);
  const auto w = trapezoid_weights(xs);
  double theta = 1.0 / md.mu(0);
  for (int i = 0; i < n; ++i) theta += 1.0 / md.lambda(i);
  const int M = 4 * N;
  const std::vector<int> dims{n, p, q, n};
  using F = ObserverDelayForm;

  DelayExpr base(n, dims, theta, M);
  base.add_tap(F::kXi, 0.0, md.C0);
  base.add_tap(F::kX1, 0.0, cf.K_X);
  base.add_tap(F::kU, 0.0, Matrix::Identity(n, n));
  for (int j = 0; j < m; ++j) {
    const double mu = md.mu(j), T = 1.0 / mu;
    const Matrix qj = md.Q.col(j);
    const Matrix rj = md.R.row(j);
    // Q beta(t,0)
    base.add_tap(F::kAlpha1, T, qj * rj);
    base.add_density(F::kAlpha1, 0.0, T, [&](double nu) { return Matrix(qj * cf.G2.at(mu * nu).row(j)); });
    // int F_beta beta(t,x) dx: reflection part and source part
    base.add_density(F::kAlpha1, 0.0, T,
                     [&](double th) { return Matrix(mu * cf.F_beta.at(1.0 - mu * th).col(j) * rj); });
    base.add_density(F::kAlpha1, 0.0, T, [&](double nu) {
      const double top = 1.0 - mu * nu;
      if (top <= 0.0) return Matrix(Matrix::Zero(n, n));
      return integrate(0.0, top, h, [&](double x) { return Matrix(cf.F_beta.at(x).col(j) * cf.G2.at(x + mu * nu).row(j)); });
    });
  }

  std::vector<DelayExpr> E;
  E.reserve(n);
  const Matrix one = Matrix::Identity(1, 1);
  for (int i = 0; i < n; ++i) {
    E.push_back(base.premultiplied(unit_row(n, i)));
    for (int l = 0; l < i; ++l) {
      const double lam = md.lambda(l);
      bool any = false;
      for (int a = 0; a < N; ++a) {
        const double c = cf.F_alpha[a](i, l);
        if (c == 0.0) continue;
        any = true;
        E[i].add_shifted(E[l], one, xs[a] / lam, w[a] * c, true);
      }
      if (!any) continue;
      E[i].add_density(F::kAlpha1, 0.0, 1.0 / lam, [&](double nu) {
        const double lo = lam * nu;
        if (lo >= 1.0) return Matrix(Matrix::Zero(1, n));
        return integrate(lo, 1.0, h, [&](double x) { return Matrix(cf.F_alpha.at(x)(i, l) * cf.G1.at(x - lo).row(l)); });
      });
    }
  }

  ObserverDelayForm form;
  form.expr = DelayExpr(n, dims, theta, M);
  for (int i = 0; i < n; ++i) {
    const double lam = md.lambda(i);
    form.lambda_delays.push_back(1.0 / lam);
    const Matrix ei = unit_row(n, i).transpose();
    form.expr.add_shifted(E[i], ei, 1.0 / lam, 1.0, false);
    form.expr.add_density(F::kAlpha1, 0.0, 1.0 / lam,
                          [&](double nu) { return Matrix(ei * cf.G1.at(1.0 - lam * nu).row(i)); });
  }
  form.expr.compact();
  return form;
}

ControlDelayForm derive_control_delay_form(const PlantModel& md, const CouplingFunctions& cf,
                                           const KernelSetControl& kc) {
  const int n = md.n, m = md.m, p = md.p, q = md.q;
  const auto& xs = cf.G1.grid();
  const int N = static_cast<int>(xs.size());
  const double h = 1.0 / (N - 1);
  const auto w = trapezoid_weights(xs);
  const double theta = md.tau();
  const int M = 4 * N;
  const std::vector<int> dims{n, p, q, n};
  using F = ControlDelayForm;

  ControlDelayForm form;
  form.abar1 = DelayExpr(n, dims, theta, M);
  for (int i = 0; i < n; ++i) {
    const double lam = md.lambda(i);
    const Matrix ei = unit_row(n, i).transpose();
    form.abar1.add_tap(F::kB0, 1.0 / lam, ei * ei.transpose());
    form.abar1.add_density(F::kB0, 0.0, 1.0 / lam,
                           [&](double nu) { return Matrix(ei * kc.G5.at(1.0 - lam * nu).row(i)); });
  }

  DelayExpr& b = form.boundary;
  b = DelayExpr(n, dims, theta, M);
  b.add_tap(F::kXi, 0.0, md.C0);
  b.add_tap(F::kX1, 0.0, cf.K_X);
  b.add_tap(F::kU, 0.0, Matrix::Identity(n, n));
  for (int j = 0; j < m; ++j) {
    const double mu = md.mu(j), T = 1.0 / mu;
    const Matrix qj = md.Q.col(j);
    const Matrix rj = md.R.row(j);
    // Q beta(t,0)
    b.add_shifted(form.abar1, qj * rj, T, 1.0, false);
    const int K = std::max(1, static_cast<int>(std::ceil(T / b.spacing())));
    const double step = T / K;
    for (int k = 0; k <= K; ++k) {
      const double nu = k * step, wk = (k == 0 || k == K) ? 0.5 * step : step;
      // Q G2 source along the beta characteristic
      b.add_shifted(form.abar1, qj * cf.G2.at(mu * nu).row(j), nu, wk, true);
      // int F_beta beta dx, source part
      const double top = 1.0 - mu * nu;
      if (top > 0.0) {
        const Matrix D = integrate(0.0, top, h, [&](double x) { return Matrix(cf.F_beta.at(x).col(j) * cf.G2.at(x + mu * nu).row(j)); });
        b.add_shifted(form.abar1, D, nu, wk, true);
      }
    }
    // int F_beta beta dx, reflection part
    for (int a = 0; a < N; ++a) b.add_shifted(form.abar1, cf.F_beta[a].col(j) * rj, (1.0 - xs[a]) / mu, w[a], true);
  }
  // int F_alpha_bar alpha_bar(t,x) dx
  for (int l = 0; l < n; ++l) {
    const double lam = md.lambda(l);
    const Matrix el = unit_row(n, l);
    b.add_density(F::kB0, 0.0, 1.0 / lam,
                  [&](double th) { return Matrix(lam * kc.F_alpha_bar.at(lam * th).col(l) * el); });
    b.add_density(F::kB0, 0.0, 1.0 / lam, [&](double nu) {
      const double lo = lam * nu;
      if (lo >= 1.0) return Matrix(Matrix::Zero(n, n));
      return integrate(lo, 1.0, h, [&](double x) { return Matrix(kc.F_alpha_bar.at(x).col(l) * kc.G5.at(x - lo).row(l)); });
    });
  }
  b.compact();
  form.abar1.compact();
  form.P_xi = form.abar1.premultiplied(cf.G3);
  form.P_X = form.abar1.premultiplied(md.E1);
  (void)p;
  (void)q;
  return form;
}

Vector compute_y1(const ObserverDelayForm& form, const HistoryBuffer& y, const HistoryBuffer& U, double t) {
  std::vector<SignalView> views(4);
  views[ObserverDelayForm::kAlpha1].history = &y;
  views[ObserverDelayForm::kU].history = &U;
  return y.at(t) - form.expr.evaluate(views, t);
}

// ---------------------------------------------------------------------------

namespace {

// Random smooth input switched on with zero value and slope, so the system
// leaves rest without compatibility jumps.
class RampedSignal {
 public:
  RampedSignal(RandomSignal s, double ramp) : s_(std::move(s)), ramp_(ramp) {}
  Vector operator()(double t) const {
    const double r = t >= ramp_ ? 1.0 : 0.5 * (1.0 - std::cos(std::numbers::pi * std::max(t, 0.0) / ramp_));
    return r * s_(t);
  }

 private:
  RandomSignal s_;
  double ramp_;
};

}  // namespace

ResidualReport observer_residual_check(const ObserverDelayForm& form, const PlantModel& md,
                                       const CouplingFunctions& cf, double horizon, unsigned seed) {
  const auto& grid = cf.G1.grid();
  const int n = md.n;
  TransportSystem sys = target1_system(md, cf);
  const double dt = (grid[1] - grid[0]) / sys.max_speed();
  TransportStepper stepper(sys, dt, Exec::Serial);
  std::mt19937_64 rng(seed);
  TransportState s{Matrix::Zero(static_cast<Eigen::Index>(grid.size()), n + md.m), Vector::Zero(md.p + md.q)};
  const RampedSignal input(RandomSignal(n, rng), 0.5 * md.tau());

  StepHooks hooks;
  hooks.ode = [&](double, const Vector& Y, const Traces& tr) { return target_ode(md, cf, Y, tr.a1); };
  hooks.near = [&](double t, const Vector& Y, const Matrix&) {
    return Vector(md.C0 * Y.head(md.p) + cf.K_X * Y.tail(md.q) + input(t));
  };

  const double span = horizon + 1.0;
  HistoryBuffer a1(n, dt, span), xi(md.p, dt, span), x1(md.q, dt, span), u(n, dt, span);
  auto record = [&](double t) {
    a1.push(t, s.a1(n));
    xi.push(t, s.Y.head(md.p));
    x1.push(t, s.Y.tail(md.q));
    u.push(t, input(t));
  };
  ResidualReport rep;
  rep.t_begin = form.expr.horizon() + 0.1 * md.tau();
  rep.t_end = horizon;
  if (rep.t_end <= rep.t_begin) throw std::invalid_argument("residual check horizon shorter than the delay horizon");
  double t = 0.0;
  record(t);
  const int steps = static_cast<int>(std::ceil(horizon / dt));
  std::vector<SignalView> views{{&a1, nullptr}, {&xi, nullptr}, {&x1, nullptr}, {&u, nullptr}};
  for (int k = 0; k < steps; ++k) {
    stepper.step(s, t, hooks);
    t = (k + 1) * dt;
    record(t);
    if (t < rep.t_begin) continue;
    const Vector pred = form.expr.evaluate(views, t);
    const Vector sim = s.a1(n);
    rep.absolute = std::max(rep.absolute, (pred - sim).cwiseAbs().maxCoeff());
    rep.scale = std::max(rep.scale, sim.cwiseAbs().maxCoeff());
  }
  rep.relative = rep.scale > 0.0 ? rep.absolute / rep.scale : rep.absolute;
  return rep;
}

ResidualReport control_residual_check(const ControlDelayForm& form, const PlantModel& md,
                                      const CouplingFunctions& cf, const KernelSetControl& kc, double horizon,
                                      unsigned seed) {
  const auto& grid = cf.G1.grid();
  const int n = md.n;
  TransportSystem sys = target2_system(md, cf, kc);
  const double dt = (grid[1] - grid[0]) / sys.max_speed();
  TransportStepper stepper(sys, dt, Exec::Serial);
  std::mt19937_64 rng(seed);
  TransportState s{Matrix::Zero(static_cast<Eigen::Index>(grid.size()), n + md.m), Vector::Zero(md.p + md.q)};
  const RampedSignal input(RandomSignal(n, rng), 0.5 * md.tau());

  StepHooks hooks;
  hooks.ode = [&](double, const Vector& Y, const Traces& tr) { return target_ode(md, cf, Y, tr.a1); };
  hooks.near = [&](double t, const Vector& Y, const Matrix&) {
    return Vector(md.C0 * Y.head(md.p) + cf.K_X * Y.tail(md.q) + input(t));
  };
  const double span = horizon + 1.0;
  HistoryBuffer b0(n, dt, span), xi(md.p, dt, span), x1(md.q, dt, span), u(n, dt, span);
  auto record = [&](double t) {
    b0.push(t, s.a0(n));
    xi.push(t, s.Y.head(md.p));
    x1.push(t, s.Y.tail(md.q));
    u.push(t, input(t));
  };
  ResidualReport rep;
  rep.t_begin = form.boundary.horizon() + 0.1 * md.tau();
  rep.t_end = horizon;
  if (rep.t_end <= rep.t_begin) throw std::invalid_argument("residual check horizon shorter than the delay horizon");
  double t = 0.0;
  record(t);
  const int steps = static_cast<int>(std::ceil(horizon / dt));
  std::vector<SignalView> views{{&b0, nullptr}, {&xi, nullptr}, {&x1, nullptr}, {&u, nullptr}};
  for (int k = 0; k < steps; ++k) {
    stepper.step(s, t, hooks);
    t = (k + 1) * dt;
    record(t);
    if (t < rep.t_begin) continue;
    const Vector pred0 = form.boundary.evaluate(views, t);
    const Vector pred1 = form.abar1.evaluate(views, t);
    const Vector sim0 = s.a0(n), sim1 = s.a1(n);
    rep.absolute = std::max({rep.absolute, (pred0 - sim0).cwiseAbs().maxCoeff(), (pred1 - sim1).cwiseAbs().maxCoeff()});
    rep.scale = std::max({rep.scale, sim0.cwiseAbs().maxCoeff(), sim1.cwiseAbs().maxCoeff()});
  }
  rep.relative = rep.scale > 0.0 ? rep.absolute / rep.scale : rep.absolute;
  return rep;
}

void export_delay_forms_csv(const ObserverDelayForm& obs, const ControlDelayForm& ctrl,
                            const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  obs.expr.write_csv(dir / "observer_taps.csv", dir / "observer_kernel.csv", {"alpha1", "xi", "X1", "U"});
  ctrl.boundary.write_csv(dir / "control_taps.csv", dir / "control_kernel.csv", {"abar0", "xi", "X1", "U"});
  ctrl.abar1.write_csv(dir / "abar1_taps.csv", dir / "abar1_kernel.csv", {"abar0", "xi", "X1", "U"});
}

}  // namespace hyperstab
