#include "hyperstab/sim.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "hyperstab/systems.hpp"

namespace hyperstab {

LoopMode parse_mode(const std::string& s) {
  if (s == "open_loop") return LoopMode::OpenLoop;
  if (s == "state_feedback") return LoopMode::StateFeedback;
  if (s == "output_feedback") return LoopMode::OutputFeedback;
  throw std::invalid_argument("unknown mode '" + s + "' (open_loop, state_feedback, output_feedback)");
}

std::string mode_name(LoopMode mode) {
  switch (mode) {
    case LoopMode::OpenLoop: return "open_loop";
    case LoopMode::StateFeedback: return "state_feedback";
    case LoopMode::OutputFeedback: return "output_feedback";
  }
  return "";
}

Vector flatten_target(const TransportState& s, int n, int p) {
  const Eigen::Index N = s.W.rows(), d = s.W.cols(), lumped = s.Y.size();
  const Eigen::Index m = d - n;
  Vector f(lumped + N * d);
  f.head(p) = s.Y.head(p);
  Eigen::Index k = p;
  for (Eigen::Index a = 0; a < N; ++a)
    for (Eigen::Index i = 0; i < n; ++i) f(k++) = s.W(a, i);
  for (Eigen::Index a = 0; a < N; ++a)
    for (Eigen::Index j = 0; j < m; ++j) f(k++) = s.W(a, n + j);
  f.tail(lumped - p) = s.Y.tail(lumped - p);
  return f;
}

namespace {

TransportState unflatten_target(const Vector& f, int N, int n, int m, int p, int q) {
  TransportState s{Matrix(N, n + m), Vector(p + q)};
  s.Y.head(p) = f.head(p);
  Eigen::Index k = p;
  for (int a = 0; a < N; ++a)
    for (int i = 0; i < n; ++i) s.W(a, i) = f(k++);
  for (int a = 0; a < N; ++a)
    for (int j = 0; j < m; ++j) s.W(a, n + j) = f(k++);
  s.Y.tail(q) = f.tail(q);
  return s;
}

Vector stations_of(const Matrix& W, int col0, int cols, const std::vector<double>& grid,
                   const std::vector<double>& stations) {
  const int N = static_cast<int>(grid.size());
  Vector out(cols * static_cast<int>(stations.size()));
  for (int c = 0; c < cols; ++c) {
    for (std::size_t k = 0; k < stations.size(); ++k) {
      const double s = std::clamp(stations[k], 0.0, 1.0) * (N - 1);
      const int a = std::min(static_cast<int>(std::floor(s)), N - 2);
      const double f = s - a;
      out(c * static_cast<int>(stations.size()) + static_cast<int>(k)) =
          (1.0 - f) * W(a, col0 + c) + f * W(a + 1, col0 + c);
    }
  }
  return out;
}

void push_or_replace(HistoryBuffer& h, double t, const Vector& v) {
  if (!h.empty() && std::abs(h.last_time() - t) < 1e-9) h.set_last(v);
  else h.push(t, v);
}

}  // namespace

Observer::Observer(const PlantModel& md, const CouplingFunctions& cf, const ObserverSynthesis& syn, double dt,
                   double span, Exec exec, Interpolation interp)
    : md_(md),
      cf_(cf),
      syn_(syn),
      stepper_(observer_system(md, cf), dt, exec, interp),
      state_{Matrix::Zero(static_cast<Eigen::Index>(cf.G1.grid().size()), md.n + md.m), Vector::Zero(md.p + md.q)},
      innovation_(md.n, dt, span),
      dt_(dt),
      span_(span) {}

void Observer::start(double t0, const Vector& y0) {
  const double k = std::ceil(span_ / dt_);
  innovation_.prefill(t0 - k * dt_, t0, [&](double) { return Vector(Vector::Zero(md_.n)); });
  innovation_.set_last(y0 - state_.a1(md_.n));
  active_from_ = t0 + syn_.measured.horizon() + 0.1 * md_.tau();
}

void Observer::step(double t, const HistoryBuffer& y, const HistoryBuffer& U) {
  const int n = md_.n, p = md_.p, q = md_.q;
  const int last = static_cast<int>(state_.W.rows()) - 1;
  StepHooks hooks;
  hooks.ode = [&](double s, const Vector& Y, const Traces&) {
    if (s < active_from_) return Vector(syn_.A_o * Y + syn_.G_Z * y.at(s));
    const Vector z = syn_.measured.evaluate({SignalView{&y, nullptr}, SignalView{&U, nullptr}}, s);
    return Vector(syn_.A_o * Y + syn_.G_Z * y.at(s) - syn_.L_o * (z - syn_.C_eff * Y));
  };
  hooks.ext = [&](double s) { return y.at(s); };
  hooks.near = [&](double s, const Vector& Y, const Matrix& W) {
    const Vector now = y.at(s) - W.row(last).head(n).transpose();
    const Vector o0 = syn_.O0.evaluate({SignalView{&innovation_, &now}}, s);
    return Vector(md_.C0 * Y.head(p) + cf_.K_X * Y.tail(q) + U.at(s) - o0);
  };
  stepper_.step(state_, t, hooks);
  innovation_.push(t + dt_, y.at(t + dt_) - state_.a1(n));
}

Trajectory run_closed_loop(const LoopDesign& design, const SimConfig& config, LoopMode mode) {
  const PlantModel& md = *design.model;
  const CouplingFunctions& cf = design.kernels->couplings;
  const TransformOperators& ops = *design.transforms;
  const int n = md.n, m = md.m, p = md.p, q = md.q;
  const auto& grid = cf.G1.grid();
  const int N = static_cast<int>(grid.size());
  if (mode != LoopMode::OpenLoop && !design.controller) throw std::invalid_argument("closed loop needs a controller");
  if (mode == LoopMode::OutputFeedback && !design.observer) throw std::invalid_argument("output feedback needs an observer");

  const TransportSystem psys = plant_system(md, grid);
  const double dt = config.dt > 0.0 ? config.dt : (grid[1] - grid[0]) / psys.max_speed();
  TransportStepper plant(psys, dt, config.exec, config.interpolation);
  std::mt19937_64 rng(config.seed);
  TransportState x = random_smooth_state(n, m, p + q, grid, rng, config.init_norm);

  double span = md.tau() + 1.0;
  if (design.observer) span = std::max({span, design.observer->measured.horizon() + 1.0, design.observer->O0.horizon() + 1.0});
  if (design.controller)
    span = std::max({span, design.controller->predictor.horizon() + 1.0, design.controller->boundary.horizon() + 1.0});
  const double t_pre = -std::ceil(span / dt) * dt;
  auto zero = [&](double) { return Vector(Vector::Zero(n)); };
  HistoryBuffer yh(n, dt, span), Uh(n, dt, span), b0h(n, dt, span);
  yh.prefill(t_pre, 0.0, zero);
  Uh.prefill(t_pre, 0.0, zero);
  b0h.prefill(t_pre, 0.0, zero);
  yh.set_last(x.a1(n));

  std::optional<Observer> obs;
  if (mode == LoopMode::OutputFeedback || (config.observe && design.observer)) {
    obs.emplace(md, cf, *design.observer, dt, span, config.exec, config.interpolation);
    if (config.observer_init_scale != 0.0) {
      const Vector target = ops.T_inv * flatten_target(x, n, p);
      obs->state() = unflatten_target(config.observer_init_scale * target, N, n, m, p, q);
    }
    obs->start(0.0, x.a1(n));
  }
  const Matrix T1_rows = ops.T1_inv.middleRows(p, n);
  Matrix sf_rows;
  if (mode == LoopMode::StateFeedback) {
    sf_rows.resize(p + q + n, ops.T_inv.cols());
    sf_rows << ops.T_inv.topRows(p), ops.T_inv.bottomRows(q), T1_rows * ops.T_inv;
  }
  std::optional<DiscreteFilter> filt;
  if (mode == LoopMode::OutputFeedback && design.filter) filt.emplace(*design.filter, dt, n);

  auto control = [&](double t) -> Vector {
    if (mode == LoopMode::OpenLoop) return Vector::Zero(n);
    Vector Z, b0;
    if (mode == LoopMode::StateFeedback) {
      const Vector r = sf_rows * flatten_target(x, n, p);
      Z = r.head(p + q);
      b0 = r.tail(n);
    } else {
      Z = obs->state().Y;
      b0 = T1_rows * flatten_target(obs->state(), n, p);
    }
    push_or_replace(b0h, t, b0);
    const Vector raw = state_feedback_U(*design.controller, b0h, Z, t);
    if (!filt) return raw;
    filt->step(raw);
    return filt->output();
  };

  Trajectory tr;
  tr.n = n;
  tr.m = m;
  tr.p = p;
  tr.q = q;
  tr.stations = config.stations;
  Vector U_now = Vector::Zero(n);
  auto record = [&](double t) {
    tr.t.push_back(t);
    tr.X0.push_back(x.Y.head(p));
    tr.X1.push_back(x.Y.tail(q));
    tr.u_st.push_back(stations_of(x.W, 0, n, grid, config.stations));
    tr.v_st.push_back(stations_of(x.W, n, m, grid, config.stations));
    tr.U.push_back(U_now);
    tr.y.push_back(x.a1(n));
    tr.chi_state.push_back(transport_chi_norm(x, grid));
    double err = 0.0;
    if (obs) {
      const Vector e = flatten_target(x, n, p) - ops.T * flatten_target(obs->state(), n, p);
      err = transport_chi_norm(unflatten_target(e, N, n, m, p, q), grid);
    }
    tr.chi_error.push_back(err);
  };

  StepHooks hooks;
  Vector U_next = Vector::Zero(n);
  hooks.ode = [&](double, const Vector& Y, const Traces& t) { return plant_ode(md, Y, t.a1, t.b0); };
  hooks.far = [&](double, const Vector& Y) { return Vector(md.C1 * Y.tail(q)); };
  hooks.near = [&](double, const Vector& Y, const Matrix&) { return Vector(md.C0 * Y.head(p) + U_next); };

  record(0.0);
  U_next = control(0.0);
  const int steps = static_cast<int>(std::llround(config.t_final / dt));
  for (int k = 0; k < steps; ++k) {
    const double t = k * dt, t1 = (k + 1) * dt;
    plant.step(x, t, hooks);
    U_now = U_next;
    yh.push(t1, x.a1(n));
    Uh.push(t1, U_now);
    if (obs) obs->step(t, yh, Uh);
    record(t1);
    const double chi = tr.chi_state.back();
    if (!std::isfinite(chi) || chi > config.divergence_threshold) {
      tr.diverged = true;
      break;
    }
    U_next = control(t1);
  }
  return tr;
}

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& values, double t_start) {
  if (t.size() != values.size()) throw DimensionError("fit_decay: size mismatch");
  double st = 0, sy = 0, stt = 0, sty = 0, syy = 0;
  int k = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (t[i] < t_start) continue;
    if (!(values[i] > 0.0) || !std::isfinite(values[i])) break;
    const double y = std::log(values[i]);
    st += t[i];
    sy += y;
    stt += t[i] * t[i];
    sty += t[i] * y;
    syy += y * y;
    ++k;
  }
  DecayFit fit;
  fit.samples = k;
  if (k < 2) return fit;
  const double vt = stt - st * st / k, vy = syy - sy * sy / k, c = sty - st * sy / k;
  if (vt <= 0.0) return fit;
  fit.rate = c / vt;
  fit.r_squared = vy > 1e-300 * k ? c * c / (vt * vy) : 1.0;
  return fit;
}

}  // namespace hyperstab
