#include "hyperstab/synthesis.hpp"

#include <cmath>
#include <numbers>

namespace hyperstab {

std::vector<Matrix> duhamel_samples(const std::vector<std::pair<double, Matrix>>& taps,
                                    const std::vector<Matrix>& kernel, double horizon, int intervals,
                                    const Matrix& A, ExpSide side) {
  Eigen::Index rows = -1, cols = -1;
  auto shape = [&](const Matrix& x) {
    rows = side == ExpSide::Left ? A.rows() : x.rows();
    cols = side == ExpSide::Left ? x.cols() : A.cols();
  };
  if (!taps.empty()) shape(taps.front().second);
  else if (!kernel.empty()) shape(kernel.front());
  else return {};
  if (!kernel.empty() && static_cast<int>(kernel.size()) != intervals + 1)
    throw DimensionError("duhamel_samples: kernel sample count");

  const int M = intervals;
  const double h = horizon / M;
  auto mul = [&](const Matrix& x, const Matrix& e) -> Matrix { return side == ExpSide::Left ? Matrix(e * x) : Matrix(x * e); };
  const Matrix back = expm(A, -h);

  // interval j collects taps in (s_j, s_{j+1}]; node j collects taps sitting on it
  std::vector<std::vector<std::pair<double, const Matrix*>>> inside(M);
  std::vector<Matrix> on_node(M + 1, Matrix::Zero(rows, cols));
  for (const auto& [d, m] : taps) {
    if (d <= 0.0) continue;
    const double s = d / h;
    const double r = std::round(s);
    if (std::abs(s - r) < 1e-9) {
      const int k = std::min(static_cast<int>(r), M);
      if (k == 0) continue;
      on_node[k] += m;
      inside[k - 1].push_back({k * h, &m});
    } else {
      const int j = std::min(static_cast<int>(std::floor(s)), M - 1);
      inside[j].push_back({d, &m});
    }
  }

  std::vector<Matrix> out(M + 1);
  Matrix acc = Matrix::Zero(rows, cols);
  out[M] = 0.5 * on_node[M];
  for (int k = M - 1; k >= 0; --k) {
    acc = mul(acc, back);
    if (!kernel.empty()) acc += 0.5 * h * (kernel[k] + mul(kernel[k + 1], back));
    for (const auto& [d, m] : inside[k]) acc += mul(*m, expm(A, k * h - d));
    out[k] = acc + (k > 0 ? Matrix(0.5 * on_node[k]) : Matrix::Zero(rows, cols));
  }
  return out;
}

std::pair<Matrix, Matrix> build_observer_odes(const PlantModel& md, const CouplingFunctions& cf) {
  const int p = md.p, q = md.q;
  Matrix A = Matrix::Zero(p + q, p + q);
  A.topLeftCorner(p, p) = md.A0;
  A.topRightCorner(p, q) = cf.G4;
  A.bottomRightCorner(q, q) = md.A1;
  Matrix G(p + q, md.n);
  G << cf.G3, md.E1;
  return {A, G};
}

namespace {

Matrix zero_delay_sum(const std::vector<std::pair<double, Matrix>>& taps, Eigen::Index rows, Eigen::Index cols) {
  Matrix s = Matrix::Zero(rows, cols);
  for (const auto& [d, m] : taps)
    if (d <= 0.0) s += m;
  return s;
}

}  // namespace

DelayExpr build_O0(const PlantModel& md, const CouplingFunctions& cf, int intervals) {
  const int n = md.n;
  const double horizon = 1.0 / md.mu.minCoeff();
  DelayExpr o(n, {n}, horizon, intervals);
  for (int j = 0; j < md.m; ++j) {
    const double mu = md.mu(j), T = 1.0 / mu;
    const Matrix rj = md.R.row(j);
    o.add_tap(0, T, -md.Q.col(j) * rj);
    o.add_density(0, 0.0, T, [&](double th) { return Matrix(-mu * cf.F_beta.at(1.0 - mu * th).col(j) * rj); });
  }
  o.compact();
  return o;
}

ObserverSynthesis design_observer(const PlantModel& md, const CouplingFunctions& cf, const ObserverDelayForm& form,
                                  double margin) {
  const int n = md.n, p = md.p, q = md.q;
  using F = ObserverDelayForm;
  ObserverSynthesis s;
  std::tie(s.A_o, s.G_Z) = build_observer_odes(md, cf);
  const DelayExpr& e = form.expr;
  const double theta = e.horizon();
  const int M = e.intervals();

  std::vector<std::pair<double, Matrix>> taps;
  for (const auto& [d, m] : e.term(F::kXi).taps) {
    Matrix z = Matrix::Zero(n, p + q);
    z.leftCols(p) = m;
    taps.push_back({d, z});
  }
  for (const auto& [d, m] : e.term(F::kX1).taps) {
    Matrix z = Matrix::Zero(n, p + q);
    z.rightCols(q) = m;
    taps.push_back({d, z});
  }
  std::vector<Matrix> kernel;
  const auto& kx = e.term(F::kXi).kernel;
  const auto& kX = e.term(F::kX1).kernel;
  if (!kx.empty() || !kX.empty()) {
    kernel.assign(M + 1, Matrix::Zero(n, p + q));
    for (int k = 0; k <= M; ++k) {
      if (!kx.empty()) kernel[k].leftCols(p) = kx[k];
      if (!kX.empty()) kernel[k].rightCols(q) = kX[k];
    }
  }
  const auto psi = duhamel_samples(taps, kernel, theta, M, s.A_o, ExpSide::Right);
  s.C_eff = zero_delay_sum(taps, n, p + q);
  if (!psi.empty()) s.C_eff += psi[0];

  s.measured = DelayExpr(n, {n, n}, theta, M);
  s.measured.add_tap(0, 0.0, Matrix::Identity(n, n));
  for (const auto& [d, m] : e.term(F::kAlpha1).taps) s.measured.add_tap(0, d, -m);
  for (const auto& [d, m] : e.term(F::kU).taps) s.measured.add_tap(1, d, -m);
  const auto& ka = e.term(F::kAlpha1).kernel;
  if (!ka.empty() || !psi.empty()) {
    std::vector<Matrix> ky(M + 1, Matrix::Zero(n, n));
    for (int k = 0; k <= M; ++k) {
      if (!ka.empty()) ky[k] -= ka[k];
      if (!psi.empty()) ky[k] += psi[k] * s.G_Z;
    }
    s.measured.set_kernel(0, std::move(ky));
  }
  const auto& ku = e.term(F::kU).kernel;
  if (!ku.empty()) {
    std::vector<Matrix> k2(M + 1);
    for (int k = 0; k <= M; ++k) k2[k] = -ku[k];
    s.measured.set_kernel(1, std::move(k2));
  }
  s.measured.compact();

  const GainResult g = stabilizing_gain(s.A_o.transpose(), s.C_eff.transpose(), margin);
  if (!g.ok()) throw AssumptionFailure(2, "the observer pair is not detectable", g.offending);
  s.L_o = g.gain->transpose();
  s.max_real_part = max_real_part(s.A_o + s.L_o * s.C_eff);
  s.O0 = build_O0(md, cf, M);
  return s;
}

ControllerSynthesis design_controller(const PlantModel& md, const CouplingFunctions& cf, const ControlDelayForm& form,
                                      double margin) {
  const int n = md.n, p = md.p, q = md.q;
  using F = ControlDelayForm;
  ControllerSynthesis c;
  Matrix G;
  std::tie(c.A_c, G) = build_observer_odes(md, cf);
  const DelayExpr& a1 = form.abar1;
  const double theta = a1.horizon();
  const int M = a1.intervals();

  std::vector<std::pair<double, Matrix>> taps;
  for (const auto& [d, m] : a1.term(F::kB0).taps) taps.push_back({d, G * m});
  std::vector<Matrix> kernel;
  for (const auto& k : a1.term(F::kB0).kernel) kernel.push_back(G * k);

  const auto phi = duhamel_samples(taps, kernel, theta, M, c.A_c, ExpSide::Left);
  const auto dist = duhamel_samples({}, kernel, theta, M, c.A_c, ExpSide::Left);
  c.B_bar = zero_delay_sum(taps, p + q, n);
  if (!phi.empty()) c.B_bar += phi[0];
  c.E_bar = dist.empty() ? Matrix(Matrix::Zero(p + q, n)) : dist[0];

  c.predictor = DelayExpr(p + q, {n}, theta, M);
  if (!phi.empty()) c.predictor.set_kernel(0, phi);
  c.boundary = form.boundary.select({F::kB0});
  c.C0 = md.C0;
  c.K_X = cf.K_X;
  c.p = p;

  const GainResult g = stabilizing_gain(c.A_c, c.B_bar, margin);
  if (!g.ok()) throw AssumptionFailure(3, "the controller pair is not stabilizable", g.offending);
  c.K_c = *g.gain;
  c.max_real_part = max_real_part(c.A_c + c.B_bar * c.K_c);
  return c;
}

Vector artstein_state(const ControllerSynthesis& c, const HistoryBuffer& abar0, const Vector& Z, double t) {
  return Z + c.predictor.evaluate({SignalView{&abar0, nullptr}}, t);
}

Vector state_feedback_U(const ControllerSynthesis& c, const HistoryBuffer& abar0, const Vector& Z, double t) {
  const Vector ubar = c.K_c * artstein_state(c, abar0, Z, t);
  Vector b = c.boundary.evaluate({SignalView{&abar0, nullptr}}, t);
  // the undelayed part of the boundary sees the value being imposed
  Matrix d0 = c.boundary.tap_sum(0, 0.0);
  const auto& k = c.boundary.term(0).kernel;
  if (!k.empty()) d0 += c.boundary.weights()[0] * k[0];
  b += d0 * (ubar - abar0.at(t));
  const int q = static_cast<int>(Z.size()) - c.p;
  return ubar - b - c.C0 * Z.head(c.p) - c.K_X * Z.tail(q);
}

LowPassFilter LowPassFilter::butterworth(double omega_c) {
  if (!(omega_c > 0.0) || !std::isfinite(omega_c)) throw std::invalid_argument("filter cutoff must be positive and finite");
  LowPassFilter f;
  f.omega_c = omega_c;
  return f;
}

Matrix LowPassFilter::a() const {
  Matrix m(2, 2);
  m << 0.0, 1.0, -omega_c * omega_c, -std::numbers::sqrt2 * omega_c;
  return m;
}

Vector LowPassFilter::b() const { return Vector::Unit(2, 1); }

Eigen::RowVectorXd LowPassFilter::c() const {
  Eigen::RowVectorXd r(2);
  r << omega_c * omega_c, 0.0;
  return r;
}

std::complex<double> LowPassFilter::response(double omega) const {
  const Complex s(0.0, omega);
  return omega_c * omega_c / (s * s + std::numbers::sqrt2 * omega_c * s + omega_c * omega_c);
}

DiscreteFilter::DiscreteFilter(const LowPassFilter& f, double dt, int dim) : dim_(dim), c_(f.c()) {
  Matrix aug = Matrix::Zero(3, 3);
  aug.topLeftCorner(2, 2) = f.a();
  aug.topRightCorner(2, 1) = f.b();
  const Matrix e = expm(aug, dt);
  ad_ = e.topLeftCorner(2, 2);
  bd_ = e.topRightCorner(2, 1);
  x_ = Matrix::Zero(2, dim);
}

Vector DiscreteFilter::output() const { return (c_ * x_).transpose(); }

void DiscreteFilter::step(const Vector& input) {
  if (input.size() != dim_) throw DimensionError("DiscreteFilter::step: input size");
  x_ = ad_ * x_ + bd_ * input.transpose();
}

LowPassFilter design_filter(double omega0, int max_doublings,
                            const std::function<bool(const LowPassFilter&)>& acceptable) {
  for (int k = 0; k <= max_doublings; ++k) {
    const LowPassFilter f = LowPassFilter::butterworth(std::ldexp(omega0, k));
    if (acceptable(f)) return f;
  }
  throw std::runtime_error("no filter cutoff in the sweep stabilizes the loop; extend the sweep or lower its base");
}

nlohmann::json synthesis_to_json(const ObserverSynthesis& obs, const ControllerSynthesis& ctrl,
                                 const LowPassFilter* filter) {
  nlohmann::json j;
  j["schema"] = "hyperstab-synthesis-v1";
  j["observer"] = {{"A_o", matrix_to_json(obs.A_o)},
                   {"G_Z", matrix_to_json(obs.G_Z)},
                   {"C_eff", matrix_to_json(obs.C_eff)},
                   {"L_o", matrix_to_json(obs.L_o)},
                   {"max_real_part", obs.max_real_part},
                   {"O0_horizon", obs.O0.horizon()},
                   {"kernels", "delay_forms/observer_taps.csv"}};
  const int q = static_cast<int>(ctrl.A_c.rows()) - ctrl.p;
  j["controller"] = {{"A_c", matrix_to_json(ctrl.A_c)},
                     {"B_bar", matrix_to_json(ctrl.B_bar)},
                     {"E0_bar", matrix_to_json(ctrl.E_bar.topRows(ctrl.p))},
                     {"E1_bar", matrix_to_json(ctrl.E_bar.bottomRows(q))},
                     {"K_c", matrix_to_json(ctrl.K_c)},
                     {"max_real_part", ctrl.max_real_part},
                     {"predictor_horizon", ctrl.predictor.horizon()},
                     {"kernels", "delay_forms/control_taps.csv"}};
  if (filter) j["filter"] = {{"family", "butterworth"}, {"order", filter->order}, {"omega_c", filter->omega_c}};
  return j;
}

}  // namespace hyperstab
