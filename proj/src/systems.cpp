#include "hyperstab/systems.hpp"

#include <cmath>
#include <numbers>

namespace hyperstab {

namespace {

std::vector<Matrix> stack_nodes(const SampledFunction& top, const SampledFunction& bottom) {
  std::vector<Matrix> out(top.size());
  for (std::size_t a = 0; a < top.size(); ++a) {
    out[a].resize(top.rows() + bottom.rows(), top.cols());
    out[a] << top[a], bottom[a];
  }
  return out;
}

TransportSystem base_system(const PlantModel& md, const std::vector<double>& grid) {
  TransportSystem s;
  s.n = md.n;
  s.m = md.m;
  s.lambda = md.lambda;
  s.mu = md.mu;
  s.grid = grid;
  s.Q = md.Q;
  s.R = md.R;
  return s;
}

}  // namespace

TransportSystem plant_system(const PlantModel& md, const std::vector<double>& grid) {
  TransportSystem s = base_system(md, grid);
  bool any = false;
  std::vector<Matrix> sig(grid.size());
  for (std::size_t a = 0; a < grid.size(); ++a) {
    sig[a] = md.sigma(grid[a]);
    any = any || sig[a].cwiseAbs().maxCoeff() > 0.0;
  }
  if (any) s.sigma = std::move(sig);
  return s;
}

TransportSystem target1_system(const PlantModel& md, const CouplingFunctions& cf) {
  TransportSystem s = base_system(md, cf.G1.grid());
  s.src_out = stack_nodes(cf.G1, cf.G2);
  s.F_alpha = cf.F_alpha.values();
  s.F_beta = cf.F_beta.values();
  return s;
}

TransportSystem target2_system(const PlantModel& md, const CouplingFunctions& cf, const KernelSetControl& kc) {
  TransportSystem s = base_system(md, cf.G1.grid());
  s.src_out = stack_nodes(SampledFunction::zeros(cf.G1.grid(), md.n, md.n), cf.G2);
  s.src_in = stack_nodes(kc.G5, SampledFunction::zeros(cf.G1.grid(), md.m, md.n));
  s.F_alpha = kc.F_alpha_bar.values();
  s.F_beta = cf.F_beta.values();
  return s;
}

TransportSystem observer_system(const PlantModel& md, const CouplingFunctions& cf) {
  TransportSystem s = base_system(md, cf.G1.grid());
  s.src_ext = stack_nodes(cf.G1, cf.G2);
  s.F_alpha = cf.F_alpha.values();
  s.F_beta = cf.F_beta.values();
  return s;
}

Vector target_ode(const PlantModel& md, const CouplingFunctions& cf, const Vector& Y, const Vector& a1) {
  const Vector xi = Y.head(md.p), x1 = Y.tail(md.q);
  Vector out(md.p + md.q);
  out << md.A0 * xi + cf.G3 * a1 + cf.G4 * x1, md.A1 * x1 + md.E1 * a1;
  return out;
}

Vector plant_ode(const PlantModel& md, const Vector& Y, const Vector& a1, const Vector& b0) {
  const Vector x0 = Y.head(md.p), x1 = Y.tail(md.q);
  Vector out(md.p + md.q);
  out << md.A0 * x0 + md.E0 * b0, md.A1 * x1 + md.E1 * a1;
  return out;
}

double transport_chi_norm(const TransportState& s, const std::vector<double>& grid) {
  const auto w = trapezoid_weights(grid);
  double total = s.Y.squaredNorm();
  for (std::size_t a = 0; a < w.size(); ++a) total += w[a] * s.W.row(a).squaredNorm();
  return std::sqrt(total);
}

TransportState random_smooth_state(int n, int m, int lumped, const std::vector<double>& grid, std::mt19937_64& rng,
                                   double norm) {
  std::uniform_real_distribution<double> U(-1.0, 1.0);
  TransportState s;
  const int N = static_cast<int>(grid.size());
  s.W = Matrix::Zero(N, n + m);
  for (int c = 0; c < n + m; ++c) {
    const double c0 = U(rng);
    for (int k = 1; k <= 3; ++k) {
      const double amp = U(rng) / k, phase = std::numbers::pi * U(rng);
      for (int a = 0; a < N; ++a) s.W(a, c) += amp * std::sin(k * std::numbers::pi * grid[a] + phase);
    }
    s.W.col(c).array() += c0;
  }
  s.Y = Vector::NullaryExpr(lumped, [&]() { return U(rng); });
  const double cur = transport_chi_norm(s, grid);
  if (cur > 0.0) {
    s.W *= norm / cur;
    s.Y *= norm / cur;
  }
  return s;
}

RandomSignal::RandomSignal(int dim, std::mt19937_64& rng, double amplitude) : dim_(dim) {
  std::uniform_real_distribution<double> U(0.0, 1.0);
  for (int i = 0; i < 3 * dim; ++i)
    modes_.push_back({amplitude * (U(rng) - 0.5), 0.5 + 2.5 * U(rng), 2.0 * std::numbers::pi * U(rng)});
}

Vector RandomSignal::operator()(double t) const {
  Vector v = Vector::Zero(dim_);
  for (int i = 0; i < dim_; ++i)
    for (int k = 0; k < 3; ++k) {
      const auto& md = modes_[3 * i + k];
      v(i) += md[0] * std::sin(md[1] * t + md[2]);
    }
  return v;
}

}  // namespace hyperstab
