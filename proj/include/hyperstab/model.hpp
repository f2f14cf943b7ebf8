#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperstab/numerics.hpp"

namespace hyperstab {

inline constexpr const char* kModelSchema = "hyperstab-model-v1";

/// n rightward and m leftward transport equations on [0,1] with a p-state ODE
/// at x = 0 (actuated end) and a q-state ODE at x = 1 (measured end).
///
///   X0' = A0 X0 + E0 v(t,0)            u(t,0) = C0 X0 + Q v(t,0) + U(t)
///   u_t + diag(lambda) u_x = S++ u + S+- v
///   v_t - diag(mu) v_x     = S-+ u + S-- v
///   v(t,1) = R u(t,1) + C1 X1          X1' = A1 X1 + E1 u(t,1)
///   y(t) = u(t,1)
struct PlantModel {
  int n = 0, m = 0, p = 0, q = 0;
  Vector lambda, mu;
  SampledFunction sigma_pp, sigma_pm, sigma_mp, sigma_mm;
  Matrix A0, E0, C0, A1, E1, C1, R, Q;

  /// diag(lambda, -mu)
  Vector speeds() const;
  /// Full (n+m)x(n+m) in-domain coupling at x.
  Matrix sigma(double x) const;
  /// 1/lambda_1 + 1/mu_1: the longest single reflection round trip.
  double tau() const;
};

/// Human-readable list of violated model invariants; empty means valid.
std::vector<std::string> validate(const PlantModel& model);

/// Physical or target state. PDE parts are stored node-major: u(a, i) is
/// component i at grid node a.
struct PlantState {
  std::vector<double> grid;
  Vector X0;
  Matrix u;
  Matrix v;
  Vector X1;

  static PlantState zeros(const PlantModel& model, const std::vector<double>& grid);
  int nodes() const { return static_cast<int>(grid.size()); }
  /// Flattened layout [X0, u (node-major), v (node-major), X1].
  Vector flatten() const;
  static PlantState unflatten(const Vector& flat, const std::vector<double>& grid, int n, int m, int p, int q);
};

double chi_norm(const PlantState& state);

struct Assumption1Report {
  bool pass = false;
  double sup_radius = 0.0;
  /// ||Q||_2 ||R||_2, a conservative certificate.
  double norm_bound = 0.0;
  /// Set when n*m was too large for the exhaustive phase grid.
  bool grid_refused = false;
  std::size_t samples = 0;
};

/// Sup over the phase torus of the spectral radius of the reflection matrix
/// with entries sum_k Q_ik R_kl exp(j theta_kl).
Assumption1Report check_assumption1(const PlantModel& model, int theta_grid_points = 16,
                                    std::uint64_t seed = 12345);

PlantModel model_from_json(const nlohmann::json& doc);
nlohmann::json model_to_json(const PlantModel& model);
Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols, const std::string& name);
nlohmann::json matrix_to_json(const Matrix& m);

}  // namespace hyperstab
