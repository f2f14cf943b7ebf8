#pragma once

#include <array>
#include <random>

#include "hyperstab/hyperbolic.hpp"
#include "hyperstab/kernels.hpp"
#include "hyperstab/model.hpp"

namespace hyperstab {

/// Physical plant on `grid`; lumped state Y = [X0; X1].
TransportSystem plant_system(const PlantModel& model, const std::vector<double>& grid);
/// First target system; Y = [xi; X1].
TransportSystem target1_system(const PlantModel& model, const CouplingFunctions& couplings);
/// Second target system (alpha replaced by alpha_bar); Y = [xi; X1].
TransportSystem target2_system(const PlantModel& model, const CouplingFunctions& couplings,
                               const KernelSetControl& control);
/// PDE part of the observer: target-system copy driven by the measurement.
TransportSystem observer_system(const PlantModel& model, const CouplingFunctions& couplings);

/// xi' = A0 xi + G3 alpha(t,1) + G4 X1, X1' = A1 X1 + E1 alpha(t,1)
Vector target_ode(const PlantModel& model, const CouplingFunctions& couplings, const Vector& Y, const Vector& a1);
/// X0' = A0 X0 + E0 v(t,0), X1' = A1 X1 + E1 u(t,1)
Vector plant_ode(const PlantModel& model, const Vector& Y, const Vector& a1, const Vector& b0);

/// Few-mode random Fourier data, scaled so that the chi-norm equals `norm`.
TransportState random_smooth_state(int n, int m, int lumped, const std::vector<double>& grid, std::mt19937_64& rng,
                                   double norm = 1.0);
/// Random smooth bounded input signal.
class RandomSignal {
 public:
  RandomSignal(int dim, std::mt19937_64& rng, double amplitude = 1.0);
  Vector operator()(double t) const;

 private:
  int dim_;
  std::vector<std::array<double, 3>> modes_;  // per component triples (amp, freq, phase), 3 modes each
};

double transport_chi_norm(const TransportState& s, const std::vector<double>& grid);

}  // namespace hyperstab
