#pragma once

#include <optional>
#include <string>
#include <vector>

#include "hyperstab/history.hpp"
#include "hyperstab/hyperbolic.hpp"
#include "hyperstab/kernels.hpp"
#include "hyperstab/model.hpp"
#include "hyperstab/synthesis.hpp"

namespace hyperstab {

enum class LoopMode { OpenLoop, StateFeedback, OutputFeedback };

LoopMode parse_mode(const std::string& s);
std::string mode_name(LoopMode mode);

struct SimConfig {
  double dt = 0.0;  ///< 0 selects h / max speed
  double t_final = 10.0;
  unsigned seed = 1;
  double init_norm = 1.0;
  /// Observer starts from this multiple of the true target state (0: from zero).
  double observer_init_scale = 0.0;
  std::vector<double> stations{0.0, 0.25, 0.5, 0.75, 1.0};
  double divergence_threshold = 1e8;
  /// Run the observer alongside the other modes too (records the estimation error).
  bool observe = false;
  Exec exec = Exec::Serial;
  Interpolation interpolation = Interpolation::Cubic;
};

/// Everything the closed loop needs besides the plant.
struct LoopDesign {
  const PlantModel* model = nullptr;
  const KernelBundle* kernels = nullptr;
  const TransformOperators* transforms = nullptr;
  const ObserverSynthesis* observer = nullptr;
  const ControllerSynthesis* controller = nullptr;
  std::optional<LowPassFilter> filter;
};

struct Trajectory {
  int n = 0, m = 0, p = 0, q = 0;
  std::vector<double> stations;
  std::vector<double> t;
  std::vector<Vector> X0, X1, U, y;
  std::vector<Vector> u_st, v_st;  ///< n * stations, m * stations (component-major)
  std::vector<double> chi_state, chi_error;
  bool diverged = false;

  std::size_t size() const { return t.size(); }
};

/// Target-coordinate copy driven by the measurement with output injection.
class Observer {
 public:
  Observer(const PlantModel& model, const CouplingFunctions& couplings, const ObserverSynthesis& synthesis, double dt,
           double span, Exec exec = Exec::Serial, Interpolation interp = Interpolation::Cubic);

  TransportState& state() { return state_; }
  const TransportState& state() const { return state_; }
  /// Zero innovation history up to t0, then the innovation of y0 at t0.
  /// Output injection starts once the measurement history spans the delay horizon.
  void start(double t0, const Vector& y0);
  /// Advance from t to t + dt. Both histories must reach t + dt.
  void step(double t, const HistoryBuffer& y, const HistoryBuffer& U);
  const HistoryBuffer& innovation() const { return innovation_; }

 private:
  const PlantModel& md_;
  const CouplingFunctions& cf_;
  const ObserverSynthesis& syn_;
  TransportStepper stepper_;
  TransportState state_;
  HistoryBuffer innovation_;
  double dt_;
  double span_;
  double active_from_ = 0.0;
};

/// [xi; alpha; beta; X1] in the flattened state layout.
Vector flatten_target(const TransportState& s, int n, int p);

Trajectory run_closed_loop(const LoopDesign& design, const SimConfig& config, LoopMode mode);

struct DecayFit {
  double rate = 0.0;
  double r_squared = 0.0;
  int samples = 0;
};

DecayFit fit_decay(const std::vector<double>& t, const std::vector<double>& values, double t_start);

}  // namespace hyperstab
