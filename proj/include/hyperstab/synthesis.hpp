#pragma once

#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "hyperstab/delayform.hpp"
#include "hyperstab/history.hpp"
#include "hyperstab/kernels.hpp"
#include "hyperstab/model.hpp"

namespace hyperstab {

/// A design step could not meet its assumption; carries the eigenvalues that
/// block it.
class AssumptionFailure : public std::runtime_error {
 public:
  AssumptionFailure(int assumption, std::string what, std::vector<Complex> eigenvalues)
      : std::runtime_error(std::move(what)), assumption_(assumption), eigenvalues_(std::move(eigenvalues)) {}
  int assumption() const { return assumption_; }
  const std::vector<Complex>& eigenvalues() const { return eigenvalues_; }

 private:
  int assumption_;
  std::vector<Complex> eigenvalues_;
};

enum class ExpSide { Left, Right };

/// Samples of
///   Psi(s) = sum_{d > s} e^{A(s-d)} M_d + int_s^Theta e^{A(s-th)} K(th) dth   (Left)
///   Psi(s) = sum_{d > s} M_d e^{A(s-d)} + int_s^Theta K(th) e^{A(s-th)} dth   (Right)
/// on the uniform grid of [0, Theta]. A tap sitting on a node contributes half
/// its weight there. Taps at zero delay are left out.
std::vector<Matrix> duhamel_samples(const std::vector<std::pair<double, Matrix>>& taps,
                                    const std::vector<Matrix>& kernel, double horizon, int intervals,
                                    const Matrix& A, ExpSide side);

struct ObserverSynthesis {
  Matrix A_o;    ///< [[A0, G4], [0, A1]]
  Matrix G_Z;    ///< [G3; E1]
  Matrix C_eff;  ///< y1 + correction = C_eff Z
  Matrix L_o;
  double max_real_part = 0.0;
  /// C_eff Z(t) from the y and U histories (signals 0 and 1).
  DelayExpr measured;
  /// Reflection cancelling output injection acting on the innovation history.
  DelayExpr O0;
};

std::pair<Matrix, Matrix> build_observer_odes(const PlantModel& model, const CouplingFunctions& couplings);

/// Throws AssumptionFailure(2) when (A_o, C_eff) is not detectable with the margin.
ObserverSynthesis design_observer(const PlantModel& model, const CouplingFunctions& couplings,
                                  const ObserverDelayForm& form, double margin);

DelayExpr build_O0(const PlantModel& model, const CouplingFunctions& couplings, int intervals);

struct ControllerSynthesis {
  Matrix A_c;
  Matrix B_bar;
  Matrix E_bar;  ///< distributed part of B_bar, rows [E0_bar; E1_bar]
  Matrix K_c;
  double max_real_part = 0.0;
  /// int_0^Theta Phi(s) alpha_bar(t-s,0) ds, the Artstein shift Z_c - Z.
  DelayExpr predictor;
  /// alpha_bar(.,0) part of the boundary expression.
  DelayExpr boundary;
  Matrix C0;
  Matrix K_X;
  int p = 0;
};

/// Throws AssumptionFailure(3) when (A_c, B_bar) is not stabilizable with the margin.
ControllerSynthesis design_controller(const PlantModel& model, const CouplingFunctions& couplings,
                                      const ControlDelayForm& form, double margin);

/// Z_c(t) = Z(t) + int Phi(s) alpha_bar(t-s,0) ds. `abar0` must hold alpha_bar(t,0).
Vector artstein_state(const ControllerSynthesis& c, const HistoryBuffer& abar0, const Vector& Z, double t);

/// Raw control at time t from Z = [xi; X1] and the alpha_bar(.,0) history
/// (which must hold the value at t).
Vector state_feedback_U(const ControllerSynthesis& c, const HistoryBuffer& abar0, const Vector& Z, double t);

/// Unity DC gain second-order Butterworth low-pass, applied per component.
struct LowPassFilter {
  double omega_c = 0.0;
  int order = 2;

  static LowPassFilter butterworth(double omega_c);
  std::complex<double> response(double omega) const;
  Matrix a() const;
  Vector b() const;
  Eigen::RowVectorXd c() const;
};

/// Exact zero-order-hold discretization of the filter for `dim` channels.
class DiscreteFilter {
 public:
  DiscreteFilter() = default;
  DiscreteFilter(const LowPassFilter& f, double dt, int dim);

  Vector output() const;
  /// Advance one step holding `input` constant.
  void step(const Vector& input);

 private:
  int dim_ = 0;
  Matrix ad_;
  Vector bd_;
  Eigen::RowVectorXd c_;
  Matrix x_;  ///< 2 x dim
};

/// Smallest omega0 * 2^k, k = 0..max_doublings, for which `acceptable` holds.
/// Throws std::runtime_error when the sweep is exhausted.
LowPassFilter design_filter(double omega0, int max_doublings, const std::function<bool(const LowPassFilter&)>& acceptable);

nlohmann::json synthesis_to_json(const ObserverSynthesis& obs, const ControllerSynthesis& ctrl,
                                 const LowPassFilter* filter);

}  // namespace hyperstab
