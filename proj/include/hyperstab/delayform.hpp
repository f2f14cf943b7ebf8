#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hyperstab/history.hpp"
#include "hyperstab/kernels.hpp"
#include "hyperstab/model.hpp"

namespace hyperstab {

/// Discrete taps plus a distributed kernel for one input signal.
struct DelayTerm {
  std::vector<std::pair<double, Matrix>> taps;
  std::vector<Matrix> kernel;  ///< samples on the expression's horizon grid; empty means zero
};

/// Linear combination of delayed signals:
///   sum_s [ sum_k M_k s(t - d_k) + int_0^Theta K(theta) s(t - theta) dtheta ].
/// The distributed parts live on a uniform grid of [0, Theta] and are
/// integrated with trapezoid weights.
class DelayExpr {
 public:
  DelayExpr() = default;
  DelayExpr(int rows, std::vector<int> signal_dims, double horizon, int intervals);

  int rows() const { return rows_; }
  int signal_count() const { return static_cast<int>(dims_.size()); }
  int signal_dim(int s) const { return dims_.at(s); }
  double horizon() const { return horizon_; }
  int intervals() const { return intervals_; }
  double spacing() const { return horizon_ / intervals_; }
  const std::vector<double>& weights() const { return weights_; }
  const DelayTerm& term(int s) const { return terms_.at(s); }

  void add_tap(int s, double delay, const Matrix& m);
  /// Point mass at theta spread onto the two neighbouring grid nodes.
  void deposit(int s, double theta, const Matrix& mass);
  /// int_lo^hi density(theta) s(t - theta) dtheta, sampled at the grid spacing.
  void add_density(int s, double lo, double hi, const std::function<Matrix(double)>& density);
  /// this += weight * left * e(t - shift). In smear mode taps of `e` become
  /// point masses (the caller is integrating over the shift).
  void add_shifted(const DelayExpr& e, const Matrix& left, double shift, double weight, bool smear);

  DelayExpr premultiplied(const Matrix& left) const;
  /// The same expression restricted to the listed signals, in that order.
  DelayExpr select(const std::vector<int>& signals) const;
  void set_kernel(int s, std::vector<Matrix> samples);
  /// Merge taps with equal delays and drop exact zeros.
  void compact();
  double max_delay() const;
  Matrix tap_sum(int s, double delay, double tol = 1e-12) const;
  double kernel_sup(int s) const;

  Vector evaluate(const std::vector<SignalView>& signals, double t) const;

  void write_csv(const std::filesystem::path& taps_file, const std::filesystem::path& kernel_file,
                 const std::vector<std::string>& signal_names) const;

 private:
  void ensure_kernel(int s);
  void check_delay(double d) const;

  int rows_ = 0;
  std::vector<int> dims_;
  double horizon_ = 0.0;
  int intervals_ = 0;
  std::vector<double> weights_;
  std::vector<DelayTerm> terms_;
};

/// alpha(t,1) of the first target system in terms of past alpha(.,1), xi, X1
/// and U.
struct ObserverDelayForm {
  enum Signal { kAlpha1 = 0, kXi = 1, kX1 = 2, kU = 3 };
  DelayExpr expr;
  std::vector<double> lambda_delays;  ///< 1/lambda_i

  Matrix F_xi(int i) const { return expr.tap_sum(kXi, lambda_delays.at(i)); }
  Matrix F_X(int i) const { return expr.tap_sum(kX1, lambda_delays.at(i)); }
  Matrix F_U(int i) const { return expr.tap_sum(kU, lambda_delays.at(i)); }
};

/// alpha_bar(t,0) and alpha_bar(t,1) of the second target system in terms of
/// the alpha_bar(.,0) history, xi, X1 and U.
struct ControlDelayForm {
  enum Signal { kB0 = 0, kXi = 1, kX1 = 2, kU = 3 };
  DelayExpr boundary;  ///< alpha_bar(t,0)
  DelayExpr abar1;     ///< alpha_bar(t,1), B0 only
  DelayExpr P_xi;      ///< G3 alpha_bar(t,1)
  DelayExpr P_X;       ///< E1 alpha_bar(t,1)
};

ObserverDelayForm derive_observer_delay_form(const PlantModel& model, const CouplingFunctions& couplings);
ControlDelayForm derive_control_delay_form(const PlantModel& model, const CouplingFunctions& couplings,
                                           const KernelSetControl& control);

/// y(t) minus the alpha(.,1) and U parts of the observer form, with y standing
/// in for alpha(.,1). What remains depends on xi and X1 only.
Vector compute_y1(const ObserverDelayForm& form, const HistoryBuffer& y, const HistoryBuffer& U, double t);

struct ResidualReport {
  double relative = 0.0;
  double absolute = 0.0;
  double scale = 0.0;
  double t_begin = 0.0;
  double t_end = 0.0;
};

/// Simulates the first target system from rest under a random smooth input and
/// compares the delay-form prediction of alpha(t,1) against the simulated trace
/// once the full delay horizon is available.
ResidualReport observer_residual_check(const ObserverDelayForm& form, const PlantModel& model,
                                       const CouplingFunctions& couplings, double horizon, unsigned seed);
/// Same for the second target system: alpha_bar(t,0) and alpha_bar(t,1).
ResidualReport control_residual_check(const ControlDelayForm& form, const PlantModel& model,
                                      const CouplingFunctions& couplings, const KernelSetControl& control,
                                      double horizon, unsigned seed);

void export_delay_forms_csv(const ObserverDelayForm& obs, const ControlDelayForm& ctrl,
                            const std::filesystem::path& dir);

}  // namespace hyperstab
