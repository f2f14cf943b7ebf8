#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hyperstab/synthesis.hpp"
#include "support.hpp"

using namespace hyperstab;

TEST_CASE("Butterworth filter response") {
  const LowPassFilter f = LowPassFilter::butterworth(8.0);
  CHECK(std::abs(f.response(0.0)) == doctest::Approx(1.0));
  CHECK(std::abs(f.response(8.0)) == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(std::abs(f.response(800.0)) <= 1e-3);
  // -40 dB per decade far above the cutoff
  const double slope = 20.0 * std::log10(std::abs(f.response(8000.0)) / std::abs(f.response(800.0)));
  CHECK(slope == doctest::Approx(-40.0).epsilon(1e-3));
  // state space realization agrees with the transfer function
  const double w = 5.0;
  const Eigen::MatrixXcd a = f.a().cast<Complex>();
  const Eigen::MatrixXcd si = Complex(0.0, w) * Eigen::MatrixXcd::Identity(2, 2) - a;
  const Complex h = (f.c().cast<Complex>() * si.inverse() * f.b().cast<Complex>())(0, 0);
  CHECK(std::abs(h - f.response(w)) < 1e-12);
}

TEST_CASE("discrete filter: unity DC gain and measured attenuation") {
  const LowPassFilter f = LowPassFilter::butterworth(4.0);
  DiscreteFilter step(f, 1e-3, 2);
  Vector u(2);
  u << 1.0, -2.0;
  for (int k = 0; k < 10000; ++k) step.step(u);
  CHECK((step.output() - u).norm() < 1e-9);

  const double wh = 100.0 * f.omega_c, dt = 2e-5;
  DiscreteFilter sine(f, dt, 1);
  double peak = 0;
  const int n = static_cast<int>(4.0 / dt);
  for (int k = 0; k < n; ++k) {
    sine.step(Vector::Constant(1, std::sin(wh * k * dt)));
    if (k * dt > 2.0) peak = std::max(peak, std::abs(sine.output()(0)));
  }
  CHECK(peak < 1e-3);
  CHECK(peak == doctest::Approx(std::abs(f.response(wh))).epsilon(0.05));
}

TEST_CASE("design_filter returns the first acceptable cutoff") {
  const auto f = design_filter(2.0, 5, [](const LowPassFilter& l) { return l.omega_c >= 10.0; });
  CHECK(f.omega_c == doctest::Approx(16.0));
  CHECK_THROWS(design_filter(2.0, 2, [](const LowPassFilter&) { return false; }));
}

TEST_CASE("observer and controller gains on the demo scenario") {
  const PlantModel md = testing::scenario_model("demo");
  const KernelBundle kb = solve_all_kernels(md, 101, "");
  const auto of = derive_observer_delay_form(md, kb.couplings);
  const auto cf = derive_control_delay_form(md, kb.couplings, kb.control);

  const ObserverSynthesis obs = design_observer(md, kb.couplings, of, 0.5);
  CHECK(obs.A_o.rows() == md.p + md.q);
  CHECK(max_real_part(obs.A_o + obs.L_o * obs.C_eff) <= -0.5 + 1e-7);
  CHECK(obs.O0.horizon() == doctest::Approx(1.0 / md.mu.minCoeff()));

  const ControllerSynthesis ctl = design_controller(md, kb.couplings, cf, 0.5);
  CHECK(max_real_part(ctl.A_c + ctl.B_bar * ctl.K_c) <= -0.5 + 1e-7);
  CHECK(ctl.K_c.rows() == md.n);

  const double dt = 0.01;
  HistoryBuffer abar0(md.n, dt, ctl.predictor.horizon() + 1.0);
  abar0.prefill(-ctl.predictor.horizon() - 0.5, 0.0, [&](double) { return Vector(Vector::Zero(md.n)); });
  const Vector Z = Vector::LinSpaced(md.p + md.q, 1.0, 2.0);
  CHECK((artstein_state(ctl, abar0, Z, 0.0) - Z).norm() < 1e-14);

  const auto doc = synthesis_to_json(obs, ctl, nullptr);
  CHECK(doc.at("schema") == "hyperstab-synthesis-v1");
}

TEST_CASE("gain designs fail with the blocking eigenvalue") {
  for (int which : {2, 3}) {
    CAPTURE(which);
    const PlantModel md = testing::scenario_model("negative_assumption" + std::to_string(which));
    const KernelBundle kb = solve_all_kernels(md, 61, "");
    const auto of = derive_observer_delay_form(md, kb.couplings);
    const auto cf = derive_control_delay_form(md, kb.couplings, kb.control);
    try {
      if (which == 2) design_observer(md, kb.couplings, of, 0.5);
      else design_controller(md, kb.couplings, cf, 0.5);
      FAIL("design should have failed");
    } catch (const AssumptionFailure& e) {
      CHECK(e.assumption() == which);
      REQUIRE(e.eigenvalues().size() == 1);
      CHECK(e.eigenvalues()[0].real() == doctest::Approx(md.A0(0, 0)));
    }
    if (which == 2) CHECK_NOTHROW(design_controller(md, kb.couplings, cf, 0.5));
    else CHECK_NOTHROW(design_observer(md, kb.couplings, of, 0.5));
  }
}
