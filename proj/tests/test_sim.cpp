#include <doctest.h>

#include <cmath>

#include "hyperstab/sim.hpp"
#include "hyperstab/systems.hpp"
#include "support.hpp"

using namespace hyperstab;

namespace {

PlantModel pure_transport() {
  auto doc = testing::scenario_json("scalar").at("model");
  for (const char* k : {"Sigma_pp", "Sigma_pm", "Sigma_mp", "Sigma_mm"}) doc[k] = "zero";
  for (const char* k : {"Q", "R", "C0", "C1"}) doc[k] = nlohmann::json::array({nlohmann::json::array({0.0})});
  return model_from_json(doc);
}

}  // namespace

TEST_CASE("history buffer interpolates and refuses reads outside its span") {
  HistoryBuffer h(1, 0.1, 1.0);
  for (int k = 0; k <= 20; ++k) h.push(0.1 * k, Vector::Constant(1, 2.0 * 0.1 * k));
  CHECK(h.at(1.234)(0) == doctest::Approx(2.468));
  CHECK(h.last_time() == doctest::Approx(2.0));
  CHECK_THROWS_AS(h.at(0.2), HistoryError);
  CHECK_THROWS_AS(h.at(2.5), HistoryError);
  CHECK_THROWS_AS(h.push(2.35, Vector::Zero(1)), HistoryError);
}

TEST_CASE("pure transport is reproduced exactly by both interpolations") {
  const PlantModel md = pure_transport();
  const auto grid = uniform_grid(101);
  const TransportSystem sys = plant_system(md, grid);
  const double dt = (grid[1] - grid[0]) / sys.max_speed();
  auto u0 = [](double x) { return x * x * (x - 0.2); };
  auto v0 = [](double x) { return (1.0 - x) * (0.3 + x * x); };
  for (auto interp : {Interpolation::Linear, Interpolation::Cubic}) {
    TransportStepper st(sys, dt, Exec::Serial, interp);
    TransportState s{Matrix(101, 2), Vector::Zero(2)};
    for (int a = 0; a < 101; ++a) {
      s.W(a, 0) = u0(grid[a]);
      s.W(a, 1) = v0(grid[a]);
    }
    StepHooks hooks;
    hooks.ode = [&](double, const Vector& Y, const Traces& t) { return plant_ode(md, Y, t.a1, t.b0); };
    hooks.far = [](double, const Vector&) { return Vector(Vector::Zero(1)); };
    hooks.near = [](double, const Vector&, const Matrix&) { return Vector(Vector::Zero(1)); };
    const int steps = 30;
    for (int k = 0; k < steps; ++k) st.step(s, k * dt, hooks);
    const double t = steps * dt;
    double eu = 0, ev = 0;
    for (int a = 0; a < 101; ++a) {
      const double x = grid[a];
      // the stencil reaches two nodes upwind, so the inflow kink spreads two nodes per step
      if (x > 2.0 * steps * (grid[1] - grid[0]) + 0.02) eu = std::max(eu, std::abs(s.W(a, 0) - u0(x - md.lambda(0) * t)));
      if (x < 1.0 - md.mu(0) * t - 0.05) ev = std::max(ev, std::abs(s.W(a, 1) - v0(x + md.mu(0) * t)));
    }
    CAPTURE(static_cast<int>(interp));
    // v moves one cell per step; u moves a fraction of a cell
    CHECK(ev < 1e-13);
    if (interp == Interpolation::Cubic) CHECK(eu < 1e-12);
    else CHECK(eu < 5e-3);
  }
}

TEST_CASE("serial and parallel stepping agree") {
  const PlantModel md = testing::scenario_model("demo");
  const auto grid = uniform_grid(81);
  const TransportSystem sys = plant_system(md, grid);
  const double dt = 0.5 * (grid[1] - grid[0]) / sys.max_speed();
  std::mt19937_64 rng(9);
  const TransportState init = random_smooth_state(md.n, md.m, md.p + md.q, grid, rng);
  StepHooks hooks;
  hooks.ode = [&](double, const Vector& Y, const Traces& t) { return plant_ode(md, Y, t.a1, t.b0); };
  hooks.far = [&](double, const Vector& Y) { return Vector(md.C1 * Y.tail(md.q)); };
  hooks.near = [&](double, const Vector& Y, const Matrix&) { return Vector(md.C0 * Y.head(md.p)); };
  TransportState a = init, b = init;
  const TransportStepper sa(sys, dt, Exec::Serial, Interpolation::Cubic);
  const TransportStepper sb(sys, dt, Exec::Parallel, Interpolation::Cubic);
  for (int k = 0; k < 50; ++k) {
    sa.step(a, k * dt, hooks);
    sb.step(b, k * dt, hooks);
  }
  CHECK((a.W - b.W).norm() == 0.0);
  CHECK((a.Y - b.Y).norm() == 0.0);
}

TEST_CASE("fit_decay recovers an exact exponential") {
  std::vector<double> t, v;
  for (int k = 0; k <= 100; ++k) {
    t.push_back(0.1 * k);
    v.push_back(3.0 * std::exp(-0.7 * 0.1 * k));
  }
  const DecayFit f = fit_decay(t, v, 2.0);
  CHECK(f.rate == doctest::Approx(-0.7));
  CHECK(f.r_squared == doctest::Approx(1.0));
  CHECK(f.samples == 81);
  v[50] = 0.0;
  CHECK(fit_decay(t, v, 2.0).samples == 30);
}

TEST_CASE("mode names round trip") {
  for (auto m : {LoopMode::OpenLoop, LoopMode::StateFeedback, LoopMode::OutputFeedback})
    CHECK(parse_mode(mode_name(m)) == m);
  CHECK_THROWS_AS(parse_mode("closed_loop"), std::invalid_argument);
}

TEST_CASE("closed loop on the scalar scenario") {
  const auto out = std::filesystem::temp_directory_path() / "hyperstab_test_sim";
  ScenarioConfig cfg = testing::scenario_config("scalar", out);
  cfg.N = 101;
  cfg.sim.t_final = 8.0;
  const Pipeline pipe = build_pipeline(cfg);
  REQUIRE(pipe.all_pass());

  SUBCASE("runs are deterministic") {
    const Trajectory a = run_closed_loop(pipe.design(), cfg.sim, LoopMode::StateFeedback);
    const Trajectory b = run_closed_loop(pipe.design(), cfg.sim, LoopMode::StateFeedback);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(a.chi_state[k] == b.chi_state[k]);
  }

  SUBCASE("running the observer does not disturb the plant") {
    SimConfig sc = cfg.sim;
    const Trajectory a = run_closed_loop(pipe.design(), sc, LoopMode::StateFeedback);
    sc.observe = true;
    const Trajectory b = run_closed_loop(pipe.design(), sc, LoopMode::StateFeedback);
    REQUIRE(a.size() == b.size());
    for (std::size_t k = 0; k < a.size(); ++k) REQUIRE(a.chi_state[k] == b.chi_state[k]);
    CHECK(b.chi_error.back() < 1e-2 * b.chi_error.front());
  }

  SUBCASE("state feedback decays and open loop does not") {
    const Trajectory ol = run_closed_loop(pipe.design(), cfg.sim, LoopMode::OpenLoop);
    const Trajectory sf = run_closed_loop(pipe.design(), cfg.sim, LoopMode::StateFeedback);
    CHECK(ol.chi_state.back() > ol.chi_state.front());
    CHECK(sf.chi_state.back() < 0.1 * sf.chi_state.front());
    CHECK_FALSE(sf.diverged);
  }

  SUBCASE("an observer started at the true state stays close") {
    SimConfig sc = cfg.sim;
    sc.observe = true;
    sc.observer_init_scale = 1.0;
    const Trajectory tr = run_closed_loop(pipe.design(), sc, LoopMode::StateFeedback);
    double worst = 0;
    for (std::size_t k = 0; k < tr.size(); ++k) worst = std::max(worst, tr.chi_error[k] / tr.chi_state.front());
    // transient spikes from the incompatible initial jumps, then decay
    CHECK(worst < 0.3);
    CHECK(tr.chi_error.back() < 1e-3 * tr.chi_state.front());
  }

  SUBCASE("filtered output feedback decays") {
    LoopDesign d = pipe.design();
    d.filter = LowPassFilter::butterworth(16.0);
    SimConfig sc = cfg.sim;
    sc.t_final = 12.0;
    const Trajectory tr = run_closed_loop(d, sc, LoopMode::OutputFeedback);
    CHECK_FALSE(tr.diverged);
    CHECK(tr.chi_state.back() < 1e-1 * tr.chi_state.front());
  }

  SUBCASE("open-loop trajectories converge under grid refinement") {
    auto chi_at = [&](int N) {
      ScenarioConfig c = cfg;
      c.N = N;
      c.sim.t_final = 2.0;
      const Pipeline p = build_pipeline(c);
      return run_closed_loop(p.design(), c.sim, LoopMode::OpenLoop).chi_state.back();
    };
    const double a = chi_at(51), b = chi_at(101), c = chi_at(201);
    CHECK(std::abs(a - b) / std::abs(b - c) > 1.8);
  }
  std::filesystem::remove_all(out);
}
