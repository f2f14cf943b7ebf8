// Acceptance run: one line per criterion, nonzero exit if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <numbers>
#include <random>
#include <string>

#include "hyperstab/io.hpp"
#include "hyperstab/scenario.hpp"
#include "support.hpp"

using namespace hyperstab;
using nlohmann::json;

namespace {

namespace fs = std::filesystem;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

PlantModel uncoupled(const std::string& name) {
  auto doc = testing::scenario_json(name).at("model");
  for (const char* k : {"Sigma_pp", "Sigma_pm", "Sigma_mp", "Sigma_mm"}) doc[k] = "zero";
  doc["A1"] = json::array({json::array({0.0})});
  return model_from_json(doc);
}

PlantState unit(const PlantModel& md, const std::vector<double>& grid, std::mt19937_64& rng) {
  PlantState s = testing::random_plant_state(md, grid, rng);
  const double c = 1.0 / chi_norm(s);
  s.X0 *= c;
  s.u *= c;
  s.v *= c;
  s.X1 *= c;
  return s;
}

Outcome scalar_assumption1() {
  PlantModel md = testing::scenario_model("scalar");
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  int agree = 0;
  double err = 0;
  for (int k = 0; k < 50; ++k) {
    md.Q(0, 0) = u(rng);
    md.R(0, 0) = u(rng);
    const double qr = std::abs(md.Q(0, 0) * md.R(0, 0));
    const auto rep = check_assumption1(md);
    agree += rep.pass == (qr < 1.0);
    err = std::max(err, std::abs(rep.sup_radius - qr));
  }
  return {agree == 50 && err <= 1e-9, fmt("agree %.0f/50, sup error %.2e", agree, err)};
}

Outcome analytic_kernels() {
  double err = 0;
  for (const char* name : {"scalar", "demo"}) {
    const PlantModel md = uncoupled(name);
    const TriGrid g(201);
    const KernelSetObserver ks = solve_observer_kernels(md, g);
    for (int a = 0; a < g.N; ++a) {
      for (int b = a; b < g.N; ++b) err = std::max(err, ks.L.at(a, b).cwiseAbs().maxCoeff());
      err = std::max(err, ks.L1[a].cwiseAbs().maxCoeff());
      err = std::max(err, ks.gamma[a].topRows(md.n).cwiseAbs().maxCoeff());
      err = std::max(err, (ks.gamma[a].bottomRows(md.m) - md.C1).cwiseAbs().maxCoeff());
      for (int j = 0; j < md.m; ++j) {
        const Vector col = expm(-md.A0, g.x[a] / md.mu(j)) * md.E0.col(j) / md.mu(j);
        err = std::max(err, (ks.L2[a].col(j) - col).cwiseAbs().maxCoeff());
      }
    }
  }
  return {err <= 1e-6, fmt("sup error %.2e", err)};
}

Outcome round_trips(const Pipeline& demo) {
  const PlantModel& md = demo.cfg->model;
  const auto& kb = demo.kernels;
  std::mt19937_64 rng(77);
  double eT = 0, eT1 = 0;
  for (int k = 0; k < 20; ++k) {
    const PlantState x = unit(md, kb.observer.grid.x, rng);
    eT = std::max(eT, chi_norm(testing::difference(x, invert_T(md, kb.observer, apply_T(md, kb.observer, x)))));
    eT = std::max(eT, chi_norm(testing::difference(x, apply_T(md, kb.observer, invert_T(md, kb.observer, x)))));
    eT1 = std::max(eT1, chi_norm(testing::difference(x, invert_T1(kb.control, apply_T1(kb.control, x)))));
    eT1 = std::max(eT1, chi_norm(testing::difference(x, apply_T1(kb.control, invert_T1(kb.control, x)))));
  }
  return {eT <= 1e-6 && eT1 <= 1e-6, fmt("T %.2e, T1 %.2e", eT, eT1)};
}

Outcome certification() {
  bool pass = true;
  std::string detail;
  for (const char* name : {"scalar", "demo"}) {
    const PlantModel md = testing::scenario_model(name);
    const unsigned seed = testing::scenario_config(name, "").sim.seed;
    double ro[2], rc[2];
    for (int i = 0; i < 2; ++i) {
      const KernelBundle kb = solve_all_kernels(md, i == 0 ? 201 : 401, "");
      const auto of = derive_observer_delay_form(md, kb.couplings);
      const auto cf = derive_control_delay_form(md, kb.couplings, kb.control);
      ro[i] = observer_residual_check(of, md, kb.couplings, of.expr.horizon() + 3.0 * md.tau(), seed).relative;
      rc[i] = control_residual_check(cf, md, kb.couplings, kb.control, cf.boundary.horizon() + 3.0 * md.tau(), seed)
                  .relative;
    }
    pass = pass && ro[0] <= 5e-3 && rc[0] <= 5e-3 && ro[0] / ro[1] >= 1.8 && rc[0] / rc[1] >= 1.8;
    detail += std::string(name) + fmt(" obs %.2e (x%.2f) ctl %.2e (x%.2f); ", ro[0], ro[0] / ro[1], rc[0], rc[0] / rc[1]);
  }
  return {pass, detail};
}

Outcome observer_convergence(const Pipeline& demo) {
  SimConfig sc = demo.cfg->sim;
  sc.observe = true;
  sc.observer_init_scale = 0.0;
  sc.t_final = 6.0 * demo.cfg->model.tau();
  const Trajectory tr = run_closed_loop(demo.design(), sc, LoopMode::StateFeedback);
  const double tau = demo.cfg->model.tau();
  std::size_t k3 = 0;
  while (k3 + 1 < tr.size() && tr.t[k3] < 3.0 * tau) ++k3;
  const double ratio = tr.chi_error[k3] / tr.chi_error.front();
  const DecayFit f = fit_decay(tr.t, tr.chi_error, tau);
  return {ratio <= 1e-2 && f.rate <= -0.2 && f.r_squared >= 0.9,
          fmt("ratio at 3tau %.2e, rate %.3f, r2 %.3f", ratio, f.rate, f.r_squared)};
}

Outcome state_feedback(const Pipeline& demo) {
  const auto ol = simulate(demo, LoopMode::OpenLoop, std::nullopt).report;
  const auto sf = simulate(demo, LoopMode::StateFeedback, std::nullopt).report;
  const double growth = ol.at("ratio").get<double>();
  const double decay = 1.0 / sf.at("ratio").get<double>();
  return {growth >= 10.0 && decay >= 100.0, fmt("open loop x%.3g, state feedback /%.3g", growth, decay)};
}

Outcome output_feedback(const Pipeline& demo) {
  const LowPassFilter f = select_filter(demo);
  const auto rep = simulate(demo, LoopMode::OutputFeedback, f).report;
  const double t_end = demo.cfg->sim.t_final;
  const double decay = 1.0 / rep.at("ratio").get<double>();
  // drive the discretized filter with a sinusoid at 100 wc and read off the steady amplitude
  const double w = 100.0 * f.omega_c, dt = 2.0 * std::numbers::pi / w / 200.0;
  DiscreteFilter df(f, dt, 1);
  const int settle = static_cast<int>(std::ceil(20.0 / f.omega_c / dt));
  double peak = 0;
  for (int k = 0; k < settle + 4000; ++k) {
    df.step(Vector::Constant(1, std::sin(w * k * dt)));
    if (k >= settle) peak = std::max(peak, std::abs(df.output()(0)));
  }
  // same horizon as the state-feedback run
  return {decay >= 100.0 && !rep.at("diverged").get<bool>() && peak <= 1e-3,
          fmt("wc %.3g, decay /%.3g over t = %.3g, gain at 100wc %.2e", f.omega_c, decay, t_end, peak)};
}

Outcome negatives(const fs::path& out) {
  bool pass = true;
  std::string detail;
  for (int which : {1, 2, 3}) {
    const std::string name = "negative_assumption" + std::to_string(which);
    const ScenarioConfig cfg = load_scenario(testing::scenario_path(name));
    const fs::path dir = out / name;
    const int code = cmd_validate(cfg, dir);
    const json r = json::parse(testing::slurp(dir / "validate.json"));
    bool only = true;
    for (int k = 1; k <= 3; ++k) only = only && r.at("assumption" + std::to_string(k)).at("pass") == (k != which);
    pass = pass && code == kExitAssumption && only;
    detail += name.substr(9) + fmt(" exit %.0f", code) + (only ? "; " : " wrong set; ");
    if (which != 1) continue;
    // open loop: envelope of u(t,1) over the last delay period against the first one
    const Pipeline pipe = build_pipeline(cfg);
    const Trajectory tr = simulate(pipe, LoopMode::OpenLoop, std::nullopt).trajectory;
    const double tau = cfg.model.tau(), T = tr.t.back();
    const std::size_t col = tr.stations.size() - 1;
    double early = 0, late = 0;
    for (std::size_t k = 0; k < tr.size(); ++k) {
      const double a = std::abs(tr.u_st[k](col));
      if (tr.t[k] >= tau && tr.t[k] < 2.0 * tau) early = std::max(early, a);
      if (tr.t[k] >= T - tau) late = std::max(late, a);
    }
    const double chi = tr.chi_state.back() / tr.chi_state.front();
    pass = pass && late >= early && chi >= 1.0;
    detail += fmt("open-loop reflection envelope x%.3g, chi x%.3g; ", late / early, chi);
  }
  return {pass, detail};
}

Outcome determinism(const ScenarioConfig& demo, const fs::path& out) {
  for (const char* run : {"a", "b"})
    if (cmd_simulate(demo, LoopMode::StateFeedback, out / run) != kExitOk) return {false, "simulate failed"};
  int same = 0, total = 0;
  for (const char* f : {"trajectory.csv", "chi_norms.svg", "control.svg", "boundary.svg"}) {
    ++total;
    same += testing::slurp(out / "a" / "state_feedback" / f) == testing::slurp(out / "b" / "state_feedback" / f);
  }
  return {same == total, fmt("%.0f/%.0f artifacts identical", same, total)};
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "hyperstab_acceptance";
  fs::remove_all(work);
  fs::create_directories(work / "cache");
  setenv("HYPERSTAB_CACHE", (work / "cache").c_str(), 1);

  int failed = 0;
  auto run = [&](int k, double budget, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool ok = o.pass && secs < budget;
    failed += !ok;
    std::printf("criterion %d: %s  %s [%.1f s, budget %.0f s]\n", k, ok ? "PASS" : "FAIL", o.detail.c_str(), secs,
                budget);
    std::fflush(stdout);
  };

  ScenarioConfig demo_cfg = load_scenario(testing::scenario_path("demo"));
  std::optional<Pipeline> demo;

  run(1, 1.0, scalar_assumption1);
  run(2, 10.0, analytic_kernels);
  run(3, 30.0, [&] {
    demo.emplace(build_pipeline(demo_cfg));
    if (!demo->all_pass()) return Outcome{false, "demo pipeline failed its assumption checks"};
    return round_trips(*demo);
  });
  run(4, 120.0, certification);
  run(5, 60.0, [&] { return demo ? observer_convergence(*demo) : Outcome{false, "no demo pipeline"}; });
  run(6, 60.0, [&] { return demo ? state_feedback(*demo) : Outcome{false, "no demo pipeline"}; });
  run(7, 120.0, [&] { return demo ? output_feedback(*demo) : Outcome{false, "no demo pipeline"}; });
  run(8, 60.0, [&] { return negatives(work / "negative"); });
  run(9, 600.0, [&] { return determinism(demo_cfg, work / "determinism"); });

  fs::remove_all(work);
  std::printf("%d of 9 criteria failed\n", failed);
  return failed == 0 ? 0 : 1;
}
