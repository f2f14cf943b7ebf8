#include <doctest.h>

#include "hyperstab/io.hpp"
#include "hyperstab/scenario.hpp"
#include "support.hpp"

using namespace hyperstab;
using nlohmann::json;

namespace {

const std::filesystem::path kOut = std::filesystem::temp_directory_path() / "hyperstab_test_scenario";

ScenarioConfig small(const std::string& name) {
  ScenarioConfig cfg = testing::scenario_config(name, kOut / name);
  cfg.N = 61;
  cfg.sim.t_final = 4.0;
  return cfg;
}

}  // namespace

TEST_CASE("scenario parsing") {
  const ScenarioConfig demo = load_scenario(testing::scenario_path("demo"));
  CHECK(demo.N == 201);
  CHECK(demo.sim.t_final == 15.0);
  CHECK(demo.synthesis.observer_margin == 2.5);
  CHECK(demo.synthesis.epsilon == 0.5);
  CHECK(demo.outputs == "out/demo");

  json doc = testing::scenario_json("scalar");
  doc.erase("synthesis");
  const ScenarioConfig plain = scenario_from_json(doc);
  CHECK(plain.synthesis.observer_margin == plain.synthesis.epsilon);

  CHECK_THROWS_AS(load_scenario(kOut / "nope.json"), ConfigError);
  for (auto edit : std::vector<std::function<void(json&)>>{
           [](json& d) { d.erase("model"); },
           [](json& d) { d["sim"]["t_final"] = -1.0; },
           [](json& d) { d["sim"]["stations"] = {0.5, 1.5}; },
           [](json& d) { d["sim"]["exec"] = "gpu"; },
           [](json& d) { d["synthesis"]["epsilon"] = 0.0; },
           [](json& d) { d["model"]["Q"] = "identity"; },
           [](json& d) { d["grid"]["N"] = "many"; },
       }) {
    json d = testing::scenario_json("scalar");
    edit(d);
    CHECK_THROWS_AS(scenario_from_json(d), ConfigError);
  }
}

TEST_CASE("model given as a path relative to the scenario") {
  std::filesystem::create_directories(kOut);
  json doc = testing::scenario_json("scalar");
  write_text(kOut / "model.json", doc.at("model").dump());
  doc["model"] = "model.json";
  write_text(kOut / "byref.json", doc.dump());
  const ScenarioConfig cfg = load_scenario(kOut / "byref.json");
  CHECK(cfg.model.n == 1);
  doc["model"] = "absent.json";
  write_text(kOut / "byref_bad.json", doc.dump());
  CHECK_THROWS_AS(load_scenario(kOut / "byref_bad.json"), ConfigError);
}

TEST_CASE("CFL precheck") {
  ScenarioConfig cfg = small("scalar");
  const double h = 1.0 / (cfg.N - 1);
  cfg.sim.dt = h / 1.5;
  CHECK_NOTHROW(cfl_precheck(cfg));
  cfg.sim.dt = 1.01 * h / 1.5;
  CHECK_THROWS_AS(cfl_precheck(cfg), ConfigError);
  cfg.sim.dt = 0.0;
  cfg.N = 3;
  CHECK_THROWS_AS(cfl_precheck(cfg), ConfigError);
}

TEST_CASE("sweep parameters") {
  const ScenarioConfig demo = small("demo");
  CHECK(with_parameter(demo, "N", 101).N == 101);
  CHECK(with_parameter(demo, "epsilon", 0.7).synthesis.epsilon == 0.7);
  CHECK(*with_parameter(demo, "filter_omega_c", 12).synthesis.filter_omega_c == 12.0);
  CHECK(with_parameter(demo, "A0", 1.5).model.A0(0, 0) == 1.5);
  CHECK(with_parameter(demo, "Q[1,0]", 0.25).model.Q(1, 0) == 0.25);
  CHECK(with_parameter(demo, "lambda[1]", 3.0).model.lambda(1) == 3.0);
  CHECK_THROWS_AS(with_parameter(demo, "Q", 1.0), ConfigError);
  CHECK_THROWS_AS(with_parameter(demo, "Q[5,0]", 1.0), ConfigError);
  CHECK_THROWS_AS(with_parameter(demo, "N", 10.5), ConfigError);
  CHECK_THROWS_AS(with_parameter(demo, "colour", 1.0), ConfigError);
  CHECK_THROWS_AS(with_parameter(demo, "epsilon", -1.0), ConfigError);
}

TEST_CASE("validation exit codes and reports") {
  CHECK(cmd_validate(small("scalar"), kOut / "v0") == kExitOk);
  const json ok = json::parse(testing::slurp(kOut / "v0" / "validate.json"));
  for (const char* k : {"assumption1", "assumption2", "assumption3"}) {
    CHECK(ok.at(k).at("pass") == true);
    CHECK(ok.at(k).contains("margin"));
  }
  for (int which : {1, 2, 3}) {
    CAPTURE(which);
    const auto dir = kOut / ("v" + std::to_string(which));
    CHECK(cmd_validate(small("negative_assumption" + std::to_string(which)), dir) == kExitAssumption);
    const json r = json::parse(testing::slurp(dir / "validate.json"));
    for (int k = 1; k <= 3; ++k)
      CHECK(r.at("assumption" + std::to_string(k)).at("pass") == (k != which));
  }
  ScenarioConfig broken = small("scalar");
  broken.model.mu(0) = -1.0;
  CHECK_THROWS_AS(cmd_validate(broken, kOut / "vb"), ConfigError);
}

TEST_CASE("simulate writes its artifacts and respects the assumption gate") {
  const ScenarioConfig cfg = small("scalar");
  CHECK(cmd_simulate(cfg, LoopMode::StateFeedback, kOut / "s") == kExitOk);
  for (const char* f : {"trajectory.csv", "decay.json", "chi_norms.svg", "control.svg", "boundary.svg"})
    CHECK(std::filesystem::exists(kOut / "s" / "state_feedback" / f));
  const json r = json::parse(testing::slurp(kOut / "s" / "state_feedback" / "decay.json"));
  CHECK(r.at("fit").at("rate").get<double>() < 0.0);

  const ScenarioConfig neg = small("negative_assumption1");
  CHECK(cmd_simulate(neg, LoopMode::StateFeedback, kOut / "n") == kExitAssumption);
  CHECK(cmd_simulate(neg, LoopMode::OpenLoop, kOut / "n") == kExitOk);

  ScenarioConfig blowup = small("demo");
  blowup.sim.divergence_threshold = 10.0;
  CHECK(cmd_simulate(blowup, LoopMode::OpenLoop, kOut / "d") == kExitDiverged);
  const Trajectory partial = read_trajectory_csv(kOut / "d" / "open_loop" / "trajectory.csv");
  CHECK(partial.t.back() < blowup.sim.t_final);
}

TEST_CASE("sweep records one row per value and keeps going") {
  const ScenarioConfig cfg = small("scalar");
  CHECK_THROWS_AS(cmd_sweep(cfg, "Q", {}, LoopMode::StateFeedback, kOut / "w"), ConfigError);
  CHECK(cmd_sweep(cfg, "Q", {0.6, 2.5}, LoopMode::StateFeedback, kOut / "w") == kExitOk);
  const std::string csv = testing::slurp(kOut / "w" / "sweep_Q.csv");
  CHECK(csv.find("\n0.6,pass,pass") != std::string::npos);
  CHECK(csv.find("\n2.5,fail,fail") != std::string::npos);
  std::filesystem::remove_all(kOut);
}
