#include <doctest.h>

#include <cmath>
#include <random>

#include "hyperstab/model.hpp"
#include "support.hpp"

using namespace hyperstab;

TEST_CASE("shipped scenarios parse and validate") {
  for (const char* name : {"scalar", "demo", "negative_assumption1", "negative_assumption2", "negative_assumption3"}) {
    CAPTURE(name);
    const PlantModel md = testing::scenario_model(name);
    CHECK(validate(md).empty());
  }
  const PlantModel demo = testing::scenario_model("demo");
  CHECK(demo.n == 2);
  CHECK(demo.m == 1);
  CHECK(demo.tau() == doctest::Approx(1.0 + 1.0 / 1.5));
}

TEST_CASE("model JSON round trip") {
  const PlantModel md = testing::scenario_model("demo");
  const PlantModel back = model_from_json(model_to_json(md));
  CHECK(model_to_json(back) == model_to_json(md));
  CHECK((back.Q - md.Q).norm() == 0.0);
  CHECK((back.sigma(0.3) - md.sigma(0.3)).norm() == 0.0);
}

TEST_CASE("malformed model documents are rejected") {
  auto doc = testing::scenario_json("scalar").at("model");
  auto bad = doc;
  bad["Q"] = nlohmann::json::array({1.0, 2.0, 3.0});
  CHECK_THROWS(model_from_json(bad));
  bad = doc;
  bad["schema"] = "something-else";
  CHECK_THROWS(model_from_json(bad));
  bad = doc;
  bad["Sigma_pm"] = "nonzero";
  CHECK_THROWS(model_from_json(bad));
}

TEST_CASE("validate reports velocity ordering") {
  PlantModel md = testing::scenario_model("demo");
  md.lambda << 2.0, 1.0;
  const auto problems = validate(md);
  REQUIRE(problems.size() == 1);
  CHECK(problems[0].find("ordering") != std::string::npos);
  md.lambda << -1.0, 2.0;
  CHECK_FALSE(validate(md).empty());
}

TEST_CASE("assumption 1 in the scalar case is |QR| < 1") {
  PlantModel md = testing::scenario_model("scalar");
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int k = 0; k < 30; ++k) {
    md.Q(0, 0) = u(rng);
    md.R(0, 0) = u(rng);
    const double qr = std::abs(md.Q(0, 0) * md.R(0, 0));
    const auto rep = check_assumption1(md);
    CHECK(rep.sup_radius == doctest::Approx(qr).epsilon(1e-12));
    CHECK(rep.pass == (qr < 1.0 - 1e-6));
    CHECK(rep.norm_bound == doctest::Approx(qr));
  }
}

TEST_CASE("assumption 1 sup is attained at aligned phases for positive entries") {
  // With nonnegative entries the sup over phases equals the spectral radius of QR itself.
  PlantModel md = testing::scenario_model("demo");
  const Matrix qr = md.Q * md.R;
  const double rho = spectral_radius(qr.cast<Complex>());
  const auto rep = check_assumption1(md);
  CHECK(rep.sup_radius >= rho - 1e-12);
  CHECK(rep.sup_radius <= rep.norm_bound + 1e-12);
  CHECK(rep.pass);
}

TEST_CASE("chi norm of a known state") {
  const PlantModel md = testing::scenario_model("scalar");
  const auto grid = uniform_grid(101);
  PlantState s = PlantState::zeros(md, grid);
  s.X0(0) = 3.0;
  s.X1(0) = 4.0;
  CHECK(chi_norm(s) == doctest::Approx(5.0));
  s.X0(0) = 0.0;
  s.X1(0) = 0.0;
  for (int a = 0; a < 101; ++a) s.u(a, 0) = 2.0;
  CHECK(chi_norm(s) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("flatten and unflatten are inverse") {
  const PlantModel md = testing::scenario_model("demo");
  const auto grid = uniform_grid(21);
  std::mt19937_64 rng(4);
  const PlantState s = testing::random_plant_state(md, grid, rng);
  const PlantState back = PlantState::unflatten(s.flatten(), grid, md.n, md.m, md.p, md.q);
  CHECK((back.flatten() - s.flatten()).norm() == 0.0);
  CHECK(chi_norm(s) == doctest::Approx(1.0).epsilon(1e-9));
}
