#include <doctest.h>

#include <cmath>

#include "hyperstab/io.hpp"
#include "support.hpp"

using namespace hyperstab;

namespace {

Trajectory synthetic() {
  Trajectory tr;
  tr.n = 2;
  tr.m = 1;
  tr.p = 1;
  tr.q = 1;
  tr.stations = {0.0, 0.5, 1.0};
  for (int k = 0; k < 50; ++k) {
    const double t = 0.1 * k;
    tr.t.push_back(t);
    tr.X0.push_back(Vector::Constant(1, std::sin(t)));
    tr.X1.push_back(Vector::Constant(1, std::cos(t) / 3.0));
    tr.u_st.push_back(Vector::LinSpaced(6, t, 2.0 * t + 1.0));
    tr.v_st.push_back(Vector::LinSpaced(3, -t, 1.0 / 7.0));
    tr.U.push_back(Vector::Constant(2, std::exp(-t)));
    tr.y.push_back(Vector::Constant(2, 1e-300 * k));
    tr.chi_state.push_back(std::exp(-0.5 * t));
    tr.chi_error.push_back(0.0);
  }
  return tr;
}

const std::filesystem::path kDir = std::filesystem::temp_directory_path() / "hyperstab_test_io";

}  // namespace

TEST_CASE("trajectory CSV round trip") {
  std::filesystem::remove_all(kDir);
  const Trajectory tr = synthetic();
  write_trajectory_csv(kDir / "a.csv", tr);
  const Trajectory back = read_trajectory_csv(kDir / "a.csv");
  CHECK(back.n == 2);
  CHECK(back.m == 1);
  CHECK(back.stations == tr.stations);
  REQUIRE(back.size() == tr.size());
  for (std::size_t k = 0; k < tr.size(); ++k) {
    CHECK((back.u_st[k] - tr.u_st[k]).norm() <= 1e-11 * (1.0 + tr.u_st[k].norm()));
    CHECK(back.chi_state[k] == doctest::Approx(tr.chi_state[k]).epsilon(1e-11));
  }
  write_trajectory_csv(kDir / "b.csv", back);
  CHECK(testing::slurp(kDir / "a.csv") == testing::slurp(kDir / "b.csv"));
  CHECK(testing::slurp(kDir / "a.csv").rfind(kTrajectoryHeader, 0) == 0);
}

TEST_CASE("malformed trajectory files are rejected") {
  write_text(kDir / "bad.csv", "t,x\n0,1\n");
  CHECK_THROWS(read_trajectory_csv(kDir / "bad.csv"));
  write_text(kDir / "ragged.csv", std::string(kTrajectoryHeader) + "\n" +
                                      "t,X0_1,X1_1,u1@0,v1@0,U_1,y_1,chi_state,chi_error\n0,1,2\n");
  CHECK_THROWS(read_trajectory_csv(kDir / "ragged.csv"));
  CHECK_THROWS(read_trajectory_csv(kDir / "missing.csv"));
}

TEST_CASE("plots are a pure function of the CSV") {
  const Trajectory tr = synthetic();
  write_trajectory_csv(kDir / "c.csv", tr);
  write_trajectory_plots(kDir / "p1", read_trajectory_csv(kDir / "c.csv"));
  write_trajectory_plots(kDir / "p2", read_trajectory_csv(kDir / "c.csv"));
  for (const char* f : {"chi_norms.svg", "control.svg", "boundary.svg"}) {
    CAPTURE(f);
    const std::string a = testing::slurp(kDir / "p1" / f);
    CHECK(a.rfind("<svg", 0) == 0);
    CHECK(a == testing::slurp(kDir / "p2" / f));
  }
}

TEST_CASE("SVG rendering details") {
  PlotSpec s{"a < b & c", "t", "y", true, {}};
  s.series.push_back({"s", {0.0, 1.0, 2.0}, {1.0, 0.0, 1e-3}});
  const std::string svg = render_svg(s);
  CHECK(svg.find("a &lt; b &amp; c") != std::string::npos);
  CHECK(svg.find("1e-3") != std::string::npos);
  CHECK(svg.find("nan") == std::string::npos);
  CHECK(svg == render_svg(s));

  PlotSpec empty{"empty", "t", "y", false, {}};
  CHECK(render_svg(empty).find("</svg>") != std::string::npos);
  std::filesystem::remove_all(kDir);
}
