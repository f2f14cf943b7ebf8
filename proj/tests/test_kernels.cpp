#include <doctest.h>

#include <random>

#include "hyperstab/kernels.hpp"
#include "support.hpp"

using namespace hyperstab;

namespace {

PlantModel uncoupled(const std::string& name, bool zero_A1) {
  auto doc = testing::scenario_json(name).at("model");
  for (const char* k : {"Sigma_pp", "Sigma_pm", "Sigma_mp", "Sigma_mm"}) doc[k] = "zero";
  if (zero_A1) doc["A1"] = nlohmann::json::array({nlohmann::json::array({0.0})});
  return model_from_json(doc);
}

double node_kernel_sup(const NodeKernel& k) {
  double s = 0;
  for (int a = 0; a < k.points(); ++a)
    for (int b = a; b < k.points(); ++b) s = std::max(s, k.at(a, b).cwiseAbs().maxCoeff());
  return s;
}

}  // namespace

TEST_CASE("uncoupled plant: L vanishes and the boundary kernels have closed forms") {
  for (bool zero_A1 : {true, false}) {
    CAPTURE(zero_A1);
    const PlantModel md = uncoupled("demo", zero_A1);
    const TriGrid g(101);
    const KernelSetObserver ks = solve_observer_kernels(md, g);
    CHECK(node_kernel_sup(ks.L) < 1e-12);
    CHECK(ks.L1.sup_norm() < 1e-12);
    double e_l2 = 0, e_gb = 0, e_ga = 0;
    for (int a = 0; a < g.N; ++a) {
      const double x = g.x[a];
      for (int j = 0; j < md.m; ++j) {
        const Vector col = expm(-md.A0, x / md.mu(j)) * md.E0.col(j) / md.mu(j);
        e_l2 = std::max(e_l2, (ks.L2[a].col(j) - col).cwiseAbs().maxCoeff());
        const Matrix row = md.C1.row(j) * expm(md.A1, (x - 1.0) / md.mu(j));
        e_gb = std::max(e_gb, (ks.gamma[a].row(md.n + j) - row).cwiseAbs().maxCoeff());
        if (zero_A1) CHECK((ks.gamma[a].row(md.n + j) - md.C1.row(j)).cwiseAbs().maxCoeff() < 1e-12);
      }
      e_ga = std::max(e_ga, ks.gamma[a].topRows(md.n).cwiseAbs().maxCoeff());
    }
    CHECK(e_l2 < 1e-8);
    CHECK(e_gb < 1e-8);
    CHECK(e_ga < 1e-12);
  }
}

TEST_CASE("serial and parallel kernel sweeps agree") {
  const PlantModel md = testing::scenario_model("demo");
  const TriGrid g(61);
  KernelOptions serial, parallel;
  serial.exec = Exec::Serial;
  parallel.exec = Exec::Parallel;
  const KernelSetObserver a = solve_observer_kernels(md, g, serial);
  const KernelSetObserver b = solve_observer_kernels(md, g, parallel);
  double diff = 0;
  for (int i = 0; i < g.N; ++i)
    for (int j = i; j < g.N; ++j) diff = std::max(diff, (a.L.at(i, j) - b.L.at(i, j)).cwiseAbs().maxCoeff());
  CHECK(diff == 0.0);
  CHECK(a.sweep_changes.size() == b.sweep_changes.size());
}

TEST_CASE("kernel residuals shrink under refinement") {
  const PlantModel md = testing::scenario_model("demo");
  auto residuals = [&](int N) {
    const TriGrid g(N);
    const KernelSetObserver ks = solve_observer_kernels(md, g);
    const CouplingFunctions cf = solve_coupling_terms(md, ks);
    const KernelSetControl kc = solve_control_kernels(cf.G1, md, g, cf);
    return std::array<double, 3>{jump_condition_residual(md, ks), coupling_residual(md, ks, cf),
                                 control_kernel_residual(kc, cf.G1)};
  };
  const auto coarse = residuals(41);
  const auto fine = residuals(81);
  for (int k = 0; k < 3; ++k) {
    CAPTURE(k);
    CHECK(fine[k] < 0.7 * coarse[k] + 1e-12);
  }
  CHECK(fine[0] < 1e-2);
}

TEST_CASE("coupling structure") {
  const PlantModel md = testing::scenario_model("demo");
  const TriGrid g(41);
  const KernelSetObserver ks = solve_observer_kernels(md, g);
  const CouplingFunctions cf = solve_coupling_terms(md, ks);
  for (int a = 0; a < g.N; ++a) {
    const Matrix& f = cf.F_alpha[a];
    for (int i = 0; i < md.n; ++i)
      for (int j = i; j < md.n; ++j) CHECK(f(i, j) == 0.0);
  }
  const Matrix expected = md.Q * ks.gamma[0].bottomRows(md.m) - ks.gamma[0].topRows(md.n);
  CHECK((cf.K_X - expected).norm() < 1e-14);
}

TEST_CASE("observer transform round trip on the scalar scenario") {
  const PlantModel md = testing::scenario_model("scalar");
  const TriGrid g(101);
  const KernelSetObserver ks = solve_observer_kernels(md, g);
  std::mt19937_64 rng(17);
  for (int k = 0; k < 5; ++k) {
    const PlantState x = testing::random_plant_state(md, g.x, rng);
    const PlantState y = invert_T(md, ks, apply_T(md, ks, x));
    CHECK(chi_norm(testing::difference(x, y)) < 1e-6);
    const PlantState z = apply_T(md, ks, invert_T(md, ks, x));
    CHECK(chi_norm(testing::difference(x, z)) < 1e-6);
  }
}

TEST_CASE("dense operators match the functional transforms") {
  const PlantModel md = testing::scenario_model("scalar");
  const TriGrid g(41);
  const KernelSetObserver ks = solve_observer_kernels(md, g);
  const CouplingFunctions cf = solve_coupling_terms(md, ks);
  const KernelSetControl kc = solve_control_kernels(cf.G1, md, g, cf);
  const TransformOperators ops = build_transform_operators(md, ks, kc);
  std::mt19937_64 rng(2);
  const PlantState x = testing::random_plant_state(md, g.x, rng);
  CHECK((ops.T * x.flatten() - apply_T(md, ks, x).flatten()).norm() < 1e-10);
  CHECK((ops.T1 * x.flatten() - apply_T1(kc, x).flatten()).norm() < 1e-10);
  const Matrix eye = Matrix::Identity(ops.T.rows(), ops.T.cols());
  CHECK((ops.T * ops.T_inv - eye).norm() < 1e-8);
  CHECK((ops.T1 * ops.T1_inv - eye).norm() < 1e-8);
}

TEST_CASE("kernel cache returns identical data") {
  const PlantModel md = testing::scenario_model("scalar");
  const auto dir = std::filesystem::temp_directory_path() / "hyperstab_test_cache";
  std::filesystem::remove_all(dir);
  bool hit = true;
  const KernelBundle a = solve_all_kernels(md, 41, dir, {}, &hit);
  CHECK_FALSE(hit);
  const KernelBundle b = solve_all_kernels(md, 41, dir, {}, &hit);
  CHECK(hit);
  CHECK((a.couplings.G3 - b.couplings.G3).norm() == 0.0);
  for (std::size_t i = 0; i < a.couplings.G1.size(); ++i) CHECK((a.couplings.G1[i] - b.couplings.G1[i]).norm() == 0.0);
  CHECK(kernel_cache_key(md, 41) != kernel_cache_key(md, 43));
  std::filesystem::remove_all(dir);
}
