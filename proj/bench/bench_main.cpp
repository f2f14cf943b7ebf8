#include <benchmark/benchmark.h>

#include <random>

#include "hyperstab/kernels.hpp"
#include "hyperstab/scenario.hpp"
#include "hyperstab/sim.hpp"
#include "hyperstab/systems.hpp"

using namespace hyperstab;

namespace {

const PlantModel& demo_model() {
  static const PlantModel md = load_scenario(std::filesystem::path(HYPERSTAB_SCENARIO_DIR) / "demo.json").model;
  return md;
}

Exec exec_of(const benchmark::State& state) { return state.range(1) ? Exec::Parallel : Exec::Serial; }

void BM_ObserverKernels(benchmark::State& state) {
  const TriGrid grid(static_cast<int>(state.range(0)));
  KernelOptions opt;
  opt.exec = exec_of(state);
  for (auto _ : state) benchmark::DoNotOptimize(solve_observer_kernels(demo_model(), grid, opt));
}

void BM_TransportStep(benchmark::State& state) {
  const PlantModel& md = demo_model();
  const auto grid = uniform_grid(static_cast<int>(state.range(0)));
  const TransportSystem sys = plant_system(md, grid);
  const double dt = (grid[1] - grid[0]) / sys.max_speed();
  const TransportStepper st(sys, dt, exec_of(state), Interpolation::Cubic);
  std::mt19937_64 rng(1);
  TransportState s = random_smooth_state(md.n, md.m, md.p + md.q, grid, rng);
  StepHooks hooks;
  hooks.ode = [&](double, const Vector& Y, const Traces& t) { return plant_ode(md, Y, t.a1, t.b0); };
  hooks.far = [&](double, const Vector& Y) { return Vector(md.C1 * Y.tail(md.q)); };
  hooks.near = [&](double, const Vector& Y, const Matrix&) { return Vector(md.C0 * Y.head(md.p)); };
  double t = 0;
  for (auto _ : state) {
    st.step(s, t, hooks);
    t += dt;
  }
}

}  // namespace

// second argument: 0 serial, 1 OpenMP
BENCHMARK(BM_ObserverKernels)->ArgsProduct({{101, 201}, {0, 1}})->Unit(benchmark::kMillisecond);
BENCHMARK(BM_TransportStep)->ArgsProduct({{201, 801}, {0, 1}})->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
