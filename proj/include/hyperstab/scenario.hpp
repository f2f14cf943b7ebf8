#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "hyperstab/delayform.hpp"
#include "hyperstab/kernels.hpp"
#include "hyperstab/model.hpp"
#include "hyperstab/sim.hpp"
#include "hyperstab/synthesis.hpp"

namespace hyperstab {

enum ExitCode : int { kExitOk = 0, kExitAssumption = 1, kExitConfig = 2, kExitDiverged = 3 };

/// Malformed or inconsistent scenario (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SynthesisSettings {
  double epsilon = 0.5;          ///< controller decay margin
  double observer_margin = 0.5;  ///< observer decay margin
  double filter_omega0 = 4.0;    ///< base of the cutoff sweep
  int filter_doublings = 6;
  std::optional<double> filter_omega_c;  ///< fixed cutoff, skips the sweep
  int theta_grid = 16;
};

struct ScenarioConfig {
  nlohmann::json model_json;
  PlantModel model;
  int N = 201;
  SimConfig sim;
  SynthesisSettings synthesis;
  std::filesystem::path outputs = "out";
};

ScenarioConfig scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
/// Throws ConfigError for unreadable files and malformed documents.
ScenarioConfig load_scenario(const std::filesystem::path& file);
/// N large enough for the stepper and a time step within the CFL bound.
void cfl_precheck(const ScenarioConfig& cfg);

/// HYPERSTAB_CACHE when set, otherwise <outputs>/cache.
std::filesystem::path cache_directory(const ScenarioConfig& cfg);

/// Everything derived from a scenario up to the gains.
struct Pipeline {
  const ScenarioConfig* cfg = nullptr;
  std::vector<std::string> model_problems;
  Assumption1Report assumption1;
  KernelBundle kernels;
  bool cache_hit = false;
  std::optional<ObserverDelayForm> observer_form;
  std::optional<ControlDelayForm> control_form;
  std::optional<TransformOperators> transforms;
  std::optional<ObserverSynthesis> observer;
  std::optional<ControllerSynthesis> controller;
  nlohmann::json report;  ///< per-assumption pass/fail, margins and certificates

  bool all_pass() const;
  LoopDesign design() const;
};

/// Runs the model checks, the kernel and delay-form derivations and the gain
/// designs. Failed assumptions are recorded, not thrown.
Pipeline build_pipeline(const ScenarioConfig& cfg, bool with_transforms = true);

/// Filter cutoff: the fixed one, or the first of the sweep whose filtered
/// output-feedback loop decays 100x within twice the horizon.
LowPassFilter select_filter(const Pipeline& pipe);

struct SimulationOutcome {
  Trajectory trajectory;
  nlohmann::json report;
};

SimulationOutcome simulate(const Pipeline& pipe, LoopMode mode, const std::optional<LowPassFilter>& filter);

/// Command entry points. Each writes its artifacts below `out` and returns an exit code.
int cmd_validate(const ScenarioConfig& cfg, const std::filesystem::path& out);
int cmd_synthesize(const ScenarioConfig& cfg, const std::filesystem::path& out);
int cmd_simulate(const ScenarioConfig& cfg, LoopMode mode, const std::filesystem::path& out);
int cmd_sweep(const ScenarioConfig& cfg, const std::string& parameter, const std::vector<double>& values,
              LoopMode mode, const std::filesystem::path& out);

/// Copy of `cfg` with one parameter replaced. Known names: N, epsilon,
/// observer_margin, filter_omega_c, t_final, seed, and model matrices either
/// as a scalar name ("Q") or indexed ("Q[1,0]").
ScenarioConfig with_parameter(const ScenarioConfig& cfg, const std::string& parameter, double value);

}  // namespace hyperstab
