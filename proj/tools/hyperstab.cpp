#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "hyperstab/scenario.hpp"

using namespace hyperstab;

namespace {

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.find_first_not_of(" \t") == std::string::npos) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: '" + item + "'");
    }
    if (item.find_first_not_of(" \t", used) != std::string::npos) throw ConfigError("not a number: '" + item + "'");
    out.push_back(v);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Output-feedback stabilization of hyperbolic PDEs between two ODEs"};
  app.require_subcommand(1);

  std::string config, out, mode = "state_feedback", param, values;
  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config, "scenario JSON")->required();
    cmd->add_option("--out", out, "output directory (default: the scenario's outputs entry)");
  };
  CLI::App* validate = app.add_subcommand("validate", "check the model and Assumptions 1-3");
  CLI::App* synthesize = app.add_subcommand("synthesize", "kernels, delay forms, gains and certificates");
  CLI::App* simulate = app.add_subcommand("simulate", "run the loop and write trajectory, fit and plots");
  CLI::App* sweep = app.add_subcommand("sweep", "repeat validate and simulate over a parameter list");
  for (CLI::App* c : {validate, synthesize, simulate, sweep}) add_common(c);
  for (CLI::App* c : {simulate, sweep})
    c->add_option("--mode", mode, "open_loop, state_feedback or output_feedback");
  sweep->add_option("--param", param, "parameter name, e.g. N, epsilon, Q or Q[0,0]")->required();
  sweep->add_option("--values", values, "comma separated values")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    const ScenarioConfig cfg = load_scenario(config);
    const std::filesystem::path dir = out.empty() ? cfg.outputs : std::filesystem::path(out);
    if (validate->parsed()) return cmd_validate(cfg, dir);
    if (synthesize->parsed()) return cmd_synthesize(cfg, dir);
    LoopMode lm;
    try {
      lm = parse_mode(mode);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (simulate->parsed()) return cmd_simulate(cfg, lm, dir);
    return cmd_sweep(cfg, param, parse_values(values), lm, dir);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitAssumption;
  }
}
