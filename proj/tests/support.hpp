#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include <json.hpp>

#include "hyperstab/model.hpp"
#include "hyperstab/scenario.hpp"
#include "hyperstab/systems.hpp"

namespace testing {

inline std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(HYPERSTAB_SCENARIO_DIR) / (name + ".json");
}

inline nlohmann::json scenario_json(const std::string& name) {
  std::ifstream in(scenario_path(name));
  return nlohmann::json::parse(in);
}

inline hyperstab::PlantModel scenario_model(const std::string& name) {
  return hyperstab::model_from_json(scenario_json(name).at("model"));
}

/// Scenario loaded with outputs and cache redirected below `out`.
inline hyperstab::ScenarioConfig scenario_config(const std::string& name, const std::filesystem::path& out) {
  hyperstab::ScenarioConfig cfg = hyperstab::load_scenario(scenario_path(name));
  cfg.outputs = out;
  return cfg;
}

inline hyperstab::PlantState to_plant(const hyperstab::TransportState& s, const std::vector<double>& grid, int n,
                                      int p) {
  const int q = static_cast<int>(s.Y.size()) - p;
  const int m = static_cast<int>(s.W.cols()) - n;
  return {grid, s.Y.head(p), s.W.leftCols(n), s.W.rightCols(m), s.Y.tail(q)};
}

inline hyperstab::PlantState random_plant_state(const hyperstab::PlantModel& md, const std::vector<double>& grid,
                                                std::mt19937_64& rng) {
  return to_plant(hyperstab::random_smooth_state(md.n, md.m, md.p + md.q, grid, rng, 1.0), grid, md.n, md.p);
}

inline hyperstab::PlantState difference(const hyperstab::PlantState& a, const hyperstab::PlantState& b) {
  return {a.grid, a.X0 - b.X0, a.u - b.u, a.v - b.v, a.X1 - b.X1};
}

inline std::string slurp(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace testing
