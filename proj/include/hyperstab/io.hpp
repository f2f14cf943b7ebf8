#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hyperstab/sim.hpp"

namespace hyperstab {

inline constexpr const char* kTrajectoryHeader = "# hyperstab-trajectory-v1";

/// Column names in file order.
std::vector<std::string> trajectory_columns(const Trajectory& tr);
void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& tr);
Trajectory read_trajectory_csv(const std::filesystem::path& file);

struct PlotSeries {
  std::string name;
  std::vector<double> x, y;
};

struct PlotSpec {
  std::string title;
  std::string x_label = "t";
  std::string y_label;
  bool log_y = false;
  std::vector<PlotSeries> series;
};

/// Self-contained SVG line plot. Output depends only on the spec.
std::string render_svg(const PlotSpec& spec);

/// chi_norms.svg, control.svg and boundary.svg.
void write_trajectory_plots(const std::filesystem::path& dir, const Trajectory& tr);

void write_text(const std::filesystem::path& file, const std::string& text);

}  // namespace hyperstab
