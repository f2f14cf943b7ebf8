#include "hyperstab/scenario.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <regex>
#include <sstream>
#include <thread>

#include "hyperstab/io.hpp"

namespace hyperstab {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json eigen_list(const std::vector<Complex>& ev) {
  json out = json::array();
  for (const auto& l : ev) out.push_back({l.real(), l.imag()});
  return out;
}

template <class T>
void read_opt(const json& j, const char* key, T& target) {
  if (j.contains(key)) target = j.at(key).get<T>();
}

void write_json(const fs::path& file, const json& doc) { write_text(file, doc.dump(2) + "\n"); }

std::size_t index_at(const Trajectory& tr, double t) {
  if (tr.size() < 2) return 0;
  const double dt = tr.t[1] - tr.t[0];
  const auto k = static_cast<std::size_t>(std::llround((t - tr.t[0]) / dt));
  return std::min(k, tr.size() - 1);
}

json fit_json(const DecayFit& f, double t_start) {
  return {{"rate", f.rate}, {"r_squared", f.r_squared}, {"samples", f.samples}, {"t_start", t_start}};
}

json residual_json(const ResidualReport& r) {
  return {{"relative", r.relative}, {"absolute", r.absolute}, {"scale", r.scale},
          {"t_begin", r.t_begin}, {"t_end", r.t_end}};
}

ResidualReport observer_residual(const Pipeline& pipe) {
  const auto& md = pipe.cfg->model;
  return observer_residual_check(*pipe.observer_form, md, pipe.kernels.couplings,
                                 pipe.observer_form->expr.horizon() + 3.0 * md.tau(), pipe.cfg->sim.seed);
}

ResidualReport control_residual(const Pipeline& pipe) {
  const auto& md = pipe.cfg->model;
  return control_residual_check(*pipe.control_form, md, pipe.kernels.couplings, pipe.kernels.control,
                                pipe.control_form->boundary.horizon() + 3.0 * md.tau(), pipe.cfg->sim.seed);
}

void print_failures(const Pipeline& pipe) {
  const json& r = pipe.report;
  for (const char* key : {"assumption1", "kernels", "assumption2", "assumption3"}) {
    if (!r.contains(key)) continue;
    const json& a = r.at(key);
    const bool ok = a.value("pass", false);
    if (ok) continue;
    std::cerr << key << ": fail";
    if (a.contains("message")) std::cerr << " (" << a.at("message").get<std::string>() << ")";
    std::cerr << "\n";
    if (a.contains("eigenvalues"))
      for (const auto& e : a.at("eigenvalues")) std::cerr << "  eigenvalue " << e[0] << " " << e[1] << "i\n";
  }
}

/// Config-level failures before any derivation.
Pipeline checked_pipeline(const ScenarioConfig& cfg) {
  cfl_precheck(cfg);
  Pipeline pipe = build_pipeline(cfg);
  if (!pipe.model_problems.empty()) {
    std::string msg = "invalid model:";
    for (const auto& p : pipe.model_problems) msg += " " + p + ";";
    throw ConfigError(msg);
  }
  return pipe;
}

}  // namespace

ScenarioConfig scenario_from_json(const json& doc, const fs::path& base_dir) {
  ScenarioConfig cfg;
  try {
    if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
    if (!doc.contains("model")) throw ConfigError("scenario has no model");
    const json& m = doc.at("model");
    if (m.is_string()) {
      const fs::path file = base_dir / m.get<std::string>();
      std::ifstream in(file);
      if (!in) throw ConfigError("cannot open model file " + file.string());
      cfg.model_json = json::parse(in);
    } else {
      cfg.model_json = m;
    }
    cfg.model = model_from_json(cfg.model_json);

    if (doc.contains("grid")) read_opt(doc.at("grid"), "N", cfg.N);
    read_opt(doc, "N", cfg.N);

    if (doc.contains("sim")) {
      const json& s = doc.at("sim");
      SimConfig& sc = cfg.sim;
      read_opt(s, "dt", sc.dt);
      read_opt(s, "t_final", sc.t_final);
      read_opt(s, "seed", sc.seed);
      read_opt(s, "init_norm", sc.init_norm);
      read_opt(s, "observer_init_scale", sc.observer_init_scale);
      read_opt(s, "stations", sc.stations);
      read_opt(s, "divergence_threshold", sc.divergence_threshold);
      read_opt(s, "observe", sc.observe);
      if (s.contains("exec")) {
        const auto e = s.at("exec").get<std::string>();
        if (e != "serial" && e != "parallel") throw ConfigError("sim.exec must be serial or parallel");
        sc.exec = e == "parallel" ? Exec::Parallel : Exec::Serial;
      }
      if (s.contains("interpolation")) {
        const auto e = s.at("interpolation").get<std::string>();
        if (e != "linear" && e != "cubic") throw ConfigError("sim.interpolation must be linear or cubic");
        sc.interpolation = e == "linear" ? Interpolation::Linear : Interpolation::Cubic;
      }
      if (!(sc.t_final > 0.0)) throw ConfigError("sim.t_final must be positive");
      if (sc.stations.empty()) throw ConfigError("sim.stations must not be empty");
      for (double x : sc.stations)
        if (x < 0.0 || x > 1.0) throw ConfigError("sim.stations must lie in [0, 1]");
    }

    if (doc.contains("synthesis")) {
      const json& s = doc.at("synthesis");
      SynthesisSettings& ss = cfg.synthesis;
      read_opt(s, "epsilon", ss.epsilon);
      ss.observer_margin = ss.epsilon;
      read_opt(s, "observer_margin", ss.observer_margin);
      read_opt(s, "filter_omega0", ss.filter_omega0);
      read_opt(s, "filter_doublings", ss.filter_doublings);
      read_opt(s, "theta_grid", ss.theta_grid);
      if (s.contains("filter_omega_c")) ss.filter_omega_c = s.at("filter_omega_c").get<double>();
      if (!(ss.epsilon > 0.0) || !(ss.observer_margin > 0.0)) throw ConfigError("synthesis margins must be positive");
      if (!(ss.filter_omega0 > 0.0)) throw ConfigError("synthesis.filter_omega0 must be positive");
      if (ss.theta_grid < 8) throw ConfigError("synthesis.theta_grid must be at least 8");
    }
    if (doc.contains("outputs")) cfg.outputs = doc.at("outputs").get<std::string>();
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  return cfg;
}

ScenarioConfig load_scenario(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const std::exception& e) {
    throw ConfigError(file.string() + ": " + e.what());
  }
  return scenario_from_json(doc, file.parent_path());
}

void cfl_precheck(const ScenarioConfig& cfg) {
  if (cfg.N < 4) throw ConfigError("grid N must be at least 4");
  if (cfg.sim.dt < 0.0) throw ConfigError("sim.dt must be non-negative");
  if (cfg.sim.dt > 0.0) {
    const double h = 1.0 / (cfg.N - 1);
    const double speed = std::max(cfg.model.lambda.maxCoeff(), cfg.model.mu.maxCoeff());
    if (cfg.sim.dt * speed > h * (1.0 + 1e-12))
      throw ConfigError("sim.dt violates the CFL bound dt <= h / max speed = " + std::to_string(h / speed));
  }
}

fs::path cache_directory(const ScenarioConfig& cfg) {
  if (const char* env = std::getenv("HYPERSTAB_CACHE"); env && *env) return env;
  return cfg.outputs / "cache";
}

bool Pipeline::all_pass() const {
  return model_problems.empty() && assumption1.pass && observer.has_value() && controller.has_value();
}

LoopDesign Pipeline::design() const {
  LoopDesign d;
  d.model = &cfg->model;
  d.kernels = &kernels;
  d.transforms = transforms ? &*transforms : nullptr;
  d.observer = observer ? &*observer : nullptr;
  d.controller = controller ? &*controller : nullptr;
  return d;
}

Pipeline build_pipeline(const ScenarioConfig& cfg, bool with_transforms) {
  Pipeline pipe;
  pipe.cfg = &cfg;
  json& r = pipe.report;
  r["schema"] = "hyperstab-validation-v1";
  pipe.model_problems = validate(cfg.model);
  r["model"] = {{"pass", pipe.model_problems.empty()}, {"problems", pipe.model_problems}};
  if (!pipe.model_problems.empty()) return pipe;

  const PlantModel& md = cfg.model;
  pipe.assumption1 = check_assumption1(md, cfg.synthesis.theta_grid);
  const auto& a1 = pipe.assumption1;
  r["assumption1"] = {{"pass", a1.pass},
                      {"sup_radius", a1.sup_radius},
                      {"margin", 1.0 - a1.sup_radius},
                      {"norm_bound", a1.norm_bound},
                      {"norm_certificate", a1.norm_bound < 1.0},
                      {"samples", a1.samples},
                      {"grid_refused", a1.grid_refused}};

  try {
    pipe.kernels = solve_all_kernels(md, cfg.N, cache_directory(cfg), {}, &pipe.cache_hit);
  } catch (const std::exception& e) {
    r["kernels"] = {{"pass", false}, {"message", e.what()}};
    return pipe;
  }
  r["kernels"] = {{"pass", true},
                  {"N", cfg.N},
                  {"jump_residual", jump_condition_residual(md, pipe.kernels.observer)},
                  {"control_kernel_residual", control_kernel_residual(pipe.kernels.control, pipe.kernels.couplings.G1)}};

  pipe.observer_form = derive_observer_delay_form(md, pipe.kernels.couplings);
  pipe.control_form = derive_control_delay_form(md, pipe.kernels.couplings, pipe.kernels.control);

  const double mo = cfg.synthesis.observer_margin;
  try {
    pipe.observer = design_observer(md, pipe.kernels.couplings, *pipe.observer_form, mo);
    r["assumption2"] = {{"pass", true},
                        {"required_margin", mo},
                        {"margin", -pipe.observer->max_real_part},
                        {"gain", matrix_to_json(pipe.observer->L_o)}};
  } catch (const AssumptionFailure& e) {
    r["assumption2"] = {{"pass", false}, {"required_margin", mo}, {"message", e.what()},
                        {"eigenvalues", eigen_list(e.eigenvalues())}};
  }

  const double mc = cfg.synthesis.epsilon;
  try {
    pipe.controller = design_controller(md, pipe.kernels.couplings, *pipe.control_form, mc);
    r["assumption3"] = {{"pass", true},
                        {"required_margin", mc},
                        {"margin", -pipe.controller->max_real_part},
                        {"gain", matrix_to_json(pipe.controller->K_c)}};
  } catch (const AssumptionFailure& e) {
    r["assumption3"] = {{"pass", false}, {"required_margin", mc}, {"message", e.what()},
                        {"eigenvalues", eigen_list(e.eigenvalues())}};
  }

  if (with_transforms) pipe.transforms = build_transform_operators(md, pipe.kernels.observer, pipe.kernels.control);
  r["pass"] = pipe.all_pass();
  return pipe;
}

LowPassFilter select_filter(const Pipeline& pipe) {
  const auto& ss = pipe.cfg->synthesis;
  if (ss.filter_omega_c) return LowPassFilter::butterworth(*ss.filter_omega_c);
  SimConfig sc = pipe.cfg->sim;
  sc.t_final = 2.0 * sc.t_final;
  sc.observe = false;
  return design_filter(ss.filter_omega0, ss.filter_doublings, [&](const LowPassFilter& f) {
    LoopDesign d = pipe.design();
    d.filter = f;
    const Trajectory tr = run_closed_loop(d, sc, LoopMode::OutputFeedback);
    return !tr.diverged && tr.chi_state.back() <= 1e-2 * tr.chi_state.front();
  });
}

SimulationOutcome simulate(const Pipeline& pipe, LoopMode mode, const std::optional<LowPassFilter>& filter) {
  if (!pipe.transforms) throw std::invalid_argument("simulate needs the transform operators");
  LoopDesign d = pipe.design();
  if (mode == LoopMode::OutputFeedback) d.filter = filter;
  SimConfig sc = pipe.cfg->sim;
  if (!d.observer) sc.observe = false;
  SimulationOutcome out;
  out.trajectory = run_closed_loop(d, sc, mode);
  const Trajectory& tr = out.trajectory;
  const double tau = pipe.cfg->model.tau();

  json& r = out.report;
  r["schema"] = "hyperstab-decay-v1";
  r["mode"] = mode_name(mode);
  r["dt"] = tr.size() > 1 ? tr.t[1] - tr.t[0] : 0.0;
  r["t_end"] = tr.t.back();
  r["samples"] = tr.size();
  r["diverged"] = tr.diverged;
  const double c0 = tr.chi_state.front(), c1 = tr.chi_state.back();
  r["chi_initial"] = c0;
  r["chi_final"] = c1;
  r["ratio"] = c1 / c0;
  r["growing"] = c1 > c0;
  r["fit"] = fit_json(fit_decay(tr.t, tr.chi_state, tau), tau);
  if (mode == LoopMode::OutputFeedback && d.filter) {
    r["filter"] = {{"omega_c", d.filter->omega_c},
                   {"order", d.filter->order},
                   {"gain_at_100_omega_c", std::abs(d.filter->response(100.0 * d.filter->omega_c))}};
  }
  if (std::any_of(tr.chi_error.begin(), tr.chi_error.end(), [](double e) { return e != 0.0; })) {
    const double e0 = tr.chi_error.front();
    const double e3 = tr.chi_error[index_at(tr, 3.0 * tau)];
    r["error"] = {{"initial", e0},
                  {"at_3tau", e3},
                  {"ratio_at_3tau", e3 / e0},
                  {"fit", fit_json(fit_decay(tr.t, tr.chi_error, tau), tau)}};
  }
  return out;
}

int cmd_validate(const ScenarioConfig& cfg, const fs::path& out) {
  Pipeline pipe = checked_pipeline(cfg);
  write_json(out / "validate.json", pipe.report);
  const json& r = pipe.report;
  for (const char* key : {"assumption1", "kernels", "assumption2", "assumption3"}) {
    if (!r.contains(key)) continue;
    const json& a = r.at(key);
    std::cout << key << ": " << (a.value("pass", false) ? "pass" : "fail");
    if (a.contains("margin")) std::cout << " margin " << a.at("margin").get<double>();
    std::cout << "\n";
  }
  if (!pipe.all_pass()) {
    print_failures(pipe);
    return kExitAssumption;
  }
  return kExitOk;
}

int cmd_synthesize(const ScenarioConfig& cfg, const fs::path& out) {
  Pipeline pipe = checked_pipeline(cfg);
  write_json(out / "validate.json", pipe.report);
  if (!pipe.all_pass()) {
    print_failures(pipe);
    return kExitAssumption;
  }
  export_kernels_csv(pipe.kernels.observer, pipe.kernels.control, out / "kernels");
  export_delay_forms_csv(*pipe.observer_form, *pipe.control_form, out / "delay_forms");

  const ResidualReport ro = observer_residual(pipe);
  const ResidualReport rc = control_residual(pipe);
  json cert;
  cert["schema"] = "hyperstab-certificates-v1";
  cert["observer_delay_form"] = residual_json(ro);
  cert["control_delay_form"] = residual_json(rc);
  cert["kernels"] = pipe.report.at("kernels");
  cert["assumption1"] = pipe.report.at("assumption1");

  std::optional<LowPassFilter> filter;
  try {
    filter = select_filter(pipe);
  } catch (const std::runtime_error& e) {
    std::cerr << "filter: " << e.what() << "\n";
  }
  json syn = synthesis_to_json(*pipe.observer, *pipe.controller, filter ? &*filter : nullptr);
  write_json(out / "synthesis.json", syn);
  if (filter) cert["filter"] = {{"omega_c", filter->omega_c}, {"gain_at_100_omega_c", std::abs(filter->response(100.0 * filter->omega_c))}};
  write_json(out / "certificates.json", cert);

  std::cout << "kernels: " << (pipe.cache_hit ? "cached" : "solved") << "\n";
  std::cout << "observer delay-form residual " << ro.relative << "\n";
  std::cout << "control delay-form residual " << rc.relative << "\n";
  if (filter) std::cout << "filter cutoff " << filter->omega_c << "\n";
  return filter ? kExitOk : kExitAssumption;
}

int cmd_simulate(const ScenarioConfig& cfg, LoopMode mode, const fs::path& out) {
  Pipeline pipe = checked_pipeline(cfg);
  if (!pipe.transforms) {
    print_failures(pipe);
    return kExitAssumption;
  }
  if (mode != LoopMode::OpenLoop && !pipe.all_pass()) {
    print_failures(pipe);
    return kExitAssumption;
  }
  std::optional<LowPassFilter> filter;
  if (mode == LoopMode::OutputFeedback) {
    try {
      filter = select_filter(pipe);
    } catch (const std::runtime_error& e) {
      std::cerr << "filter: " << e.what() << "\n";
      return kExitAssumption;
    }
  }
  const SimulationOutcome res = simulate(pipe, mode, filter);
  const fs::path dir = out / mode_name(mode);
  write_trajectory_csv(dir / "trajectory.csv", res.trajectory);
  write_trajectory_plots(dir, read_trajectory_csv(dir / "trajectory.csv"));
  write_json(dir / "decay.json", res.report);

  const json& r = res.report;
  std::cout << mode_name(mode) << ": chi " << r.at("chi_initial").get<double>() << " -> "
            << r.at("chi_final").get<double>() << " over t = " << r.at("t_end").get<double>() << ", fitted rate "
            << r.at("fit").at("rate").get<double>() << "\n";
  if (res.trajectory.diverged) {
    std::cerr << "diverged at t = " << res.trajectory.t.back() << "\n";
    return kExitDiverged;
  }
  return kExitOk;
}

ScenarioConfig with_parameter(const ScenarioConfig& cfg, const std::string& parameter, double value) {
  ScenarioConfig c = cfg;
  auto positive = [&](double v) {
    if (!(v > 0.0)) throw ConfigError(parameter + " must be positive");
    return v;
  };
  if (parameter == "N") {
    if (value != std::floor(value) || value < 4) throw ConfigError("N must be an integer >= 4");
    c.N = static_cast<int>(value);
  } else if (parameter == "epsilon") {
    c.synthesis.epsilon = positive(value);
  } else if (parameter == "observer_margin") {
    c.synthesis.observer_margin = positive(value);
  } else if (parameter == "filter_omega_c") {
    c.synthesis.filter_omega_c = positive(value);
  } else if (parameter == "filter_omega0") {
    c.synthesis.filter_omega0 = positive(value);
  } else if (parameter == "t_final") {
    c.sim.t_final = positive(value);
  } else if (parameter == "seed") {
    c.sim.seed = static_cast<unsigned>(value);
  } else if (parameter == "observer_init_scale") {
    c.sim.observer_init_scale = value;
  } else {
    static const std::regex re(R"(([A-Za-z_][A-Za-z0-9_]*)(?:\[(\d+)(?:,(\d+))?\])?)");
    std::smatch mt;
    if (!std::regex_match(parameter, mt, re) || !c.model_json.contains(mt[1].str()))
      throw ConfigError("unknown sweep parameter '" + parameter + "'");
    json& entry = c.model_json[mt[1].str()];
    if (!mt[2].matched) {
      if (entry.is_number()) entry = value;
      else if (entry.is_array() && entry.size() == 1 && entry[0].is_array() && entry[0].size() == 1) entry[0][0] = value;
      else if (entry.is_array() && entry.size() == 1 && entry[0].is_number()) entry[0] = value;
      else throw ConfigError(parameter + " is not a scalar; use an index such as " + parameter + "[0,0]");
    } else {
      const std::size_t i = std::stoul(mt[2].str());
      if (!entry.is_array() || i >= entry.size()) throw ConfigError(parameter + ": index out of range");
      if (mt[3].matched) {
        const std::size_t j = std::stoul(mt[3].str());
        if (!entry[i].is_array() || j >= entry[i].size()) throw ConfigError(parameter + ": index out of range");
        entry[i][j] = value;
      } else {
        if (!entry[i].is_number()) throw ConfigError(parameter + ": expected a vector entry");
        entry[i] = value;
      }
    }
    try {
      c.model = model_from_json(c.model_json);
    } catch (const std::exception& e) {
      throw ConfigError(parameter + ": " + e.what());
    }
  }
  return c;
}

int cmd_sweep(const ScenarioConfig& cfg, const std::string& parameter, const std::vector<double>& values,
              LoopMode mode, const fs::path& out) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  with_parameter(cfg, parameter, values.front());

  const std::vector<std::string> cols{"value",   "status",  "assumption1", "sup_radius", "assumption2",
                                      "assumption3", "diverged", "ratio",  "decay_rate", "r_squared",
                                      "observer_residual", "control_residual"};
  std::vector<std::map<std::string, std::string>> rows(values.size());
  auto num = [](double v) {
    std::ostringstream s;
    s.precision(10);
    s << v;
    return s.str();
  };
  auto run_row = [&](std::size_t k) {
    auto& row = rows[k];
    row["value"] = num(values[k]);
    try {
      const ScenarioConfig c = with_parameter(cfg, parameter, values[k]);
      const Pipeline pipe = checked_pipeline(c);
      const json& r = pipe.report;
      row["assumption1"] = pipe.assumption1.pass ? "pass" : "fail";
      row["sup_radius"] = num(pipe.assumption1.sup_radius);
      if (r.contains("assumption2")) row["assumption2"] = r["assumption2"]["pass"].get<bool>() ? "pass" : "fail";
      if (r.contains("assumption3")) row["assumption3"] = r["assumption3"]["pass"].get<bool>() ? "pass" : "fail";
      if (pipe.observer_form) {
        row["observer_residual"] = num(observer_residual(pipe).relative);
        row["control_residual"] = num(control_residual(pipe).relative);
      }
      if (!pipe.transforms || (mode != LoopMode::OpenLoop && !pipe.all_pass())) {
        row["status"] = "fail";
        return;
      }
      std::optional<LowPassFilter> filter;
      if (mode == LoopMode::OutputFeedback) filter = select_filter(pipe);
      const SimulationOutcome res = simulate(pipe, mode, filter);
      row["diverged"] = res.trajectory.diverged ? "1" : "0";
      row["ratio"] = num(res.report["ratio"].get<double>());
      row["decay_rate"] = num(res.report["fit"]["rate"].get<double>());
      row["r_squared"] = num(res.report["fit"]["r_squared"].get<double>());
      const bool pass = !res.trajectory.diverged && (mode == LoopMode::OpenLoop || res.report["ratio"].get<double>() < 1.0);
      row["status"] = pass ? "pass" : "fail";
    } catch (const std::exception& e) {
      std::string msg = e.what();
      std::replace(msg.begin(), msg.end(), ',', ';');
      std::replace(msg.begin(), msg.end(), '\n', ' ');
      row["status"] = "error: " + msg;
    }
  };

  const unsigned workers = std::max(1u, std::min<unsigned>(std::thread::hardware_concurrency(),
                                                           static_cast<unsigned>(values.size())));
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < values.size(); k = next++) run_row(k);
    });
  for (auto& t : pool) t.join();

  std::string name = parameter;
  for (char& ch : name)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '_') ch = '_';
  std::ostringstream csv;
  for (std::size_t i = 0; i < cols.size(); ++i) csv << (i ? "," : "") << cols[i];
  csv << "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      const auto it = row.find(cols[i]);
      csv << (i ? "," : "") << (it == row.end() ? "" : it->second);
    }
    csv << "\n";
  }
  const fs::path file = out / ("sweep_" + name + ".csv");
  write_text(file, csv.str());
  std::cout << csv.str();
  std::cout << "wrote " << file.string() << "\n";
  return kExitOk;
}

}  // namespace hyperstab
