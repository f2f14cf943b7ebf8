#include "hyperstab/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace hyperstab {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

std::string fixed(double v, int digits = 2) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string station_name(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

}  // namespace

std::vector<std::string> trajectory_columns(const Trajectory& tr) {
  std::vector<std::string> c{"t"};
  for (int i = 1; i <= tr.p; ++i) c.push_back("X0_" + std::to_string(i));
  for (int i = 1; i <= tr.q; ++i) c.push_back("X1_" + std::to_string(i));
  for (int i = 1; i <= tr.n; ++i)
    for (double s : tr.stations) c.push_back("u" + std::to_string(i) + "@" + station_name(s));
  for (int j = 1; j <= tr.m; ++j)
    for (double s : tr.stations) c.push_back("v" + std::to_string(j) + "@" + station_name(s));
  for (int i = 1; i <= tr.n; ++i) c.push_back("U_" + std::to_string(i));
  for (int i = 1; i <= tr.n; ++i) c.push_back("y_" + std::to_string(i));
  c.push_back("chi_state");
  c.push_back("chi_error");
  return c;
}

void write_trajectory_csv(const std::filesystem::path& file, const Trajectory& tr) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << kTrajectoryHeader << "\n";
  const auto cols = trajectory_columns(tr);
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << "\n";
  for (std::size_t r = 0; r < tr.size(); ++r) {
    std::string line = num(tr.t[r]);
    auto add = [&](const Vector& v) {
      for (Eigen::Index i = 0; i < v.size(); ++i) line += "," + num(v(i));
    };
    add(tr.X0[r]);
    add(tr.X1[r]);
    add(tr.u_st[r]);
    add(tr.v_st[r]);
    add(tr.U[r]);
    add(tr.y[r]);
    line += "," + num(tr.chi_state[r]) + "," + num(tr.chi_error[r]);
    out << line << "\n";
  }
}

Trajectory read_trajectory_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + file.string());
  std::string line;
  if (!std::getline(in, line) || line != kTrajectoryHeader)
    throw std::runtime_error(file.string() + ": not a trajectory file (" + kTrajectoryHeader + ")");
  if (!std::getline(in, line)) throw std::runtime_error(file.string() + ": missing column header");
  std::vector<std::string> cols;
  {
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cols.push_back(c);
  }
  Trajectory tr;
  std::vector<double> stations;
  for (const auto& c : cols) {
    if (c.rfind("X0_", 0) == 0) ++tr.p;
    else if (c.rfind("X1_", 0) == 0) ++tr.q;
    else if (c.rfind("U_", 0) == 0) ++tr.n;
    else if (c.rfind("u1@", 0) == 0) stations.push_back(std::stod(c.substr(3)));
    else if (c.size() > 1 && c[0] == 'v' && c.find('@') != std::string::npos && c.substr(c.find('@')) == "@0")
      ++tr.m;
  }
  tr.stations = stations;
  const int S = static_cast<int>(stations.size());
  const std::size_t expected = 1 + tr.p + tr.q + (tr.n + tr.m) * S + 2 * tr.n + 2;
  if (cols.size() != expected || trajectory_columns(tr) != cols)
    throw std::runtime_error(file.string() + ": unexpected column layout");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> v;
    v.reserve(expected);
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) v.push_back(std::stod(f));
    if (v.size() != expected) throw std::runtime_error(file.string() + ": ragged row");
    std::size_t k = 0;
    auto take = [&](int count) {
      Vector out(count);
      for (int i = 0; i < count; ++i) out(i) = v[k++];
      return out;
    };
    tr.t.push_back(v[k++]);
    tr.X0.push_back(take(tr.p));
    tr.X1.push_back(take(tr.q));
    tr.u_st.push_back(take(tr.n * S));
    tr.v_st.push_back(take(tr.m * S));
    tr.U.push_back(take(tr.n));
    tr.y.push_back(take(tr.n));
    tr.chi_state.push_back(v[k++]);
    tr.chi_error.push_back(v[k++]);
  }
  return tr;
}

std::string render_svg(const PlotSpec& spec) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"};
  const double W = 720, H = 420, L = 80, R = 160, T = 40, B = 50;
  const double pw = W - L - R, ph = H - T - B;

  auto ty = [&](double y) { return spec.log_y ? std::log10(std::max(y, 1e-300)) : y; };
  double x0 = INFINITY, x1 = -INFINITY, y0 = INFINITY, y1 = -INFINITY;
  for (const auto& s : spec.series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0.0)) continue;
      x0 = std::min(x0, s.x[i]);
      x1 = std::max(x1, s.x[i]);
      y0 = std::min(y0, ty(s.y[i]));
      y1 = std::max(y1, ty(s.y[i]));
    }
  }
  if (!std::isfinite(x0)) x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  if (x1 <= x0) x1 = x0 + 1;
  if (spec.log_y) {
    y0 = std::floor(y0);
    y1 = std::ceil(y1);
  }
  if (y1 <= y0) {
    y0 -= 0.5;
    y1 += 0.5;
  }
  auto px = [&](double x) { return L + (x - x0) / (x1 - x0) * pw; };
  auto py = [&](double y) { return T + (1.0 - (ty(y) - y0) / (y1 - y0)) * ph; };

  std::ostringstream o;
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fixed(L + pw / 2) << "\" y=\"22\" text-anchor=\"middle\" font-size=\"14\">" << escape(spec.title)
    << "</text>\n";
  o << "<rect x=\"" << fixed(L) << "\" y=\"" << fixed(T) << "\" width=\"" << fixed(pw) << "\" height=\"" << fixed(ph)
    << "\" fill=\"none\" stroke=\"black\"/>\n";

  const int xt = 6;
  for (int k = 0; k <= xt; ++k) {
    const double x = x0 + (x1 - x0) * k / xt;
    o << "<line x1=\"" << fixed(px(x)) << "\" y1=\"" << fixed(T + ph) << "\" x2=\"" << fixed(px(x)) << "\" y2=\""
      << fixed(T + ph + 5) << "\" stroke=\"black\"/>";
    o << "<text x=\"" << fixed(px(x)) << "\" y=\"" << fixed(T + ph + 18) << "\" text-anchor=\"middle\">" << fixed(x, 2)
      << "</text>\n";
  }
  if (spec.log_y) {
    const int step = std::max(1, static_cast<int>(std::ceil((y1 - y0) / 8)));
    for (int e = static_cast<int>(y0); e <= static_cast<int>(y1); e += step) {
      const double yy = T + (1.0 - (e - y0) / (y1 - y0)) * ph;
      o << "<line x1=\"" << fixed(L - 5) << "\" y1=\"" << fixed(yy) << "\" x2=\"" << fixed(L + pw) << "\" y2=\""
        << fixed(yy) << "\" stroke=\"#dddddd\"/>";
      o << "<text x=\"" << fixed(L - 8) << "\" y=\"" << fixed(yy + 4) << "\" text-anchor=\"end\">1e" << e << "</text>\n";
    }
  } else {
    const int yt = 5;
    for (int k = 0; k <= yt; ++k) {
      const double y = y0 + (y1 - y0) * k / yt;
      const double yy = T + (1.0 - static_cast<double>(k) / yt) * ph;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3g", y);
      o << "<line x1=\"" << fixed(L - 5) << "\" y1=\"" << fixed(yy) << "\" x2=\"" << fixed(L + pw) << "\" y2=\""
        << fixed(yy) << "\" stroke=\"#dddddd\"/>";
      o << "<text x=\"" << fixed(L - 8) << "\" y=\"" << fixed(yy + 4) << "\" text-anchor=\"end\">" << buf << "</text>\n";
    }
  }
  o << "<text x=\"" << fixed(L + pw / 2) << "\" y=\"" << fixed(H - 10) << "\" text-anchor=\"middle\">"
    << escape(spec.x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << fixed(T + ph / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fixed(T + ph / 2) << ")\">" << escape(spec.y_label) << "</text>\n";

  for (std::size_t k = 0; k < spec.series.size(); ++k) {
    const auto& s = spec.series[k];
    const char* color = colors[k % 7];
    const std::size_t stride = std::max<std::size_t>(1, s.x.size() / 1500);
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    bool first = true;
    for (std::size_t i = 0; i < s.x.size(); i += stride) {
      if (!std::isfinite(s.y[i]) || (spec.log_y && s.y[i] <= 0.0)) continue;
      o << (first ? "" : " ") << fixed(px(s.x[i])) << "," << fixed(py(s.y[i]));
      first = false;
    }
    o << "\"/>\n";
    const double ly = T + 14 + 18.0 * static_cast<double>(k);
    o << "<line x1=\"" << fixed(L + pw + 12) << "\" y1=\"" << fixed(ly - 4) << "\" x2=\"" << fixed(L + pw + 32)
      << "\" y2=\"" << fixed(ly - 4) << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>";
    o << "<text x=\"" << fixed(L + pw + 38) << "\" y=\"" << fixed(ly) << "\">" << escape(s.name) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

void write_text(const std::filesystem::path& file, const std::string& text) {
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

void write_trajectory_plots(const std::filesystem::path& dir, const Trajectory& tr) {
  auto column = [&](auto get) {
    std::vector<double> v;
    v.reserve(tr.size());
    for (std::size_t r = 0; r < tr.size(); ++r) v.push_back(get(r));
    return v;
  };
  PlotSpec chi{"chi norms", "t", "norm", true, {}};
  chi.series.push_back({"state", tr.t, tr.chi_state});
  if (std::any_of(tr.chi_error.begin(), tr.chi_error.end(), [](double e) { return e != 0.0; }))
    chi.series.push_back({"estimation error", tr.t, tr.chi_error});
  write_text(dir / "chi_norms.svg", render_svg(chi));

  PlotSpec ctl{"control input", "t", "U", false, {}};
  for (int i = 0; i < tr.n; ++i)
    ctl.series.push_back({"U_" + std::to_string(i + 1), tr.t, column([&](std::size_t r) { return tr.U[r](i); })});
  write_text(dir / "control.svg", render_svg(ctl));

  PlotSpec bnd{"boundary traces", "t", "value", false, {}};
  const int S = static_cast<int>(tr.stations.size());
  for (int i = 0; i < tr.n; ++i)
    bnd.series.push_back({"u" + std::to_string(i + 1) + "(t,1)", tr.t, column([&](std::size_t r) { return tr.y[r](i); })});
  auto station = [&](double x) {
    for (int k = 0; k < S; ++k)
      if (tr.stations[k] == x) return k;
    return -1;
  };
  if (const int k0 = station(0.0); k0 >= 0) {
    for (int i = 0; i < tr.n; ++i)
      bnd.series.push_back(
          {"u" + std::to_string(i + 1) + "(t,0)", tr.t, column([&](std::size_t r) { return tr.u_st[r](i * S + k0); })});
    for (int j = 0; j < tr.m; ++j)
      bnd.series.push_back(
          {"v" + std::to_string(j + 1) + "(t,0)", tr.t, column([&](std::size_t r) { return tr.v_st[r](j * S + k0); })});
  }
  write_text(dir / "boundary.svg", render_svg(bnd));
}

}  // namespace hyperstab
