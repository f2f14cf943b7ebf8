#include "hyperstab/model.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

namespace hyperstab {

Vector PlantModel::speeds() const {
  Vector s(n + m);
  s << lambda, -mu;
  return s;
}

Matrix PlantModel::sigma(double x) const {
  Matrix s(n + m, n + m);
  s << sigma_pp.at(x), sigma_pm.at(x), sigma_mp.at(x), sigma_mm.at(x);
  return s;
}

double PlantModel::tau() const { return 1.0 / lambda(0) + 1.0 / mu(0); }

namespace {

void check_shape(std::vector<std::string>& out, const Matrix& mat, int rows, int cols, const char* name) {
  if (mat.rows() != rows || mat.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << mat.rows() << "x" << mat.cols() << ", expected " << rows << "x" << cols;
    out.push_back(os.str());
  } else if (!mat.allFinite()) {
    out.push_back(std::string(name) + " has non-finite entries");
  }
}

void check_sigma(std::vector<std::string>& out, const SampledFunction& f, int rows, int cols, const char* name,
                 bool zero_diagonal) {
  if (f.size() < 2) {
    out.push_back(std::string(name) + " is not sampled");
    return;
  }
  if (f.rows() != rows || f.cols() != cols) {
    std::ostringstream os;
    os << name << " has shape " << f.rows() << "x" << f.cols() << ", expected " << rows << "x" << cols;
    out.push_back(os.str());
    return;
  }
  if (std::abs(f.lower()) > 1e-12 || std::abs(f.upper() - 1.0) > 1e-12)
    out.push_back(std::string(name) + " is not sampled on [0,1]");
  if (zero_diagonal) {
    for (const auto& v : f.values()) {
      if (v.diagonal().cwiseAbs().maxCoeff() > 0.0) {
        out.push_back(std::string("nonzero diagonal in ") + name);
        break;
      }
    }
  }
}

}  // namespace

std::vector<std::string> validate(const PlantModel& md) {
  std::vector<std::string> out;
  if (md.n < 1 || md.m < 1 || md.p < 1 || md.q < 1) {
    out.push_back("dimensions n, m, p, q must be positive");
    return out;
  }
  if (md.lambda.size() != md.n) out.push_back("lambda must have n entries");
  if (md.mu.size() != md.m) out.push_back("mu must have m entries");
  if (!out.empty()) return out;

  bool ordered = md.lambda(0) > 0 && md.mu(0) > 0;
  for (int i = 1; i < md.n; ++i) ordered = ordered && md.lambda(i) > md.lambda(i - 1);
  for (int i = 1; i < md.m; ++i) ordered = ordered && md.mu(i) > md.mu(i - 1);
  if (!ordered) out.push_back("velocity ordering violated");

  check_sigma(out, md.sigma_pp, md.n, md.n, "Sigma_pp", true);
  check_sigma(out, md.sigma_pm, md.n, md.m, "Sigma_pm", false);
  check_sigma(out, md.sigma_mp, md.m, md.n, "Sigma_mp", false);
  check_sigma(out, md.sigma_mm, md.m, md.m, "Sigma_mm", true);
  check_shape(out, md.A0, md.p, md.p, "A0");
  check_shape(out, md.E0, md.p, md.m, "E0");
  check_shape(out, md.C0, md.n, md.p, "C0");
  check_shape(out, md.A1, md.q, md.q, "A1");
  check_shape(out, md.E1, md.q, md.n, "E1");
  check_shape(out, md.C1, md.m, md.q, "C1");
  check_shape(out, md.R, md.m, md.n, "R");
  check_shape(out, md.Q, md.n, md.m, "Q");
  return out;
}

PlantState PlantState::zeros(const PlantModel& md, const std::vector<double>& grid) {
  const int nodes = static_cast<int>(grid.size());
  return {grid, Vector::Zero(md.p), Matrix::Zero(nodes, md.n), Matrix::Zero(nodes, md.m), Vector::Zero(md.q)};
}

Vector PlantState::flatten() const {
  const Eigen::Index nodes = static_cast<Eigen::Index>(grid.size());
  Vector f(X0.size() + nodes * (u.cols() + v.cols()) + X1.size());
  Eigen::Index k = 0;
  f.segment(k, X0.size()) = X0;
  k += X0.size();
  for (Eigen::Index a = 0; a < nodes; ++a)
    for (Eigen::Index i = 0; i < u.cols(); ++i) f(k++) = u(a, i);
  for (Eigen::Index a = 0; a < nodes; ++a)
    for (Eigen::Index i = 0; i < v.cols(); ++i) f(k++) = v(a, i);
  f.segment(k, X1.size()) = X1;
  return f;
}

PlantState PlantState::unflatten(const Vector& f, const std::vector<double>& grid, int n, int m, int p, int q) {
  const int nodes = static_cast<int>(grid.size());
  if (f.size() != p + nodes * (n + m) + q) throw DimensionError("PlantState::unflatten: size mismatch");
  PlantState s{grid, f.head(p), Matrix(nodes, n), Matrix(nodes, m), f.tail(q)};
  Eigen::Index k = p;
  for (int a = 0; a < nodes; ++a)
    for (int i = 0; i < n; ++i) s.u(a, i) = f(k++);
  for (int a = 0; a < nodes; ++a)
    for (int i = 0; i < m; ++i) s.v(a, i) = f(k++);
  return s;
}

double chi_norm(const PlantState& s) {
  const auto w = trapezoid_weights(s.grid);
  double total = s.X0.squaredNorm() + s.X1.squaredNorm();
  for (std::size_t a = 0; a < w.size(); ++a) {
    if (s.u.size() > 0) total += w[a] * s.u.row(a).squaredNorm();
    if (s.v.size() > 0) total += w[a] * s.v.row(a).squaredNorm();
  }
  return std::sqrt(total);
}

Assumption1Report check_assumption1(const PlantModel& md, int theta_grid_points, std::uint64_t seed) {
  if (theta_grid_points < 8) throw std::invalid_argument("check_assumption1: theta_grid_points must be >= 8");
  const int n = md.n, m = md.m;
  const int phases = n * m;
  Assumption1Report rep;
  rep.norm_bound = md.Q.operatorNorm() * md.R.operatorNorm();

  // Entry (i, l) = sum_k Q_ik R_kl e^{j theta_kl}; theta indexed k * n + l.
  std::vector<double> theta(phases, 0.0);
  auto radius = [&]() {
    Eigen::MatrixXcd mat = Eigen::MatrixXcd::Zero(n, n);
    for (int k = 0; k < m; ++k)
      for (int l = 0; l < n; ++l) {
        const Complex ph = std::polar(1.0, theta[k * n + l]);
        for (int i = 0; i < n; ++i) mat(i, l) += md.Q(i, k) * md.R(k, l) * ph;
      }
    return spectral_radius(mat);
  };

  double sup = 0.0;
  if (phases <= 8) {
    std::vector<int> idx(phases, 0);
    const double step = 2.0 * std::numbers::pi / theta_grid_points;
    while (true) {
      for (int k = 0; k < phases; ++k) theta[k] = step * idx[k];
      sup = std::max(sup, radius());
      ++rep.samples;
      int k = 0;
      while (k < phases && ++idx[k] == theta_grid_points) idx[k++] = 0;
      if (k == phases) break;
    }
  } else {
    rep.grid_refused = true;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(0.0, 2.0 * std::numbers::pi);
  for (int s = 0; s < 1000; ++s) {
    for (auto& t : theta) t = dist(rng);
    sup = std::max(sup, radius());
    ++rep.samples;
  }
  rep.sup_radius = sup;
  rep.pass = sup < 1.0 - 1e-6;
  return rep;
}

// ---------------------------------------------------------------------------
// JSON

Matrix matrix_from_json(const nlohmann::json& j, int rows, int cols, const std::string& name) {
  Matrix out(rows, cols);
  if (j.is_number()) {
    if (rows != 1 || cols != 1) throw std::invalid_argument(name + ": scalar given for non-scalar matrix");
    out(0, 0) = j.get<double>();
    return out;
  }
  if (!j.is_array()) throw std::invalid_argument(name + ": expected an array");
  if (!j.empty() && j[0].is_array()) {
    if (static_cast<int>(j.size()) != rows) throw std::invalid_argument(name + ": wrong row count");
    for (int r = 0; r < rows; ++r) {
      if (static_cast<int>(j[r].size()) != cols) throw std::invalid_argument(name + ": wrong column count");
      for (int c = 0; c < cols; ++c) out(r, c) = j[r][c].get<double>();
    }
    return out;
  }
  if (static_cast<int>(j.size()) != rows * cols) throw std::invalid_argument(name + ": wrong entry count");
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) out(r, c) = j[r * cols + c].get<double>();
  return out;
}

nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

namespace {

SampledFunction sigma_from_json(const nlohmann::json& doc, const char* key, int rows, int cols) {
  const std::vector<double> unit{0.0, 1.0};
  if (!doc.contains(key)) return SampledFunction::zeros(unit, rows, cols);
  const auto& j = doc.at(key);
  if (j.is_string()) {
    if (j.get<std::string>() != "zero") throw std::invalid_argument(std::string(key) + ": unknown keyword");
    return SampledFunction::zeros(unit, rows, cols);
  }
  if (j.is_object()) {
    const auto grid = j.at("grid").get<std::vector<double>>();
    const auto& vals = j.at("values");
    if (vals.size() != grid.size()) throw std::invalid_argument(std::string(key) + ": grid/values size mismatch");
    std::vector<Matrix> v;
    for (const auto& e : vals) v.push_back(matrix_from_json(e, rows, cols, key));
    return {grid, std::move(v)};
  }
  return SampledFunction::constant(unit, matrix_from_json(j, rows, cols, key));
}

nlohmann::json sigma_to_json(const SampledFunction& f) {
  if (f.sup_norm() == 0.0) return "zero";
  bool constant = true;
  for (const auto& v : f.values()) constant = constant && v == f[0];
  if (constant) return matrix_to_json(f[0]);
  nlohmann::json vals = nlohmann::json::array();
  for (const auto& v : f.values()) vals.push_back(matrix_to_json(v));
  return {{"grid", f.grid()}, {"values", vals}};
}

Vector vector_from_json(const nlohmann::json& j, const char* name) {
  const auto v = j.at(name).get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PlantModel model_from_json(const nlohmann::json& doc) {
  if (doc.contains("schema") && doc.at("schema").get<std::string>() != kModelSchema)
    throw std::invalid_argument("unsupported model schema " + doc.at("schema").get<std::string>());
  PlantModel md;
  md.n = doc.at("n").get<int>();
  md.m = doc.at("m").get<int>();
  md.p = doc.at("p").get<int>();
  md.q = doc.at("q").get<int>();
  if (md.n < 1 || md.m < 1 || md.p < 1 || md.q < 1) throw std::invalid_argument("dimensions must be positive");
  md.lambda = vector_from_json(doc, "lambda");
  md.mu = vector_from_json(doc, "mu");
  md.sigma_pp = sigma_from_json(doc, "Sigma_pp", md.n, md.n);
  md.sigma_pm = sigma_from_json(doc, "Sigma_pm", md.n, md.m);
  md.sigma_mp = sigma_from_json(doc, "Sigma_mp", md.m, md.n);
  md.sigma_mm = sigma_from_json(doc, "Sigma_mm", md.m, md.m);
  md.A0 = matrix_from_json(doc.at("A0"), md.p, md.p, "A0");
  md.E0 = matrix_from_json(doc.at("E0"), md.p, md.m, "E0");
  md.C0 = matrix_from_json(doc.at("C0"), md.n, md.p, "C0");
  md.A1 = matrix_from_json(doc.at("A1"), md.q, md.q, "A1");
  md.E1 = matrix_from_json(doc.at("E1"), md.q, md.n, "E1");
  md.C1 = matrix_from_json(doc.at("C1"), md.m, md.q, "C1");
  md.R = matrix_from_json(doc.at("R"), md.m, md.n, "R");
  md.Q = matrix_from_json(doc.at("Q"), md.n, md.m, "Q");
  return md;
}

nlohmann::json model_to_json(const PlantModel& md) {
  nlohmann::json j;
  j["schema"] = kModelSchema;
  j["n"] = md.n;
  j["m"] = md.m;
  j["p"] = md.p;
  j["q"] = md.q;
  j["lambda"] = std::vector<double>(md.lambda.data(), md.lambda.data() + md.lambda.size());
  j["mu"] = std::vector<double>(md.mu.data(), md.mu.data() + md.mu.size());
  j["Sigma_pp"] = sigma_to_json(md.sigma_pp);
  j["Sigma_pm"] = sigma_to_json(md.sigma_pm);
  j["Sigma_mp"] = sigma_to_json(md.sigma_mp);
  j["Sigma_mm"] = sigma_to_json(md.sigma_mm);
  j["A0"] = matrix_to_json(md.A0);
  j["E0"] = matrix_to_json(md.E0);
  j["C0"] = matrix_to_json(md.C0);
  j["A1"] = matrix_to_json(md.A1);
  j["E1"] = matrix_to_json(md.E1);
  j["C1"] = matrix_to_json(md.C1);
  j["R"] = matrix_to_json(md.R);
  j["Q"] = matrix_to_json(md.Q);
  return j;
}

}  // namespace hyperstab
