#include <bit>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>
#include <thread>

#include "hyperstab/kernels.hpp"

namespace hyperstab {

namespace {

void check_grid(const PlantState& s, int N, const char* what) {
  if (s.nodes() != N) throw DimensionError(std::string(what) + ": state grid does not match kernel grid");
}

double weight(int b, int lo, int hi, double h) {
  if (hi <= lo) return 0.0;
  return (b == lo || b == hi) ? 0.5 * h : h;
}

// Stacked PDE values w(b) = [alpha(b); beta(b)].
Vector stacked(const PlantState& s, int b) {
  Vector w(s.u.cols() + s.v.cols());
  w << s.u.row(b).transpose(), s.v.row(b).transpose();
  return w;
}

}  // namespace

PlantState apply_T(const PlantModel& md, const KernelSetObserver& ks, const PlantState& t) {
  const int N = ks.grid.N, n = md.n;
  check_grid(t, N, "apply_T");
  const double h = ks.grid.h;
  PlantState out = t;
  std::vector<Vector> w(N);
  for (int b = 0; b < N; ++b) w[b] = stacked(t, b);
  out.X0 = t.X0;
  for (int b = 0; b < N; ++b) {
    const double wb = weight(b, 0, N - 1, h);
    out.X0 -= wb * (ks.L1[b] * t.u.row(b).transpose() + ks.L2[b] * t.v.row(b).transpose());
  }
  for (int a = 0; a < N; ++a) {
    Vector acc = w[a] + ks.gamma[a] * t.X1;
    for (int b = a; b < N; ++b) acc -= weight(b, a, N - 1, h) * ks.L.at(a, b) * w[b];
    out.u.row(a) = acc.head(n).transpose();
    out.v.row(a) = acc.tail(md.m).transpose();
  }
  return out;
}

PlantState invert_T(const PlantModel& md, const KernelSetObserver& ks, const PlantState& phys,
                    const VolterraOptions& options) {
  const int N = ks.grid.N, n = md.n, m = md.m;
  check_grid(phys, N, "invert_T");
  SampledFunction f = SampledFunction::zeros(ks.grid.x, n + m, 1);
  for (int a = 0; a < N; ++a) f[a] = stacked(phys, a) - ks.gamma[a] * phys.X1;
  const SampledFunction w = volterra2_solve(ks.L, f, VolterraBound::Upper, options);
  PlantState out = phys;
  for (int a = 0; a < N; ++a) {
    out.u.row(a) = w[a].topRows(n).transpose();
    out.v.row(a) = w[a].bottomRows(m).transpose();
  }
  out.X0 = phys.X0;
  for (int b = 0; b < N; ++b) {
    const double wb = weight(b, 0, N - 1, ks.grid.h);
    out.X0 += wb * (ks.L1[b] * out.u.row(b).transpose() + ks.L2[b] * out.v.row(b).transpose());
  }
  return out;
}

PlantState apply_T1(const KernelSetControl& kc, const PlantState& bar) {
  const int N = kc.grid.N;
  check_grid(bar, N, "apply_T1");
  const double h = kc.grid.h;
  const auto wf = trapezoid_weights(kc.grid.x);
  Matrix check(N, kc.n);
  for (int a = 0; a < N; ++a) {
    Vector acc = bar.u.row(a).transpose();
    for (int b = 0; b < N; ++b) acc -= wf[b] * kc.L_bar.at(a, b) * bar.u.row(b).transpose();
    check.row(a) = acc.transpose();
  }
  PlantState out = bar;
  for (int a = 0; a < N; ++a) {
    Vector acc = check.row(a).transpose();
    for (int b = a; b < N; ++b) acc -= weight(b, a, N - 1, h) * kc.L_check.at(a, b) * check.row(b).transpose();
    out.u.row(a) = acc.transpose();
  }
  return out;
}

PlantState invert_T1(const KernelSetControl& kc, const PlantState& s, const VolterraOptions& options) {
  const int N = kc.grid.N, n = kc.n;
  check_grid(s, N, "invert_T1");
  SampledFunction f = SampledFunction::zeros(kc.grid.x, n, 1);
  for (int a = 0; a < N; ++a) f[a] = s.u.row(a).transpose();
  const SampledFunction check = volterra2_solve(kc.L_check, f, VolterraBound::Upper, options);
  // alpha_bar = check + int L_bar alpha_bar; L_bar strictly upper so n passes are exact.
  const auto wf = trapezoid_weights(kc.grid.x);
  std::vector<Vector> bar(N);
  for (int a = 0; a < N; ++a) bar[a] = check[a];
  for (int pass = 0; pass < n; ++pass) {
    std::vector<Vector> next(N);
    for (int a = 0; a < N; ++a) {
      next[a] = check[a];
      for (int b = 0; b < N; ++b) next[a] += wf[b] * kc.L_bar.at(a, b) * bar[b];
    }
    bar = std::move(next);
  }
  PlantState out = s;
  for (int a = 0; a < N; ++a) out.u.row(a) = bar[a].transpose();
  return out;
}

TransformOperators build_transform_operators(const PlantModel& md, const KernelSetObserver& ks,
                                             const KernelSetControl& kc) {
  const int N = ks.grid.N, n = md.n, m = md.m, p = md.p, q = md.q;
  const int d = n + m;
  const int size = p + N * d + q;
  const double h = ks.grid.h;
  auto pde = [&](int a, int c) { return c < n ? p + a * n + c : p + N * n + a * m + (c - n); };
  const int x1 = p + N * d;

  TransformOperators ops;
  ops.T = Matrix::Identity(size, size);
  for (int b = 0; b < N; ++b) {
    const double wb = weight(b, 0, N - 1, h);
    for (int c = 0; c < d; ++c) {
      const Vector col = c < n ? Vector(ks.L1[b].col(c)) : Vector(ks.L2[b].col(c - n));
      ops.T.block(0, pde(b, c), p, 1) -= wb * col;
    }
  }
  for (int a = 0; a < N; ++a) {
    for (int r = 0; r < d; ++r) {
      const int row = pde(a, r);
      for (int k = 0; k < q; ++k) ops.T(row, x1 + k) += ks.gamma[a](r, k);
      for (int b = a; b < N; ++b) {
        const double wb = weight(b, a, N - 1, h);
        if (wb == 0.0) continue;
        const auto l = ks.L.at(a, b);
        for (int c = 0; c < d; ++c) ops.T(row, pde(b, c)) -= wb * l(r, c);
      }
    }
  }
  ops.T_inv = ops.T.partialPivLu().inverse();

  const auto wf = trapezoid_weights(kc.grid.x);
  Matrix mcheck = Matrix::Identity(N * n, N * n);
  Matrix mbar = Matrix::Identity(N * n, N * n);
  for (int a = 0; a < N; ++a)
    for (int b = 0; b < N; ++b) {
      const double wc = b >= a ? weight(b, a, N - 1, h) : 0.0;
      if (wc != 0.0) mcheck.block(a * n, b * n, n, n) -= wc * kc.L_check.at(a, b);
      mbar.block(a * n, b * n, n, n) -= wf[b] * kc.L_bar.at(a, b);
    }
  ops.T1 = Matrix::Identity(size, size);
  ops.T1.block(p, p, N * n, N * n) = mcheck * mbar;
  ops.T1_inv = ops.T1.partialPivLu().inverse();
  return ops;
}

// ---------------------------------------------------------------------------

namespace {

void write_kernel_csv(const NodeKernel& k, const TriGrid& g, bool upper_only, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(12) << "x,nu";
  for (int r = 0; r < k.dim(); ++r)
    for (int c = 0; c < k.dim(); ++c) os << ",K" << r + 1 << '_' << c + 1;
  os << '\n';
  for (int a = 0; a < g.N; ++a)
    for (int b = upper_only ? a : 0; b < g.N; ++b) {
      os << g.x[a] << ',' << g.x[b];
      const auto v = k.at(a, b);
      for (int r = 0; r < k.dim(); ++r)
        for (int c = 0; c < k.dim(); ++c) os << ',' << v(r, c);
      os << '\n';
    }
}

void write_function_csv(const SampledFunction& f, const std::filesystem::path& file) {
  std::ofstream os(file);
  if (!os) throw std::runtime_error("cannot write " + file.string());
  os << std::setprecision(12) << 'x';
  for (int r = 0; r < f.rows(); ++r)
    for (int c = 0; c < f.cols(); ++c) os << ",F" << r + 1 << '_' << c + 1;
  os << '\n';
  for (std::size_t a = 0; a < f.size(); ++a) {
    os << f.grid()[a];
    for (int r = 0; r < f.rows(); ++r)
      for (int c = 0; c < f.cols(); ++c) os << ',' << f[a](r, c);
    os << '\n';
  }
}

}  // namespace

void export_kernels_csv(const KernelSetObserver& ks, const KernelSetControl& kc, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_kernel_csv(ks.L, ks.grid, true, dir / "L.csv");
  write_function_csv(ks.gamma, dir / "gamma.csv");
  write_function_csv(ks.L1, dir / "L1.csv");
  write_function_csv(ks.L2, dir / "L2.csv");
  write_kernel_csv(kc.L_check, kc.grid, true, dir / "L_check.csv");
  write_kernel_csv(kc.L_bar, kc.grid, false, dir / "L_bar.csv");
  write_function_csv(kc.G_check, dir / "G_check.csv");
  write_function_csv(kc.G5, dir / "G5.csv");
  write_function_csv(kc.F_alpha_bar, dir / "F_alpha_bar.csv");
}

// Binary cache ------------------------------------------------------------------

namespace {

constexpr std::uint32_t kCacheVersion = 3;

class BinWriter {
 public:
  explicit BinWriter(const std::filesystem::path& p) : os_(p, std::ios::binary) {}
  bool ok() const { return static_cast<bool>(os_); }
  void scalar(double v) { os_.write(reinterpret_cast<const char*>(&v), sizeof v); }
  void matrix(const Matrix& m) {
    scalar(static_cast<double>(m.rows()));
    scalar(static_cast<double>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) scalar(m(r, c));
  }
  void function(const SampledFunction& f) {
    scalar(static_cast<double>(f.size()));
    for (std::size_t a = 0; a < f.size(); ++a) matrix(f[a]);
  }
  void kernel(const NodeKernel& k) {
    scalar(k.points());
    scalar(k.dim());
    for (int a = 0; a < k.points(); ++a)
      for (int b = 0; b < k.points(); ++b) matrix(k.at(a, b));
  }

 private:
  std::ofstream os_;
};

class BinReader {
 public:
  explicit BinReader(const std::filesystem::path& p) : is_(p, std::ios::binary) {}
  bool ok() const { return static_cast<bool>(is_); }
  double scalar() {
    double v = 0;
    is_.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is_) throw std::runtime_error("truncated kernel cache");
    return v;
  }
  Matrix matrix() {
    const int r = static_cast<int>(scalar()), c = static_cast<int>(scalar());
    Matrix m(r, c);
    for (int j = 0; j < c; ++j)
      for (int i = 0; i < r; ++i) m(i, j) = scalar();
    return m;
  }
  SampledFunction function(const std::vector<double>& grid) {
    const auto n = static_cast<std::size_t>(scalar());
    if (n != grid.size()) throw std::runtime_error("kernel cache grid mismatch");
    std::vector<Matrix> v(n);
    for (auto& m : v) m = matrix();
    return {grid, std::move(v)};
  }
  NodeKernel kernel() {
    const int pts = static_cast<int>(scalar()), dim = static_cast<int>(scalar());
    NodeKernel k(pts, dim);
    for (int a = 0; a < pts; ++a)
      for (int b = 0; b < pts; ++b) k.at(a, b) = matrix();
    return k;
  }

 private:
  std::ifstream is_;
};

void save_bundle(const KernelBundle& kb, const std::filesystem::path& file) {
  BinWriter w(file);
  if (!w.ok()) return;
  w.scalar(kCacheVersion);
  w.kernel(kb.observer.L);
  w.function(kb.observer.gamma);
  w.function(kb.observer.L1);
  w.function(kb.observer.L2);
  const auto& c = kb.couplings;
  w.function(c.G1);
  w.function(c.G2);
  w.matrix(c.G3);
  w.matrix(c.G4);
  w.function(c.F_alpha);
  w.function(c.F_beta);
  w.matrix(c.K_X);
  w.kernel(kb.control.L_check);
  w.function(kb.control.G_check);
  w.kernel(kb.control.L_bar);
  w.function(kb.control.G5);
  w.function(kb.control.F_alpha_bar);
}

std::optional<KernelBundle> load_bundle(const PlantModel& md, int N, const std::filesystem::path& file) {
  BinReader r(file);
  if (!r.ok()) return std::nullopt;
  try {
    if (r.scalar() != kCacheVersion) return std::nullopt;
    const TriGrid g(N);
    KernelBundle kb;
    kb.observer.grid = g;
    kb.observer.n = md.n;
    kb.observer.m = md.m;
    kb.observer.L = r.kernel();
    kb.observer.gamma = r.function(g.x);
    kb.observer.L1 = r.function(g.x);
    kb.observer.L2 = r.function(g.x);
    auto& c = kb.couplings;
    c.G1 = r.function(g.x);
    c.G2 = r.function(g.x);
    c.G3 = r.matrix();
    c.G4 = r.matrix();
    c.F_alpha = r.function(g.x);
    c.F_beta = r.function(g.x);
    c.K_X = r.matrix();
    kb.control.grid = g;
    kb.control.n = md.n;
    kb.control.L_check = r.kernel();
    kb.control.G_check = r.function(g.x);
    kb.control.L_bar = r.kernel();
    kb.control.G5 = r.function(g.x);
    kb.control.F_alpha_bar = r.function(g.x);
    if (kb.observer.L.points() != N || kb.observer.L.dim() != md.n + md.m) return std::nullopt;
    return kb;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string kernel_cache_key(const PlantModel& md, int N) {
  const std::string text = model_to_json(md).dump() + "|N=" + std::to_string(N) + "|v" + std::to_string(kCacheVersion);
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << std::hash<std::string>{}(text);
  return os.str();
}

KernelBundle solve_all_kernels(const PlantModel& md, int N, const std::filesystem::path& cache_dir,
                               const KernelOptions& options, bool* cache_hit) {
  if (cache_hit) *cache_hit = false;
  std::filesystem::path file;
  if (!cache_dir.empty()) {
    file = cache_dir / ("kernels-" + kernel_cache_key(md, N) + ".bin");
    if (std::filesystem::exists(file)) {
      if (auto kb = load_bundle(md, N, file)) {
        if (cache_hit) *cache_hit = true;
        return std::move(*kb);
      }
    }
  }
  const TriGrid g(N);
  KernelBundle kb;
  kb.observer = solve_observer_kernels(md, g, options);
  kb.couplings = solve_coupling_terms(md, kb.observer);
  kb.control = solve_control_kernels(kb.couplings.G1, md, g, kb.couplings);
  if (!file.empty()) {
    std::filesystem::create_directories(cache_dir);
    std::ostringstream tag;
    tag << ".tmp-" << std::this_thread::get_id();
    const std::filesystem::path tmp = file.string() + tag.str();
    save_bundle(kb, tmp);
    std::error_code ec;
    std::filesystem::rename(tmp, file, ec);
    if (ec) std::filesystem::remove(tmp, ec);
  }
  return kb;
}

}  // namespace hyperstab
