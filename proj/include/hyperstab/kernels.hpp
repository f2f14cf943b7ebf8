#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "hyperstab/model.hpp"
#include "hyperstab/numerics.hpp"

namespace hyperstab {

/// Uniform grid on [0,1] shared by kernels, couplings and the PDE states.
/// Kernels defined on {x <= nu} are stored on the full N x N node square.
struct TriGrid {
  int N = 0;
  double h = 0.0;
  std::vector<double> x;

  explicit TriGrid(int points);
  TriGrid() = default;
};

struct KernelOptions {
  double tolerance = 1e-9;
  int max_sweeps = 300;
  Exec exec = Exec::Parallel;
};

/// Kernels of the transform that moves the in-domain couplings to the
/// actuated boundary.
struct KernelSetObserver {
  TriGrid grid;
  int n = 0, m = 0;
  NodeKernel L;            ///< (n+m)x(n+m) blocks [Laa Lab; Lba Lbb] at (x, nu), x <= nu.
  SampledFunction gamma;   ///< (n+m) x q, stacked [gamma_alpha; gamma_beta].
  SampledFunction L1;      ///< p x n
  SampledFunction L2;      ///< p x m
  std::vector<double> sweep_changes;

  Matrix block(int a, int b, int row0, int rows, int col0, int cols) const {
    return L.at(a, b).block(row0, col0, rows, cols);
  }
};

struct CouplingFunctions {
  SampledFunction G1;       ///< n x n, coefficient of alpha(t,1) in the alpha equation
  SampledFunction G2;       ///< m x n, coefficient of alpha(t,1) in the beta equation
  Matrix G3;                ///< p x n
  Matrix G4;                ///< p x q
  SampledFunction F_alpha;  ///< n x n, strictly lower triangular
  SampledFunction F_beta;   ///< n x m
  Matrix K_X;               ///< n x q, Q gamma_beta(0) - gamma_alpha(0)
};

/// Kernels of the second pair of transforms (Volterra with L_check, then the
/// strictly upper-triangular L_bar on the full square).
struct KernelSetControl {
  TriGrid grid;
  int n = 0;
  NodeKernel L_check;        ///< lower triangular, x <= y
  SampledFunction G_check;   ///< strictly upper triangular
  NodeKernel L_bar;          ///< strictly upper triangular, full square
  SampledFunction G5;
  SampledFunction F_alpha_bar;
};

KernelSetObserver solve_observer_kernels(const PlantModel& model, const TriGrid& grid,
                                         const KernelOptions& options = {});

CouplingFunctions solve_coupling_terms(const PlantModel& model, const KernelSetObserver& kernels);

KernelSetControl solve_control_kernels(const SampledFunction& G1, const PlantModel& model, const TriGrid& grid,
                                       const CouplingFunctions& couplings);

/// max_x || Lambda L(x,x) - L(x,x) Lambda - Sigma(x) ||, diagonal entries of
/// equal-speed pairs excluded. At the corner (0,0) the upper alpha-alpha
/// entries take the x = 0 closure value instead and are skipped.
double jump_condition_residual(const PlantModel& model, const KernelSetObserver& kernels);

/// Residual of the G1/G2 Volterra system with every quantity interpolated
/// onto a finer grid (factor `refine`).
double coupling_residual(const PlantModel& model, const KernelSetObserver& kernels,
                         const CouplingFunctions& couplings, int refine = 2);

/// Residual of the G_check Volterra equation on a finer grid.
double control_kernel_residual(const KernelSetControl& control, const SampledFunction& G1, int refine = 2);

/// Linear interpolation of a node kernel at (x, nu) with x <= nu
/// (triangulated cells, never reads nodes below the diagonal).
Matrix interpolate_upper(const NodeKernel& kernel, const TriGrid& grid, double x, double nu);
/// Bilinear interpolation on the full square.
Matrix interpolate_square(const NodeKernel& kernel, const TriGrid& grid, double x, double y);

// Transforms ----------------------------------------------------------------

/// (X0, u, v, X1) = T(xi, alpha, beta, X1) by trapezoid quadrature.
PlantState apply_T(const PlantModel& model, const KernelSetObserver& kernels, const PlantState& target);
/// Inverse of apply_T: Volterra solves for the PDE part, then the ODE part.
PlantState invert_T(const PlantModel& model, const KernelSetObserver& kernels, const PlantState& physical,
                    const VolterraOptions& options = {});
/// alpha from alpha_bar (both transforms of the second pair); xi, beta, X1 pass through.
PlantState apply_T1(const KernelSetControl& control, const PlantState& bar_state);
/// alpha_bar from alpha.
PlantState invert_T1(const KernelSetControl& control, const PlantState& state, const VolterraOptions& options = {});

/// Dense matrices of the discrete transforms on the flattened state layout.
struct TransformOperators {
  Matrix T;       ///< physical = T * target
  Matrix T_inv;   ///< target = T_inv * physical
  Matrix T1;      ///< target = T1 * bar
  Matrix T1_inv;  ///< bar = T1_inv * target
};
TransformOperators build_transform_operators(const PlantModel& model, const KernelSetObserver& kernels,
                                             const KernelSetControl& control);

// Export / cache --------------------------------------------------------------

/// One CSV per kernel block: columns x, nu, then entries row-major.
void export_kernels_csv(const KernelSetObserver& kernels, const KernelSetControl& control,
                        const std::filesystem::path& dir);

struct KernelBundle {
  KernelSetObserver observer;
  CouplingFunctions couplings;
  KernelSetControl control;
};

/// Solve all kernels, reusing a binary cache keyed by (model JSON, N) when
/// `cache_dir` is non-empty.
KernelBundle solve_all_kernels(const PlantModel& model, int N, const std::filesystem::path& cache_dir,
                               const KernelOptions& options = {}, bool* cache_hit = nullptr);
std::string kernel_cache_key(const PlantModel& model, int N);

}  // namespace hyperstab
