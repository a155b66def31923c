#pragma once

#include <functional>
#include <span>
#include <vector>

#include "damm/grid.hpp"
#include "damm/mm_core.hpp"
#include "damm/vlasov_poisson.hpp"

namespace damm {

/// I + (w / eps) B on the independent nodes, where B u = [u, psi].
SparseMatrix implicit_direct_matrix(const GridField& psi, double epsilon, double stage_weight,
                                    const UnknownLayout& layout);

/// DIRK2 step of f_t + (1/eps) [f, psi] = 0 solved directly in f.
/// Throws InvalidArgument for eps <= 0 and SolverFailure when the stage
/// solve does not reach `linear_tol`.
GridField implicit_direct_step(const GridField& f_n, const GridField& psi, double epsilon, double dt,
                               double linear_tol = 1e-10, int linear_max_iter = 200);

/// Values of the periodic cubic spline through `y` (unit node spacing)
/// evaluated at i - shift.
std::vector<double> shift_periodic_spline(std::span<const double> y, double shift);

/// Natural cubic spline through `y` evaluated at j - shift; zero outside
/// the node range.
std::vector<double> shift_natural_spline(std::span<const double> y, double shift);

struct SLStepResult {
    GridField f;
    PoissonSolution field;
};

/// Strang-split step: half x-shift, Poisson solve and full v-shift, half
/// x-shift, then the closing Poisson solve.
SLStepResult semi_lagrangian_vp_step(const GridField& f_n, const VPConfig& config);

/// Semi-Lagrangian run with the same diagnostics schema (picard_iters = 0).
std::vector<VPDiagnostics> run_semi_lagrangian(
    const VPConfig& config,
    const std::function<void(int step, const GridField& f, const PoissonSolution& field)>& observer = {});

}  // namespace damm
