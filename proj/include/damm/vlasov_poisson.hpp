#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "damm/grid.hpp"
#include "damm/mm_core.hpp"

namespace damm {

enum class InitialKind { Landau, TwoStreamBumps, TwoStreamVSquared };

/// One-period 1D1V run. The grid is PeriodicX with half-width pi/k, and the
/// physical coordinate is x = x_grid + pi/k in [0, 2 pi / k].
struct VPConfig {
    double mode_k = 0.5;
    double amplitude_gamma = 0.001;
    double epsilon = 1.0;
    SigmaPolicy sigma{SigmaKind::ScaledDxSquared, 0.0};
    double dt = 0.01;
    double final_time = 20.0;
    double velocity_cut = 10.0;
    int cells_x = 256;
    int cells_v = 256;
    InitialKind initial_kind = InitialKind::Landau;
    double picard_tol = 1e-2;
    int picard_max = 50;
    double linear_tol = 1e-10;
    int linear_max_iter = 200;

    int steps() const;
    bool operator==(const VPConfig&) const = default;
};

void validate(const VPConfig& config);
GridSpec vp_grid_spec(const VPConfig& config);
MMParams vp_mm_params(const VPConfig& config);

/// Raised when the Picard loop does not settle within picard_max iterates.
class PicardFailure : public SolverFailure {
public:
    using SolverFailure::SolverFailure;
};

/// Initial datum at physical (x, v).
double initial_condition(InitialKind kind, double gamma, double k, double x, double v);
GridField initial_field(const VPConfig& config);

struct PoissonSolution {
    std::vector<double> phi;
    std::vector<double> e;
};

/// Periodic 3-point solve of -phi'' = 1 - n over one period of `n.size()`
/// cells. The right-hand side mean is removed and mean(phi) = 0.
/// E is the centred difference -phi'.
PoissonSolution poisson_solve_periodic(std::span<const double> density, double dx);

/// n_i = dv * sum_j f_ij for the first N_x columns.
std::vector<double> electron_density(const GridField& f);

/// psi_ij = v_j^2 / 2 - phi_i, with the periodic duplicate column filled.
GridField stream_function(const Grid& grid, std::span<const double> phi);

struct VPDiagnostics {
    double time = 0.0;
    double e_field_l1 = 0.0;
    double electric_energy = 0.0;
    double plasma_energy = 0.0;
    double total_energy = 0.0;
    double mass = 0.0;
    double momentum = 0.0;
    double entropy = 0.0;
    double l2_norm = 0.0;
    int picard_iters = 0;
};

VPDiagnostics diagnostics(const GridField& f, std::span<const double> e, double t, int picard_iters);

struct VPStepResult {
    MMState state;
    PoissonSolution field;
    int picard_iters = 0;
    double picard_residual = 0.0;
};

/// Stateful stepper that keeps the solver factorisation across Picard
/// iterates and time steps.
class VPSolver {
public:
    explicit VPSolver(const VPConfig& config);
    VPSolver(const VPConfig& config, GridField f0);

    const VPConfig& config() const noexcept { return config_; }
    const Grid& grid() const noexcept { return grid_; }
    const GridField& f() const noexcept { return f_; }
    const GridField& q() const noexcept { return q_; }
    const PoissonSolution& field() const noexcept { return field_; }
    GridField psi() const { return stream_function(grid_, field_.phi); }
    int step_index() const noexcept { return step_; }
    double time() const noexcept { return step_ * config_.dt; }
    const Dirk2Stepper& stepper() const noexcept { return stepper_; }

    VPDiagnostics diagnostics() const;
    /// Advances one step; throws PicardFailure or SolverFailure.
    VPDiagnostics step();

private:
    VPConfig config_;
    Grid grid_;
    Dirk2Stepper stepper_;
    GridField f_;
    GridField q_;
    PoissonSolution field_;
    int step_ = 0;
    int last_picard_ = 0;
};

/// Outer Picard loop around one DIRK2 step, starting from f^{n+1,0} = f^n.
VPStepResult picard_vp_step(const GridField& f_n, const VPConfig& config);
VPStepResult picard_vp_step(const GridField& f_n, const VPConfig& config, Dirk2Stepper& stepper);

/// Runs to final_time; `observer` sees the solver after every step (and once at t = 0).
std::vector<VPDiagnostics> run_vp(const VPConfig& config,
                                  const std::function<void(const VPSolver&)>& observer = {});

/// Raised by rate_fit and bgk_fit when the data cannot support a fit.
class FitFailure : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class RateFitMode { Peaks, Linear };

struct RateFit {
    double omega_i = 0.0;
    /// NaN in Linear mode.
    double omega_p = 0.0;
    double r2 = 0.0;
    std::vector<std::pair<double, double>> peaks;  ///< (t, ln ||E||_1)
};

/// Peaks: least-squares slope through the local maxima of ln ||E||_1 in
/// [t_a, t_b] and omega_p = pi / mean peak spacing (needs 4 peaks).
/// Linear: least-squares slope of ln ||E||_1 over the window.
/// Throws FitFailure when the window holds too little data.
RateFit rate_fit(std::span<const double> t, std::span<const double> e_l1, double t_a, double t_b,
                 RateFitMode mode = RateFitMode::Peaks);

struct BGKFit {
    double a = 0.0;
    double beta = 0.0;
    double phi_max = 0.0;
    double psi_max_point = 0.0;
    double psi_star = 0.0;
    std::vector<std::pair<double, double>> scatter;  ///< (psi, f)
    double spread_metric = 0.0;
};

/// Closed form that makes f_fit stationary at psi_max_point.
double bgk_psi_star(double beta, double phi_max, double psi_max_point);
double bgk_profile(double psi, double a, double beta, double phi_max, double psi_star);

/// Mean over psi bins of (max f - min f) divided by the overall max f.
double spread_metric(const std::vector<std::pair<double, double>>& scatter, int bins = 200);

BGKFit bgk_fit(const GridField& f, const GridField& psi, double beta = 1.20, double a = 0.2948,
               int bins = 200);

void write_csv(std::ostream& os, const std::vector<VPDiagnostics>& series, double dt);
void write_csv(std::ostream& os, const BGKFit& fit);
/// Phase-space dump with columns x, v, f (physical x).
void write_snapshot_csv(std::ostream& os, const GridField& f, double x_offset);

}  // namespace damm
