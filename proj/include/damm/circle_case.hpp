#pragma once

#include <array>
#include <optional>
#include <ostream>
#include <vector>

#include "damm/grid.hpp"
#include "damm/mm_core.hpp"

namespace damm {

/// Gaussian bump exp(-|z - c|^2 / (2 width^2)).
struct GaussianPeak {
    double center_x = 0.5;
    double center_y = 0.5;
    double width = 0.05;

    double operator()(double x, double y) const noexcept;
};

/// Rotating-field test problem with psi = (x^2 + y^2) / 2 on [-1, 1]^2.
struct CircleConfig {
    GridSpec grid{1.0, 1.0, 40, 40, BoundaryKind::FullyTruncated};
    double epsilon = 0.0;
    SigmaPolicy sigma{SigmaKind::DxSquared, 0.0};
    double dt = 0.01;
    int steps = 200;
    GaussianPeak peak{};
    int quadrature_points = 2048;
    double linear_tol = 1e-10;
    int linear_max_iter = 200;
};

void validate(const CircleConfig& config);

/// The default peak at (0.5, 0.5) with width 0.05.
double gaussian_init(double x, double y) noexcept;

/// f_in transported by the rotation of angle t/eps. Throws for eps <= 0.
double exact_solution(double t, double x, double y, double epsilon, const GaussianPeak& peak = {});

/// Angular average of f_in over the circle of radius sqrt(x^2 + y^2),
/// trapezoid rule with `quadrature_points` nodes (at least 16).
double limit_solution(double x, double y, int quadrature_points = 2048,
                      const GaussianPeak& peak = {});

GridField circle_stream_function(const Grid& grid);

struct CircleSample {
    int step = 0;
    double t = 0.0;
    /// Errors against the exact solution; NaN when epsilon = 0.
    double l1_eps = 0.0, l2_eps = 0.0, linf_eps = 0.0;
    /// Errors against the limit solution.
    double l1_0 = 0.0, l2_0 = 0.0, linf_0 = 0.0;
};

struct CircleRun {
    double sigma = 0.0;
    std::vector<CircleSample> series;
    /// Space-time L1, L2, Linf over (0, T) x Omega_S; the eps entries are NaN when epsilon = 0.
    std::array<double, 3> spacetime_eps{};
    std::array<double, 3> spacetime_0{};
    /// First step, once the L1 distance to the limit solution has started to
    /// fall, at which it shrinks by at most 0.1%.
    std::optional<int> n_eq;
    GridField final_f{Grid(GridSpec{})};
};

CircleRun run_circle(const CircleConfig& config);

/// Least-squares line through (ln x, ln y).
struct LogLogFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

LogLogFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y);

enum class ConvergenceAxis { Time, Space };

struct ConvergenceLevel {
    int resolution = 0;  ///< time steps (Time) or cells per direction (Space)
    double delta = 0.0;  ///< dt or dx
    double sigma = 0.0;
    std::array<double, 3> errors{};  ///< space-time L1, L2, Linf
};

struct ConvergenceResult {
    ConvergenceAxis axis = ConvergenceAxis::Time;
    std::vector<ConvergenceLevel> levels;
    std::array<double, 3> slopes{};
};

/// Runs `base` at each resolution. Time: base.dt is replaced by T / level
/// with T = base.dt * base.steps fixed. Space: the grid gets `level` cells
/// per direction and sigma is re-evaluated from the policy. Errors are taken
/// against the exact solution for eps > 0 and the limit solution for eps = 0.
ConvergenceResult convergence_study(const CircleConfig& base, ConvergenceAxis axis,
                                    const std::vector<int>& levels);

enum class ScanMode { NonLimit, Limit };

struct SigmaScanConfig {
    ScanMode mode = ScanMode::NonLimit;
    std::vector<int> grids{20, 40, 80};
    double sigma_min = 7e-6;
    double sigma_max = 1.0;
    int points_per_decade = 25;
    double eta = 0.01;  ///< NonLimit admissibility threshold
    double dt = 0.01;
    int steps = 10;
    GaussianPeak peak{};
    int quadrature_points = 2048;
    double linear_tol = 1e-10;
};

struct SigmaScanGrid {
    int cells = 0;
    double dx = 0.0;
    std::vector<double> sigmas;
    std::vector<double> errors;  ///< final-time L1 error
    std::optional<double> sigma_h;
};

struct SigmaScanResult {
    ScanMode mode = ScanMode::NonLimit;
    std::vector<SigmaScanGrid> grids;
    /// Fit of ln sigma_h against ln dx over the grids that produced one.
    std::optional<LogLogFit> fit;
};

/// Log-spaced sigma values from sigma_min to sigma_max, both included.
std::vector<double> sigma_grid(double sigma_min, double sigma_max, int points_per_decade);

/// NonLimit (eps = 1): largest sigma whose relative L1 excess over the
/// sigma_min run stays below eta. Limit (eps = 0): sigma maximising
/// |dZ/dsigma| by centred differences on the sigma grid.
SigmaScanResult sigma_scan(const SigmaScanConfig& config);

/// Selection rules on precomputed error curves.
std::optional<double> select_sigma_nonlimit(const std::vector<double>& sigmas,
                                            const std::vector<double>& errors, double eta);
std::optional<double> select_sigma_limit(const std::vector<double>& sigmas,
                                         const std::vector<double>& errors);

void write_csv(std::ostream& os, const CircleRun& run);
void write_csv(std::ostream& os, const ConvergenceResult& result);
void write_csv(std::ostream& os, const SigmaScanResult& result);

}  // namespace damm
