#include "damm/circle_case.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "damm/csv.hpp"

namespace damm {

double GaussianPeak::operator()(double x, double y) const noexcept {
    const double dx = x - center_x;
    const double dy = y - center_y;
    return std::exp(-(dx * dx + dy * dy) / (2.0 * width * width));
}

void validate(const CircleConfig& c) {
    if (!(c.peak.width > 0.0)) throw InvalidArgument("gaussian width must be positive");
    if (std::abs(c.peak.center_x) >= c.grid.half_width_x ||
        std::abs(c.peak.center_y) >= c.grid.half_width_y)
        throw InvalidArgument("gaussian center must lie inside the domain");
    if (c.steps < 1) throw InvalidArgument("steps must be at least 1");
    if (c.quadrature_points < 16) throw InvalidArgument("quadrature_points must be at least 16");
    (void)Grid(c.grid);
    if (!(c.epsilon >= 0.0)) throw InvalidArgument("epsilon must be non-negative");
    if (!(c.dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (c.sigma.kind == SigmaKind::Fixed && !(c.sigma.value > 0.0))
        throw InvalidArgument("fixed sigma must be positive");
}

double gaussian_init(double x, double y) noexcept { return GaussianPeak{}(x, y); }

double exact_solution(double t, double x, double y, double epsilon, const GaussianPeak& peak) {
    if (!(epsilon > 0.0))
        throw InvalidArgument("exact_solution needs epsilon > 0; use limit_solution for eps = 0");
    const double a = t / epsilon;
    const double c = std::cos(a), s = std::sin(a);
    return peak(c * x - s * y, s * x + c * y);
}

double limit_solution(double x, double y, int quadrature_points, const GaussianPeak& peak) {
    if (quadrature_points < 16) throw InvalidArgument("limit_solution needs at least 16 points");
    const double r = std::hypot(x, y);
    const double h = 2.0 * std::numbers::pi / quadrature_points;
    double acc = 0.0;
    for (int k = 0; k < quadrature_points; ++k) {
        const double s = k * h;
        acc += peak(r * std::cos(s), r * std::sin(s));
    }
    return acc / quadrature_points;
}

GridField circle_stream_function(const Grid& grid) {
    return GridField::sample(grid, [](double x, double y) { return 0.5 * (x * x + y * y); });
}

namespace {

// The limit profile only depends on the radius, so it is tabulated per
// distinct squared radius of the grid.
GridField sample_limit(const Grid& grid, int points, const GaussianPeak& peak) {
    GridField out(grid);
    std::vector<std::pair<double, std::size_t>> radii;
    radii.reserve(grid.node_count());
    for (int j = 0; j < grid.nodes_y(); ++j)
        for (int i = 0; i < grid.nodes_x(); ++i) {
            const double x = grid.x(i), y = grid.y(j);
            radii.emplace_back(x * x + y * y, grid.index(i, j));
        }
    std::sort(radii.begin(), radii.end());
    double last_r2 = -1.0, last_value = 0.0;
    for (const auto& [r2, idx] : radii) {
        if (r2 != last_r2) {
            last_value = limit_solution(std::sqrt(r2), 0.0, points, peak);
            last_r2 = r2;
        }
        out.values()[idx] = last_value;
    }
    return out;
}

GridField sample_exact(const Grid& grid, double t, double eps, const GaussianPeak& peak) {
    return GridField::sample(grid, [&](double x, double y) { return exact_solution(t, x, y, eps, peak); });
}

MMParams mm_params(const CircleConfig& c) {
    MMParams p;
    p.epsilon = c.epsilon;
    p.sigma = sigma_policy(c.sigma, c.grid);
    p.dt = c.dt;
    p.linear_tol = c.linear_tol;
    p.linear_max_iter = c.linear_max_iter;
    return p;
}

constexpr double kPlateauDecrease = 1e-3;

}  // namespace

CircleRun run_circle(const CircleConfig& config) {
    validate(config);
    const Grid grid(config.grid);
    const MMParams params = mm_params(config);
    const bool has_exact = config.epsilon > 0.0;
    const double nan = std::numeric_limits<double>::quiet_NaN();

    Dirk2Stepper stepper(grid, params);
    stepper.set_psi(circle_stream_function(grid));
    const GridField limit = sample_limit(grid, config.quadrature_points, config.peak);

    CircleRun run;
    run.sigma = params.sigma;
    SpaceTimeNorm st_eps[3] = {{NormOrder::L1, config.dt}, {NormOrder::L2, config.dt},
                               {NormOrder::Linf, config.dt}};
    SpaceTimeNorm st_0[3] = {{NormOrder::L1, config.dt}, {NormOrder::L2, config.dt},
                             {NormOrder::Linf, config.dt}};
    constexpr NormOrder orders[3] = {NormOrder::L1, NormOrder::L2, NormOrder::Linf};

    GridField f = enforce_boundary(GridField::sample(grid, config.peak));
    auto record = [&](int n) {
        CircleSample s;
        s.step = n;
        s.t = n * config.dt;
        double* eps_slots[3] = {&s.l1_eps, &s.l2_eps, &s.linf_eps};
        double* lim_slots[3] = {&s.l1_0, &s.l2_0, &s.linf_0};
        const GridField e0 = f - limit;
        if (has_exact) {
            const GridField ee = f - sample_exact(grid, s.t, config.epsilon, config.peak);
            for (int k = 0; k < 3; ++k) {
                *eps_slots[k] = discrete_norm(ee, orders[k]);
                if (n > 0) st_eps[k].add(ee);
            }
        } else {
            for (double* p : eps_slots) *p = nan;
        }
        for (int k = 0; k < 3; ++k) {
            *lim_slots[k] = discrete_norm(e0, orders[k]);
            if (n > 0) st_0[k].add(e0);
        }
        run.series.push_back(s);
    };

    record(0);
    bool relaxing = false;
    for (int n = 1; n <= config.steps; ++n) {
        f = stepper.step(f).f;
        record(n);
        // Steps before the first significant decrease are start-up transients.
        const double prev = run.series[n - 1].l1_0;
        const bool small = prev - run.series[n].l1_0 <= kPlateauDecrease * prev;
        if (!small) relaxing = true;
        else if (relaxing && !run.n_eq) run.n_eq = n;
    }
    for (int k = 0; k < 3; ++k) {
        run.spacetime_eps[k] = has_exact ? st_eps[k].value() : nan;
        run.spacetime_0[k] = st_0[k].value();
    }
    run.final_f = std::move(f);
    return run;
}

LogLogFit loglog_fit(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2)
        throw InvalidArgument("loglog_fit needs at least two matching points");
    const auto n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        if (!(x[k] > 0.0) || !(y[k] > 0.0)) throw InvalidArgument("loglog_fit needs positive data");
        sx += std::log(x[k]);
        sy += std::log(y[k]);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double dx = std::log(x[k]) - mx, dy = std::log(y[k]) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx == 0.0) throw InvalidArgument("loglog_fit needs distinct abscissae");
    LogLogFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

ConvergenceResult convergence_study(const CircleConfig& base, ConvergenceAxis axis,
                                    const std::vector<int>& levels) {
    if (levels.size() < 3) throw InvalidArgument("convergence_study needs at least 3 levels");
    validate(base);
    const double final_time = base.dt * base.steps;
    ConvergenceResult result;
    result.axis = axis;
    for (int level : levels) {
        if (level < 1) throw InvalidArgument("convergence levels must be positive");
        CircleConfig c = base;
        if (axis == ConvergenceAxis::Time) {
            c.steps = level;
            c.dt = final_time / level;
        } else {
            c.grid.cells_x = level;
            c.grid.cells_y = level;
        }
        const CircleRun run = run_circle(c);
        ConvergenceLevel lv;
        lv.resolution = level;
        lv.delta = axis == ConvergenceAxis::Time ? c.dt : Grid(c.grid).dx();
        lv.sigma = run.sigma;
        lv.errors = base.epsilon > 0.0 ? run.spacetime_eps : run.spacetime_0;
        result.levels.push_back(lv);
    }
    for (int k = 0; k < 3; ++k) {
        std::vector<double> d, e;
        for (const auto& lv : result.levels) {
            d.push_back(lv.delta);
            e.push_back(lv.errors[k]);
        }
        result.slopes[k] = loglog_fit(d, e).slope;
    }
    return result;
}

std::vector<double> sigma_grid(double sigma_min, double sigma_max, int points_per_decade) {
    if (!(sigma_min > 0.0) || !(sigma_max > sigma_min))
        throw InvalidArgument("sigma range must satisfy 0 < sigma_min < sigma_max");
    if (points_per_decade < 1) throw InvalidArgument("points_per_decade must be positive");
    const double a = std::log10(sigma_min), b = std::log10(sigma_max);
    const int n = std::max(2, static_cast<int>(std::ceil((b - a) * points_per_decade - 1e-9)) + 1);
    std::vector<double> out(n);
    for (int k = 0; k < n; ++k) out[k] = std::pow(10.0, a + (b - a) * k / (n - 1));
    out.front() = sigma_min;
    out.back() = sigma_max;
    return out;
}

std::optional<double> select_sigma_nonlimit(const std::vector<double>& sigmas,
                                            const std::vector<double>& errors, double eta) {
    if (sigmas.size() != errors.size() || sigmas.empty())
        throw InvalidArgument("sigma scan data size mismatch");
    const double ref = errors.front();
    std::optional<double> best;
    for (std::size_t k = 1; k < sigmas.size(); ++k)
        if ((errors[k] - ref) / ref < eta) best = sigmas[k];
    return best;
}

std::optional<double> select_sigma_limit(const std::vector<double>& sigmas,
                                         const std::vector<double>& errors) {
    if (sigmas.size() != errors.size()) throw InvalidArgument("sigma scan data size mismatch");
    if (sigmas.size() < 3) return std::nullopt;
    double best_slope = -1.0;
    std::optional<double> best;
    for (std::size_t k = 1; k + 1 < sigmas.size(); ++k) {
        const double d = std::abs((errors[k + 1] - errors[k - 1]) / (sigmas[k + 1] - sigmas[k - 1]));
        if (d > best_slope) {
            best_slope = d;
            best = sigmas[k];
        }
    }
    return best;
}

SigmaScanResult sigma_scan(const SigmaScanConfig& config) {
    if (config.grids.size() < 3) throw InvalidArgument("sigma_scan needs at least 3 grids");
    if (config.mode == ScanMode::NonLimit && !(config.eta > 0.0))
        throw InvalidArgument("eta must be positive");
    const std::vector<double> sigmas =
        sigma_grid(config.sigma_min, config.sigma_max, config.points_per_decade);

    SigmaScanResult result;
    result.mode = config.mode;
    std::vector<double> dxs, chosen;
    for (int cells : config.grids) {
        CircleConfig c;
        c.grid = GridSpec{1.0, 1.0, cells, cells, BoundaryKind::FullyTruncated};
        c.epsilon = config.mode == ScanMode::NonLimit ? 1.0 : 0.0;
        c.dt = config.dt;
        c.steps = config.steps;
        c.peak = config.peak;
        c.quadrature_points = config.quadrature_points;
        c.linear_tol = config.linear_tol;

        SigmaScanGrid row;
        row.cells = cells;
        row.dx = Grid(c.grid).dx();
        row.sigmas = sigmas;
        for (double s : sigmas) {
            c.sigma = SigmaPolicy{SigmaKind::Fixed, s};
            const CircleRun run = run_circle(c);
            const CircleSample& last = run.series.back();
            row.errors.push_back(config.mode == ScanMode::NonLimit ? last.l1_eps : last.l1_0);
        }
        row.sigma_h = config.mode == ScanMode::NonLimit
                          ? select_sigma_nonlimit(row.sigmas, row.errors, config.eta)
                          : select_sigma_limit(row.sigmas, row.errors);
        if (row.sigma_h) {
            dxs.push_back(row.dx);
            chosen.push_back(*row.sigma_h);
        }
        result.grids.push_back(std::move(row));
    }
    if (dxs.size() >= 2) result.fit = loglog_fit(dxs, chosen);
    return result;
}

void write_csv(std::ostream& os, const CircleRun& run) {
    csv::header(os, {"step", "t", "L1_eps", "L2_eps", "Linf_eps", "L1_0", "L2_0", "Linf_0"});
    for (const auto& s : run.series)
        csv::Row(os) << s.step << s.t << s.l1_eps << s.l2_eps << s.linf_eps << s.l1_0 << s.l2_0
                     << s.linf_0;
}

void write_csv(std::ostream& os, const ConvergenceResult& r) {
    csv::header(os, {"resolution", "delta", "sigma", "error_L1", "error_L2", "error_Linf",
                     "slope_L1", "slope_L2", "slope_Linf"});
    for (const auto& lv : r.levels)
        csv::Row(os) << lv.resolution << lv.delta << lv.sigma << lv.errors[0] << lv.errors[1]
                     << lv.errors[2] << r.slopes[0] << r.slopes[1] << r.slopes[2];
}

void write_csv(std::ostream& os, const SigmaScanResult& r) {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    const double slope = r.fit ? r.fit->slope : nan;
    const double r2 = r.fit ? r.fit->r2 : nan;
    csv::header(os, {"resolution", "dx", "sigma", "error", "sigma_h", "slope", "r2"});
    for (const auto& g : r.grids)
        for (std::size_t k = 0; k < g.sigmas.size(); ++k)
            csv::Row(os) << g.cells << g.dx << g.sigmas[k] << g.errors[k]
                         << (g.sigma_h ? *g.sigma_h : nan) << slope << r2;
}

}  // namespace damm
