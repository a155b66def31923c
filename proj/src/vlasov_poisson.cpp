#include "damm/vlasov_poisson.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "damm/csv.hpp"

namespace damm {

namespace {

constexpr double kEntropyFloor = 1e-30;

double l1_over_period(std::span<const double> values) {
    double acc = 0.0;
    for (double v : values) acc += std::abs(v);
    return acc;
}

double relative_change(double diff, double ref) {
    if (ref > 0.0) return diff / ref;
    return diff;
}

}  // namespace

int VPConfig::steps() const {
    return static_cast<int>(std::llround(final_time / dt));
}

void validate(const VPConfig& c) {
    if (!(c.mode_k > 0.0)) throw InvalidArgument("mode_k must be positive");
    if (!(c.amplitude_gamma >= 0.0)) throw InvalidArgument("amplitude_gamma must be >= 0");
    if (!(c.epsilon >= 0.0)) throw InvalidArgument("epsilon must be >= 0");
    if (!(c.dt > 0.0)) throw InvalidArgument("dt must be positive");
    if (!(c.final_time >= 0.0)) throw InvalidArgument("final_time must be >= 0");
    if (!(c.velocity_cut > 0.0)) throw InvalidArgument("velocity_cut must be positive");
    if (c.cells_x < 4 || c.cells_v < 4) throw InvalidArgument("cells_x and cells_v must be >= 4");
    if (!(c.picard_tol > 0.0)) throw InvalidArgument("picard_tol must be positive");
    if (c.picard_max < 1) throw InvalidArgument("picard_max must be >= 1");
    if (!(c.linear_tol > 0.0 && c.linear_tol < 1.0)) throw InvalidArgument("linear_tol must be in (0, 1)");
    if (c.linear_max_iter < 1) throw InvalidArgument("linear_max_iter must be >= 1");
    if (std::abs(c.steps() * c.dt - c.final_time) > 1e-9 * std::max(1.0, c.final_time))
        throw InvalidArgument("final_time must be a multiple of dt");
    if (c.sigma.kind == SigmaKind::Fixed && !(c.sigma.value > 0.0))
        throw InvalidArgument("fixed sigma must be positive");
}

GridSpec vp_grid_spec(const VPConfig& c) {
    return GridSpec{std::numbers::pi / c.mode_k, c.velocity_cut, c.cells_x, c.cells_v,
                    BoundaryKind::PeriodicX};
}

MMParams vp_mm_params(const VPConfig& c) {
    MMParams p;
    p.epsilon = c.epsilon;
    p.sigma = sigma_policy(c.sigma, vp_grid_spec(c));
    p.dt = c.dt;
    p.linear_tol = c.linear_tol;
    p.linear_max_iter = c.linear_max_iter;
    return p;
}

double initial_condition(InitialKind kind, double gamma, double k, double x, double v) {
    const double base = (1.0 + gamma * std::cos(k * x)) / std::sqrt(2.0 * std::numbers::pi);
    switch (kind) {
        case InitialKind::Landau: return base * std::exp(-0.5 * v * v);
        case InitialKind::TwoStreamBumps:
            return base * 0.5 *
                   (std::exp(-0.5 * (v - 3.0) * (v - 3.0)) + std::exp(-0.5 * (v + 3.0) * (v + 3.0)));
        case InitialKind::TwoStreamVSquared: return base * v * v * std::exp(-0.5 * v * v);
    }
    return 0.0;
}

GridField initial_field(const VPConfig& c) {
    validate(c);
    const Grid grid(vp_grid_spec(c));
    const double shift = std::numbers::pi / c.mode_k;
    auto f = GridField::sample(grid, [&](double x, double v) {
        return initial_condition(c.initial_kind, c.amplitude_gamma, c.mode_k, x + shift, v);
    });
    enforce_boundary_in_place(f);
    return f;
}

PoissonSolution poisson_solve_periodic(std::span<const double> density, double dx) {
    const std::size_t n = density.size();
    if (n < 3) throw InvalidArgument("poisson_solve_periodic needs at least 3 cells");
    if (!(dx > 0.0)) throw InvalidArgument("poisson_solve_periodic needs dx > 0");

    std::vector<double> rhs(n);
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        rhs[i] = 1.0 - density[i];
        mean += rhs[i];
    }
    mean /= static_cast<double>(n);
    for (double& r : rhs) r = (r - mean) * dx * dx;

    // With d_i = phi_{i+1} - phi_i the stencil reads d_i - d_{i-1} = -rhs_i,
    // and periodicity fixes d_0 through sum d_i = 0.
    std::vector<double> d(n);
    double run = 0.0;
    double d_sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (i > 0) run -= rhs[i];
        d[i] = run;
        d_sum += run;
    }
    const double d0 = -d_sum / static_cast<double>(n);
    for (double& di : d) di += d0;

    PoissonSolution out;
    out.phi.assign(n, 0.0);
    for (std::size_t i = 1; i < n; ++i) out.phi[i] = out.phi[i - 1] + d[i - 1];
    double phi_mean = 0.0;
    for (double p : out.phi) phi_mean += p;
    phi_mean /= static_cast<double>(n);
    for (double& p : out.phi) p -= phi_mean;

    out.e.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double right = out.phi[(i + 1) % n];
        const double left = out.phi[(i + n - 1) % n];
        out.e[i] = -(right - left) / (2.0 * dx);
    }
    return out;
}

std::vector<double> electron_density(const GridField& f) {
    const Grid& g = f.grid();
    std::vector<double> n(static_cast<std::size_t>(g.cells_x()), 0.0);
    for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.cells_x(); ++i) n[static_cast<std::size_t>(i)] += f(i, j);
    for (double& v : n) v *= g.dy();
    return n;
}

GridField stream_function(const Grid& grid, std::span<const double> phi) {
    if (phi.size() != static_cast<std::size_t>(grid.cells_x()))
        throw InvalidArgument("stream_function: phi must have cells_x entries");
    GridField psi(grid);
    for (int j = 0; j < grid.nodes_y(); ++j) {
        const double v = grid.y(j);
        for (int i = 0; i < grid.nodes_x(); ++i) {
            const int ii = i % grid.cells_x();
            psi(i, j) = 0.5 * v * v - phi[static_cast<std::size_t>(ii)];
        }
    }
    return psi;
}

VPDiagnostics diagnostics(const GridField& f, std::span<const double> e, double t, int picard_iters) {
    const Grid& g = f.grid();
    if (e.size() != static_cast<std::size_t>(g.cells_x()))
        throw InvalidArgument("diagnostics: E must have cells_x entries");
    const double w = g.dx() * g.dy();
    VPDiagnostics d;
    d.time = t;
    d.picard_iters = picard_iters;
    for (double ei : e) {
        d.e_field_l1 += std::abs(ei);
        d.electric_energy += ei * ei;
    }
    d.e_field_l1 *= g.dx();
    d.electric_energy *= 0.5 * g.dx();

    double mass = 0.0, mom = 0.0, kin = 0.0, ent = 0.0, sq = 0.0;
    for (int j = 0; j < g.nodes_y(); ++j) {
        const double v = g.y(j);
        for (int i = 0; i < g.cells_x(); ++i) {
            const double fij = f(i, j);
            mass += fij;
            mom += v * fij;
            kin += v * v * fij;
            sq += fij * fij;
            if (fij > kEntropyFloor) ent -= fij * std::log(fij);
        }
    }
    d.mass = mass * w;
    d.momentum = mom * w;
    d.plasma_energy = 0.5 * kin * w;
    d.entropy = ent * w;
    d.l2_norm = std::sqrt(sq * w);
    d.total_energy = d.electric_energy + d.plasma_energy;
    return d;
}

VPStepResult picard_vp_step(const GridField& f_n, const VPConfig& config, Dirk2Stepper& stepper) {
    const Grid& g = f_n.grid();
    const std::size_t nx = static_cast<std::size_t>(g.cells_x());

    GridField f_iter = f_n;
    PoissonSolution field = poisson_solve_periodic(electron_density(f_iter), g.dx());
    double residual = std::numeric_limits<double>::infinity();

    for (int l = 1; l <= config.picard_max; ++l) {
        stepper.set_psi(stream_function(g, field.phi));
        MMState next = stepper.step(f_n);
        PoissonSolution next_field = poisson_solve_periodic(electron_density(next.f), g.dx());

        double df = 0.0, fref = 0.0;
        for (int j = 0; j < g.nodes_y(); ++j)
            for (int i = 0; i < g.cells_x(); ++i) {
                df += std::abs(next.f(i, j) - f_iter(i, j));
                fref += std::abs(next.f(i, j));
            }
        double dphi = 0.0;
        for (std::size_t i = 0; i < nx; ++i) dphi += std::abs(next_field.phi[i] - field.phi[i]);
        const double phiref = l1_over_period(next_field.phi);
        residual = relative_change(df, fref) + relative_change(dphi, phiref);

        if (!next.f.all_finite())
            throw SolverFailure("Picard iterate is not finite", residual, l);
        f_iter = next.f;
        field = std::move(next_field);
        if (residual < config.picard_tol)
            return VPStepResult{std::move(next), std::move(field), l, residual};
    }
    throw PicardFailure("Picard iteration did not converge within " +
                            std::to_string(config.picard_max) + " iterates (residual " +
                            std::to_string(residual) + ")",
                        residual, config.picard_max);
}

VPStepResult picard_vp_step(const GridField& f_n, const VPConfig& config) {
    validate(config);
    Dirk2Stepper stepper(f_n.grid(), vp_mm_params(config));
    return picard_vp_step(f_n, config, stepper);
}

VPSolver::VPSolver(const VPConfig& config) : VPSolver(config, initial_field(config)) {}

VPSolver::VPSolver(const VPConfig& config, GridField f0)
    : config_((validate(config), config)),
      grid_(vp_grid_spec(config)),
      stepper_(grid_, vp_mm_params(config)),
      f_(std::move(f0)),
      q_(grid_) {
    if (!(f_.grid() == grid_)) throw InvalidArgument("VPSolver: initial field grid mismatch");
    field_ = poisson_solve_periodic(electron_density(f_), grid_.dx());
}

VPDiagnostics VPSolver::diagnostics() const {
    return damm::diagnostics(f_, field_.e, time(), last_picard_);
}

VPDiagnostics VPSolver::step() {
    VPStepResult r = picard_vp_step(f_, config_, stepper_);
    f_ = std::move(r.state.f);
    q_ = std::move(r.state.q);
    field_ = std::move(r.field);
    last_picard_ = r.picard_iters;
    ++step_;
    return diagnostics();
}

std::vector<VPDiagnostics> run_vp(const VPConfig& config,
                                  const std::function<void(const VPSolver&)>& observer) {
    VPSolver solver(config);
    std::vector<VPDiagnostics> out;
    out.reserve(static_cast<std::size_t>(config.steps()) + 1);
    out.push_back(solver.diagnostics());
    if (observer) observer(solver);
    for (int n = 0; n < config.steps(); ++n) {
        out.push_back(solver.step());
        if (observer) observer(solver);
    }
    return out;
}

namespace {

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
};

LineFit least_squares(const std::vector<double>& x, const std::vector<double>& y) {
    const double n = static_cast<double>(x.size());
    double sx = 0.0, sy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sx += x[k];
        sy += y[k];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxx += (x[k] - mx) * (x[k] - mx);
        sxy += (x[k] - mx) * (y[k] - my);
        syy += (y[k] - my) * (y[k] - my);
    }
    if (!(sxx > 0.0)) throw FitFailure("rate_fit: degenerate abscissae");
    LineFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r2 = syy > 0.0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    return fit;
}

}  // namespace

RateFit rate_fit(std::span<const double> t, std::span<const double> e_l1, double t_a, double t_b,
                 RateFitMode mode) {
    if (t.size() != e_l1.size()) throw InvalidArgument("rate_fit: series length mismatch");
    if (!(t_b > t_a)) throw InvalidArgument("rate_fit: empty window");

    std::vector<double> ts, ys;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (t[k] < t_a || t[k] > t_b) continue;
        if (!(e_l1[k] > 0.0)) continue;
        ts.push_back(t[k]);
        ys.push_back(std::log(e_l1[k]));
    }

    RateFit out;
    if (mode == RateFitMode::Linear) {
        if (ts.size() < 2) throw FitFailure("rate_fit: fewer than 2 samples in window");
        const LineFit fit = least_squares(ts, ys);
        out.omega_i = fit.slope;
        out.omega_p = std::numeric_limits<double>::quiet_NaN();
        out.r2 = fit.r2;
        return out;
    }

    for (std::size_t k = 1; k + 1 < ts.size(); ++k) {
        if (!(ys[k] > ys[k - 1] && ys[k] >= ys[k + 1])) continue;
        // Parabola through the three samples; uniform spacing is not assumed.
        const double x0 = ts[k - 1], x1 = ts[k], x2 = ts[k + 1];
        const double y0 = ys[k - 1], y1 = ys[k], y2 = ys[k + 1];
        const double d01 = (y1 - y0) / (x1 - x0);
        const double d12 = (y2 - y1) / (x2 - x1);
        const double curv = (d12 - d01) / (x2 - x0);
        double tp = x1, yp = y1;
        if (curv < 0.0) {
            const double b = d01 - curv * (x0 + x1);
            tp = std::clamp(-b / (2.0 * curv), x0, x2);
            yp = y0 + d01 * (tp - x0) + curv * (tp - x0) * (tp - x1);
        }
        out.peaks.emplace_back(tp, yp);
    }
    if (out.peaks.size() < 4)
        throw FitFailure("rate_fit: " + std::to_string(out.peaks.size()) +
                         " peaks in window, need at least 4");

    std::vector<double> px, py;
    for (const auto& [pt, pv] : out.peaks) {
        px.push_back(pt);
        py.push_back(pv);
    }
    const LineFit fit = least_squares(px, py);
    out.omega_i = fit.slope;
    out.r2 = fit.r2;
    const double spacing = (px.back() - px.front()) / static_cast<double>(px.size() - 1);
    out.omega_p = std::numbers::pi / spacing;
    return out;
}

double bgk_psi_star(double beta, double phi_m, double psi_m) {
    const double den = beta * phi_m + beta * psi_m - 1.0;
    if (std::abs(den) < 1e-12) throw FitFailure("bgk_fit: degenerate denominator beta*(phi_M + Psi_M) - 1");
    return (phi_m - beta * psi_m * phi_m + 2.0 * psi_m - beta * psi_m * psi_m) / den;
}

double bgk_profile(double psi, double a, double beta, double phi_m, double psi_star) {
    return a * (psi + phi_m) * (psi + psi_star) * std::exp(-beta * psi);
}

double spread_metric(const std::vector<std::pair<double, double>>& scatter, int bins) {
    if (bins < 1) throw InvalidArgument("spread_metric: bins must be >= 1");
    if (scatter.empty()) throw FitFailure("spread_metric: empty scatter");
    double lo = scatter.front().first, hi = lo, fmax = scatter.front().second;
    for (const auto& [p, v] : scatter) {
        lo = std::min(lo, p);
        hi = std::max(hi, p);
        fmax = std::max(fmax, v);
    }
    if (!(fmax > 0.0)) throw FitFailure("spread_metric: max f is not positive");
    if (!(hi > lo)) bins = 1;

    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> bmin(static_cast<std::size_t>(bins), inf), bmax(static_cast<std::size_t>(bins), -inf);
    const double width = bins > 1 ? (hi - lo) / bins : 1.0;
    for (const auto& [p, v] : scatter) {
        const auto b = static_cast<std::size_t>(std::min(bins - 1, static_cast<int>((p - lo) / width)));
        bmin[b] = std::min(bmin[b], v);
        bmax[b] = std::max(bmax[b], v);
    }
    double acc = 0.0;
    int used = 0;
    for (std::size_t b = 0; b < bmin.size(); ++b) {
        if (bmin[b] == inf) continue;
        acc += bmax[b] - bmin[b];
        ++used;
    }
    return acc / used / fmax;
}

BGKFit bgk_fit(const GridField& f, const GridField& psi, double beta, double a, int bins) {
    require_same_grid(f, psi, "bgk_fit");
    const Grid& g = f.grid();
    if (g.cells_y() % 2 != 0) throw InvalidArgument("bgk_fit: cells_v must be even so v = 0 is a node");
    const int j0 = g.cells_y() / 2;

    BGKFit out;
    out.a = a;
    out.beta = beta;
    double min_psi0 = std::numeric_limits<double>::infinity();
    for (int i = 0; i < g.nodes_x(); ++i) min_psi0 = std::min(min_psi0, psi(i, j0));
    out.phi_max = -min_psi0;

    double fbest = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.nodes_x(); ++i) {
            if (!g.is_independent(i, j)) continue;
            out.scatter.emplace_back(psi(i, j), f(i, j));
            if (f(i, j) > fbest) {
                fbest = f(i, j);
                out.psi_max_point = psi(i, j);
            }
        }
    out.psi_star = bgk_psi_star(beta, out.phi_max, out.psi_max_point);
    out.spread_metric = spread_metric(out.scatter, bins);
    return out;
}

void write_csv(std::ostream& os, const std::vector<VPDiagnostics>& series, double dt) {
    csv::header(os, {"step", "t", "picard_iters", "e_l1", "electric_energy", "plasma_energy",
                     "total_energy", "mass", "momentum", "entropy", "l2_norm"});
    for (const auto& d : series) {
        csv::Row(os) << static_cast<long>(std::llround(d.time / dt)) << d.time << d.picard_iters
                     << d.e_field_l1 << d.electric_energy << d.plasma_energy << d.total_energy
                     << d.mass << d.momentum << d.entropy << d.l2_norm;
    }
}

void write_csv(std::ostream& os, const BGKFit& fit) {
    csv::header(os, {"psi", "f"});
    for (const auto& [p, v] : fit.scatter) csv::Row(os) << p << v;
}

void write_snapshot_csv(std::ostream& os, const GridField& f, double x_offset) {
    const Grid& g = f.grid();
    csv::header(os, {"x", "v", "f"});
    for (int j = 0; j < g.nodes_y(); ++j)
        for (int i = 0; i < g.nodes_x(); ++i) csv::Row(os) << g.x(i) + x_offset << g.y(j) << f(i, j);
}

}  // namespace damm
