#include "damm/reference.hpp"

#include <cmath>

namespace damm {

SparseMatrix implicit_direct_matrix(const GridField& psi, double epsilon, double stage_weight,
                                    const UnknownLayout& layout) {
    if (!(epsilon > 0.0)) throw InvalidArgument("implicit direct scheme needs epsilon > 0");
    if (!(psi.grid() == layout.grid())) throw InvalidArgument("implicit_direct_matrix: grid mismatch");
    SparseMatrix b = assemble_bracket_operator(psi, layout);
    SparseMatrix id(b.rows(), b.cols());
    id.setIdentity();
    SparseMatrix a = id + (stage_weight / epsilon) * b;
    a.makeCompressed();
    return a;
}

GridField implicit_direct_step(const GridField& f_n, const GridField& psi, double epsilon, double dt,
                               double linear_tol, int linear_max_iter) {
    require_same_grid(f_n, psi, "implicit_direct_step");
    if (!(dt > 0.0)) throw InvalidArgument("implicit_direct_step: dt must be positive");
    const UnknownLayout layout(f_n.grid());
    const double lambda = kDefaultLambda;
    StageSolver solver(linear_tol, linear_max_iter);
    solver.set_matrix(implicit_direct_matrix(psi, epsilon, lambda * dt, layout));

    const Vector fn = layout.gather(f_n);
    const Vector f1 = solver.solve(fn);
    const Vector rhs2 = fn + (1.0 - lambda) / lambda * (f1 - fn);
    return layout.scatter(solver.solve(rhs2));
}

namespace {

// Cubic between nodes k and k+1 at local offset t in [0, 1], given the
// second derivatives m (unit spacing).
double spline_value(double y0, double y1, double m0, double m1, double t) {
    const double s = 1.0 - t;
    return s * y0 + t * y1 + ((s * s * s - s) * m0 + (t * t * t - t) * m1) / 6.0;
}

}  // namespace

std::vector<double> shift_periodic_spline(std::span<const double> y, double shift) {
    const std::size_t n = y.size();
    if (n < 3) throw InvalidArgument("shift_periodic_spline needs at least 3 nodes");

    // Cyclic system m_{i-1} + 4 m_i + m_{i+1} = 6 (y_{i+1} - 2 y_i + y_{i-1}),
    // solved with the Sherman-Morrison correction of a tridiagonal sweep.
    std::vector<double> rhs(n);
    for (std::size_t i = 0; i < n; ++i)
        rhs[i] = 6.0 * (y[(i + 1) % n] - 2.0 * y[i] + y[(i + n - 1) % n]);
    const double gamma = -4.0;
    std::vector<double> diag(n, 4.0);
    diag[0] -= gamma;
    diag[n - 1] -= 1.0 / gamma;
    auto thomas = [&](std::vector<double> d) {
        std::vector<double> c(n), x(n);
        double b = diag[0];
        c[0] = 1.0 / b;
        d[0] /= b;
        for (std::size_t i = 1; i < n; ++i) {
            b = diag[i] - c[i - 1];
            c[i] = 1.0 / b;
            d[i] = (d[i] - d[i - 1]) / b;
        }
        x[n - 1] = d[n - 1];
        for (std::size_t i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
        return x;
    };
    std::vector<double> u(n, 0.0);
    u[0] = gamma;
    u[n - 1] = 1.0;
    const std::vector<double> x = thomas(rhs);
    const std::vector<double> z = thomas(u);
    const double vx = x[0] + x[n - 1] / gamma;
    const double vz = z[0] + z[n - 1] / gamma;
    std::vector<double> m(n);
    for (std::size_t i = 0; i < n; ++i) m[i] = x[i] - vx / (1.0 + vz) * z[i];

    const double whole = std::floor(shift);
    const double t = 1.0 - (shift - whole);  // departure i - shift = (i - whole - 1) + t
    const long base = static_cast<long>(whole) + 1;
    const long ln = static_cast<long>(n);
    std::vector<double> out(n);
    for (long i = 0; i < ln; ++i) {
        const long k = (((i - base) % ln) + ln) % ln;
        const long k1 = (k + 1) % ln;
        out[static_cast<std::size_t>(i)] =
            t == 1.0 ? y[static_cast<std::size_t>(k1)]
                     : spline_value(y[static_cast<std::size_t>(k)], y[static_cast<std::size_t>(k1)],
                                    m[static_cast<std::size_t>(k)], m[static_cast<std::size_t>(k1)], t);
    }
    return out;
}

std::vector<double> shift_natural_spline(std::span<const double> y, double shift) {
    const std::size_t n = y.size();
    if (n < 3) throw InvalidArgument("shift_natural_spline needs at least 3 nodes");

    // Interior equations m_{j-1} + 4 m_j + m_{j+1} = 6 (second difference), m_0 = m_{n-1} = 0.
    std::vector<double> m(n, 0.0);
    const std::size_t k = n - 2;
    std::vector<double> c(k), d(k);
    for (std::size_t r = 0; r < k; ++r) d[r] = 6.0 * (y[r + 2] - 2.0 * y[r + 1] + y[r]);
    double b = 4.0;
    c[0] = 1.0 / b;
    d[0] /= b;
    for (std::size_t r = 1; r < k; ++r) {
        b = 4.0 - c[r - 1];
        c[r] = 1.0 / b;
        d[r] = (d[r] - d[r - 1]) / b;
    }
    m[k] = d[k - 1];
    for (std::size_t r = k - 1; r-- > 0;) m[r + 1] = d[r] - c[r] * m[r + 2];

    const double whole = std::floor(shift);
    const double frac = shift - whole;
    const long ln = static_cast<long>(n);
    std::vector<double> out(n, 0.0);
    for (long j = 0; j < ln; ++j) {
        if (frac == 0.0) {
            const long src = j - static_cast<long>(whole);
            if (src >= 0 && src < ln) out[static_cast<std::size_t>(j)] = y[static_cast<std::size_t>(src)];
            continue;
        }
        const long lo = j - static_cast<long>(whole) - 1;
        if (lo < 0 || lo + 1 >= ln) continue;
        const auto a = static_cast<std::size_t>(lo);
        out[static_cast<std::size_t>(j)] = spline_value(y[a], y[a + 1], m[a], m[a + 1], 1.0 - frac);
    }
    return out;
}

namespace {

void shift_x(GridField& f, double dt) {
    const Grid& g = f.grid();
    const int nx = g.cells_x();
    std::vector<double> row(static_cast<std::size_t>(nx));
    for (int j = 0; j < g.nodes_y(); ++j) {
        for (int i = 0; i < nx; ++i) row[static_cast<std::size_t>(i)] = f(i, j);
        const auto shifted = shift_periodic_spline(row, g.y(j) * dt / g.dx());
        for (int i = 0; i < nx; ++i) f(i, j) = shifted[static_cast<std::size_t>(i)];
    }
    enforce_boundary_in_place(f);
}

void shift_v(GridField& f, std::span<const double> e, double dt) {
    const Grid& g = f.grid();
    std::vector<double> col(static_cast<std::size_t>(g.nodes_y()));
    for (int i = 0; i < g.cells_x(); ++i) {
        for (int j = 0; j < g.nodes_y(); ++j) col[static_cast<std::size_t>(j)] = f(i, j);
        // dv/dt = -E, so the foot of the characteristic sits at v + E dt.
        const auto shifted = shift_natural_spline(col, -e[static_cast<std::size_t>(i)] * dt / g.dy());
        for (int j = 0; j < g.nodes_y(); ++j) f(i, j) = shifted[static_cast<std::size_t>(j)];
    }
    enforce_boundary_in_place(f);
}

}  // namespace

SLStepResult semi_lagrangian_vp_step(const GridField& f_n, const VPConfig& config) {
    validate(config);
    if (config.epsilon != 1.0) throw InvalidArgument("semi-Lagrangian reference runs at epsilon = 1 only");
    if (!(f_n.grid() == Grid(vp_grid_spec(config))))
        throw InvalidArgument("semi_lagrangian_vp_step: field grid does not match config");
    const Grid& g = f_n.grid();
    GridField f = f_n;
    shift_x(f, 0.5 * config.dt);
    const auto mid = poisson_solve_periodic(electron_density(f), g.dx());
    shift_v(f, mid.e, config.dt);
    shift_x(f, 0.5 * config.dt);
    auto field = poisson_solve_periodic(electron_density(f), g.dx());
    return SLStepResult{std::move(f), std::move(field)};
}

std::vector<VPDiagnostics> run_semi_lagrangian(
    const VPConfig& config,
    const std::function<void(int, const GridField&, const PoissonSolution&)>& observer) {
    GridField f = initial_field(config);
    PoissonSolution field = poisson_solve_periodic(electron_density(f), f.grid().dx());
    std::vector<VPDiagnostics> out;
    out.push_back(diagnostics(f, field.e, 0.0, 0));
    if (observer) observer(0, f, field);
    for (int n = 1; n <= config.steps(); ++n) {
        auto r = semi_lagrangian_vp_step(f, config);
        f = std::move(r.f);
        field = std::move(r.field);
        out.push_back(diagnostics(f, field.e, n * config.dt, 0));
        if (observer) observer(n, f, field);
    }
    return out;
}

}  // namespace damm
