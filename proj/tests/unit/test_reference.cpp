#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "damm/circle_case.hpp"
#include "damm/reference.hpp"

using namespace damm;

namespace {

double max_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) m = std::max(m, std::abs(a[k] - b[k]));
    return m;
}

}  // namespace

TEST_CASE("implicit direct step with constant psi") {
    const Grid g(GridSpec{1.0, 1.0, 12, 12, BoundaryKind::FullyTruncated});
    const auto f0 = enforce_boundary(GridField::sample(g, GaussianPeak{}));
    const GridField psi(g, 2.5);
    const auto f1 = implicit_direct_step(f0, psi, 1e-3, 0.1);
    CHECK(max_diff(f1.values(), f0.values()) <= 1e-14);
    CHECK_THROWS_AS(implicit_direct_step(f0, psi, 0.0, 0.1), InvalidArgument);
    CHECK_THROWS_AS(implicit_direct_step(f0, psi, 1.0, 0.0), InvalidArgument);
}

TEST_CASE("implicit direct system loses conditioning as eps shrinks") {
    const Grid g(GridSpec{1.0, 1.0, 20, 20, BoundaryKind::FullyTruncated});
    const UnknownLayout layout(g);
    const auto psi = circle_stream_function(g);
    const double w = kDefaultLambda * 0.01;
    const auto k1 = condition_estimate(implicit_direct_matrix(psi, 1.0, w, layout));
    const auto k4 = condition_estimate(implicit_direct_matrix(psi, 1e-4, w, layout));
    CHECK(k1.kappa >= 1.0);
    CHECK(k4.kappa >= 100.0 * k1.kappa);
}

TEST_CASE("implicit direct and micro-macro agree at eps = 1") {
    CircleConfig c;
    c.grid = GridSpec{1.0, 1.0, 40, 40, BoundaryKind::FullyTruncated};
    c.epsilon = 1.0;
    c.steps = 10;
    const Grid g(c.grid);
    const auto psi = circle_stream_function(g);
    MMParams p;
    p.epsilon = 1.0;
    p.sigma = sigma_policy(c.sigma, c.grid);
    p.dt = c.dt;
    Dirk2Stepper mm(g, p);
    mm.set_psi(psi);
    GridField f_mm = enforce_boundary(GridField::sample(g, c.peak));
    GridField f_id = f_mm;
    for (int n = 0; n < c.steps; ++n) {
        f_mm = mm.step(f_mm).f;
        f_id = implicit_direct_step(f_id, psi, 1.0, c.dt);
    }
    const double t = c.steps * c.dt;
    const auto exact = GridField::sample(g, [&](double x, double y) { return exact_solution(t, x, y, 1.0, c.peak); });
    const double disc = discrete_norm(f_mm - exact, NormOrder::L2);
    const double gap = discrete_norm(f_mm - f_id, NormOrder::L2);
    CHECK(disc > 0.0);
    CHECK(gap <= 10.0 * disc);
}

TEST_CASE("periodic spline shifts") {
    const int n = 32;
    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = std::sin(2.0 * std::numbers::pi * i / n) + 0.3 * std::cos(6.0 * std::numbers::pi * i / n);

    SUBCASE("integer shifts are exact") {
        for (int s : {0, 1, 5, -3, 33}) {
            const auto out = shift_periodic_spline(y, s);
            for (int i = 0; i < n; ++i) CHECK(out[i] == y[((i - s) % n + n) % n]);
        }
    }
    SUBCASE("fractional shift converges at fourth order and keeps the sum") {
        double prev = 0.0;
        for (int m : {32, 64, 128}) {
            std::vector<double> z(m);
            for (int i = 0; i < m; ++i) z[i] = std::sin(2.0 * std::numbers::pi * i / m);
            const double shift = 2.37;
            const auto out = shift_periodic_spline(z, shift);
            double err = 0.0, s0 = 0.0, s1 = 0.0;
            for (int i = 0; i < m; ++i) {
                err = std::max(err, std::abs(out[i] - std::sin(2.0 * std::numbers::pi * (i - shift) / m)));
                s0 += z[i] + 1.0;
                s1 += out[i] + 1.0;
            }
            CHECK(std::abs(s1 - s0) <= 1e-12 * s0);
            if (prev > 0.0) CHECK(std::log2(prev / err) >= 3.7);
            prev = err;
        }
    }
}

TEST_CASE("natural spline shifts with zero inflow") {
    std::vector<double> y(21, 0.0);
    for (int j = 1; j < 20; ++j) y[j] = std::exp(-0.05 * (j - 10) * (j - 10));
    const auto s2 = shift_natural_spline(y, 2.0);
    for (int j = 0; j < 21; ++j) CHECK(s2[j] == (j >= 2 ? y[j - 2] : 0.0));
    const auto back = shift_natural_spline(y, -25.0);
    for (double v : back) CHECK(v == 0.0);
    const auto half = shift_natural_spline(y, 0.5);
    CHECK(half[10] == doctest::Approx(std::exp(-0.05 * 0.25)).epsilon(5e-3));
    const auto same = shift_natural_spline(y, 0.0);
    CHECK(max_diff(same, y) == 0.0);
}

TEST_CASE("semi-Lagrangian step") {
    VPConfig c;
    c.cells_x = 32;
    c.cells_v = 64;
    c.final_time = 1.0;
    c.dt = 0.1;
    SUBCASE("homogeneous data is stationary") {
        c.amplitude_gamma = 0.0;
        const auto f0 = initial_field(c);
        const auto r = semi_lagrangian_vp_step(f0, c);
        CHECK(max_diff(r.f.values(), f0.values()) <= 1e-14);
        for (double e : r.field.e) CHECK(std::abs(e) <= 1e-14);
    }
    SUBCASE("weak Landau run keeps mass and mirror symmetry") {
        c.amplitude_gamma = 0.01;
        double m0 = 0.0, worst_mass = 0.0, worst_mom = 0.0;
        const auto series = run_semi_lagrangian(c, [&](int n, const GridField& f, const PoissonSolution& field) {
            const auto d = diagnostics(f, field.e, n * c.dt, 0);
            if (n == 0) m0 = d.mass;
            worst_mass = std::max(worst_mass, std::abs(d.mass - m0) / m0);
            worst_mom = std::max(worst_mom, std::abs(d.momentum) / m0);
        });
        CHECK(series.size() == 11u);
        CHECK(worst_mass <= 1e-6);
        CHECK(worst_mom <= 1e-8);
        CHECK(series.back().e_field_l1 < series.front().e_field_l1);
    }
    SUBCASE("rejects eps other than one") {
        c.epsilon = 0.5;
        const auto f0 = initial_field(c);
        CHECK_THROWS_AS(semi_lagrangian_vp_step(f0, c), InvalidArgument);
    }
}
