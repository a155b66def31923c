#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "damm/bracket.hpp"

using namespace damm;

namespace {

GridField random_field(const Grid& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    GridField f(g);
    for (double& v : f.values()) v = d(rng);
    return enforce_boundary(f);
}

// Textbook form: average of the three second-order Jacobians J++, J+x, Jx+.
double jacobian_oracle(const GridField& u, const GridField& v, int i, int j) {
    auto U = [&](int a, int b) { return ghost_value(u, i + a, j + b); };
    auto V = [&](int a, int b) { return ghost_value(v, i + a, j + b); };
    const double jpp = (U(1, 0) - U(-1, 0)) * (V(0, 1) - V(0, -1)) -
                       (U(0, 1) - U(0, -1)) * (V(1, 0) - V(-1, 0));
    const double jpx = U(1, 0) * (V(1, 1) - V(1, -1)) - U(-1, 0) * (V(-1, 1) - V(-1, -1)) -
                       U(0, 1) * (V(1, 1) - V(-1, 1)) + U(0, -1) * (V(1, -1) - V(-1, -1));
    const double jxp = V(0, 1) * (U(1, 1) - U(-1, 1)) - V(0, -1) * (U(1, -1) - U(-1, -1)) -
                       V(1, 0) * (U(1, 1) - U(1, -1)) + V(-1, 0) * (U(-1, 1) - U(-1, -1));
    const Grid& g = u.grid();
    return (jpp + jpx + jxp) / (12.0 * g.dx() * g.dy());
}

double max_abs(const GridField& f) {
    double m = 0.0;
    for (double v : f.values()) m = std::max(m, std::abs(v));
    return m;
}

const BoundaryKind kAllKinds[] = {BoundaryKind::FullyTruncated, BoundaryKind::PeriodicX,
                                  BoundaryKind::Periodic};

}  // namespace

TEST_CASE("stencil agrees with the three-Jacobian average") {
    for (auto b : kAllKinds) {
        const Grid g(GridSpec{1.0, 2.0, 7, 9, b});
        const GridField u = random_field(g, 11);
        const GridField v = random_field(g, 12);
        const GridField j = arakawa_bracket(u, v);
        for (int jj = 0; jj <= g.cells_y(); ++jj)
            for (int ii = 0; ii <= g.cells_x(); ++ii) {
                if (!g.is_independent(ii, jj)) continue;
                CHECK(j(ii, jj) == doctest::Approx(jacobian_oracle(u, v, ii, jj)).epsilon(1e-12));
            }
    }
}

TEST_CASE("bracket of a field with itself or a constant vanishes") {
    for (auto b : kAllKinds) {
        const Grid g(GridSpec{1.0, 1.0, 10, 10, b});
        const GridField u = random_field(g, 5);
        const double scale = max_abs(u) * max_abs(u) / (g.dx() * g.dy());
        CHECK(max_abs(arakawa_bracket(u, u)) <= 1e-14 * scale);
        CHECK(max_abs(arakawa_bracket(u, GridField(g, 3.5))) <= 1e-14 * scale * 3.5);
    }
}

TEST_CASE("bracket is antisymmetric and bilinear") {
    for (auto b : kAllKinds) {
        const Grid g(GridSpec{1.0, 1.0, 12, 10, b});
        for (unsigned s = 0; s < 5; ++s) {
            const GridField u = random_field(g, 10 * s + 1);
            const GridField v = random_field(g, 10 * s + 2);
            const GridField w = random_field(g, 10 * s + 3);
            const GridField uv = arakawa_bracket(u, v);
            const double scale = max_abs(uv);
            CHECK(max_abs(uv + arakawa_bracket(v, u)) <= 1e-13 * scale);

            const double a = 0.7, c = -1.3;
            const GridField lhs = arakawa_bracket(a * u + c * w, v);
            const GridField rhs = a * uv + c * arakawa_bracket(w, v);
            CHECK(max_abs(lhs - rhs) <= 1e-13 * scale);
            const GridField lhs2 = arakawa_bracket(u, a * v + c * w);
            const GridField rhs2 = a * uv + c * arakawa_bracket(u, w);
            CHECK(max_abs(lhs2 - rhs2) <= 1e-13 * scale);
        }
    }
}

TEST_CASE("discrete conservation sums on the periodic grid") {
    const Grid g(GridSpec{1.0, 1.0, 16, 16, BoundaryKind::Periodic});
    for (unsigned s = 0; s < 5; ++s) {
        const GridField u = random_field(g, 100 + s);
        const GridField v = random_field(g, 200 + s);
        const GridField j = arakawa_bracket(u, v);
        double sum = 0.0, su = 0.0, sv = 0.0, abs_j = 0.0, abs_u = 0.0, abs_v = 0.0;
        for (int jj = 0; jj < g.cells_y(); ++jj)
            for (int ii = 0; ii < g.cells_x(); ++ii) {
                sum += j(ii, jj);
                su += u(ii, jj) * j(ii, jj);
                sv += v(ii, jj) * j(ii, jj);
                abs_j += std::abs(j(ii, jj));
                abs_u += std::abs(u(ii, jj) * j(ii, jj));
                abs_v += std::abs(v(ii, jj) * j(ii, jj));
            }
        CHECK(std::abs(sum) <= 1e-12 * abs_j);
        CHECK(std::abs(su) <= 1e-12 * abs_u);
        CHECK(std::abs(sv) <= 1e-12 * abs_v);
    }
}

TEST_CASE("bracket rejects fields on different grids") {
    const GridField a(Grid(GridSpec{1.0, 1.0, 8, 8}));
    const GridField b(Grid(GridSpec{1.0, 1.0, 8, 10}));
    CHECK_THROWS_AS(arakawa_bracket(a, b), InvalidArgument);
}

namespace {

template <typename U, typename V, typename J>
std::vector<double> bracket_errors(BoundaryKind kind, U u_fn, V v_fn, J exact) {
    std::vector<double> errs;
    for (int n : {32, 64, 128}) {
        const Grid g(GridSpec{1.0, 1.0, n, n, kind});
        const GridField u = GridField::sample(g, u_fn);
        const GridField v = GridField::sample(g, v_fn);
        const GridField j = arakawa_bracket(u, v);
        double e = 0.0;
        for (int jj = 0; jj <= n; ++jj)
            for (int ii = 0; ii <= n; ++ii)
                if (g.is_independent(ii, jj))
                    e = std::max(e, std::abs(j(ii, jj) - exact(g.x(ii), g.y(jj))));
        errs.push_back(e);
    }
    return errs;
}

}  // namespace

TEST_CASE("second-order convergence to the analytic bracket") {
    const double pi = M_PI;
    SUBCASE("sin sin against cos cos, x-periodic") {
        const auto e = bracket_errors(
            BoundaryKind::PeriodicX,
            [=](double x, double y) { return std::sin(pi * x) * std::sin(pi * y); },
            [=](double x, double y) { return std::cos(pi * x) * std::cos(pi * y); },
            [=](double x, double y) {
                const double sx = std::sin(pi * x), cx = std::cos(pi * x);
                const double sy = std::sin(pi * y), cy = std::cos(pi * y);
                return pi * pi * (sx * sx * cy * cy - cx * cx * sy * sy);
            });
        for (std::size_t k = 1; k < e.size(); ++k) {
            const double ratio = e[k - 1] / e[k];
            CHECK(ratio >= 4.0 * 0.8);
            CHECK(ratio <= 4.0 * 1.2);
            CHECK(std::log2(ratio) >= 1.9);
        }
    }
    SUBCASE("mixed modes, doubly periodic") {
        const auto e = bracket_errors(
            BoundaryKind::Periodic,
            [=](double x, double y) { return std::sin(pi * x) * std::cos(2 * pi * y) + std::cos(pi * y); },
            [=](double x, double y) { return std::cos(pi * x + pi * y); },
            [=](double x, double y) {
                return pi * pi *
                       (-std::sin(pi * y) - 1.5 * std::cos(pi * (x - 2 * y)) +
                        0.5 * std::cos(pi * (x + 2 * y))) *
                       std::sin(pi * (x + y));
            });
        for (std::size_t k = 1; k < e.size(); ++k) CHECK(std::log2(e[k - 1] / e[k]) >= 1.9);
    }
}
