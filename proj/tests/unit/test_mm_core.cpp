#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "damm/bracket.hpp"
#include "damm/mm_core.hpp"

using namespace damm;

namespace {

GridField random_field(const Grid& g, unsigned seed) {
    std::mt19937 rng(seed);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    GridField f(g);
    for (double& v : f.values()) v = d(rng);
    return enforce_boundary(f);
}

GridField circle_psi(const Grid& g) {
    return GridField::sample(g, [](double x, double y) { return 0.5 * (x * x + y * y); });
}

GridField offset_gaussian(const Grid& g) {
    return enforce_boundary(GridField::sample(g, [](double x, double y) {
        const double r2 = (x - 0.5) * (x - 0.5) + (y - 0.5) * (y - 0.5);
        return std::exp(-r2 / (2.0 * 0.05 * 0.05));
    }));
}

MMParams params_for(double eps, double sigma, double dt) {
    MMParams p;
    p.epsilon = eps;
    p.sigma = sigma;
    p.dt = dt;
    return p;
}

double max_diff(const GridField& a, const GridField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.values().size(); ++k)
        m = std::max(m, std::abs(a.values()[k] - b.values()[k]));
    return m;
}

}  // namespace

TEST_CASE("parameter validation") {
    MMParams p;
    CHECK_NOTHROW(validate(p));
    CHECK(p.lambda == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)));
    p.sigma = 0.0;
    CHECK_THROWS_AS(validate(p), InvalidArgument);
    p.sigma = -1e-3;
    CHECK_THROWS_AS(validate(p), InvalidArgument);
    p = MMParams{};
    p.epsilon = -1.0;
    CHECK_THROWS_AS(validate(p), InvalidArgument);
    p = MMParams{};
    p.dt = 0.0;
    CHECK_THROWS_AS(validate(p), InvalidArgument);

    const Grid g(GridSpec{1.0, 1.0, 6, 6});
    GridField psi = circle_psi(g);
    psi(2, 3) = std::nan("");
    CHECK_THROWS_AS(assemble_stage_system(psi, MMParams{}, 0.01), InvalidArgument);
    MMParams bad;
    bad.sigma = 0.0;
    CHECK_THROWS_AS(assemble_stage_system(circle_psi(g), bad, 0.01), InvalidArgument);
}

TEST_CASE("unknown layout") {
    const Grid t(GridSpec{1.0, 1.0, 5, 7});
    const Grid p(GridSpec{1.0, 1.0, 5, 7, BoundaryKind::PeriodicX});
    const UnknownLayout lt(t), lp(p);
    CHECK(lt.size() == 4 * 6);
    CHECK(lp.size() == 5 * 6);
    CHECK(lt.index(0, 3) == -1);
    CHECK(lt.index(1, 1) == 0);
    CHECK(lt.index(2, 1) == 1);
    CHECK(lp.index(5, 2) == lp.index(0, 2));
    CHECK(lp.index(-1, 2) == lp.index(4, 2));
    CHECK(lp.index(2, 0) == -1);

    const GridField f = random_field(p, 4);
    const GridField back = lp.scatter(lp.gather(f));
    CHECK(max_diff(f, back) == 0.0);
}

TEST_CASE("assembled system matches direct evaluation of the stage equations") {
    for (auto kind : {BoundaryKind::FullyTruncated, BoundaryKind::PeriodicX}) {
        const Grid g(GridSpec{1.0, 1.0, 5, 5, kind});
        const GridField psi = random_field(g, 21);
        const MMParams p = params_for(0.3, 0.07, 0.1);
        const double w = 0.04;
        const LinearSystem sys = assemble_stage_system(psi, p, w);
        const UnknownLayout& lay = *sys.layout;
        CHECK(sys.dimension() == 2 * lay.size());

        const GridField f = random_field(g, 22);
        const GridField q = random_field(g, 23);
        Vector x(static_cast<Eigen::Index>(sys.dimension()));
        const auto n = static_cast<Eigen::Index>(lay.size());
        x.head(n) = lay.gather(f);
        x.tail(n) = lay.gather(q);
        const Vector y = sys.matrix * x;

        const GridField row_f = f + w * arakawa_bracket(q, psi);
        const GridField row_q =
            arakawa_bracket(f, psi) - p.epsilon * arakawa_bracket(q, psi) + p.sigma * q;
        const Vector expect_f = lay.gather(row_f);
        const Vector expect_q = lay.gather(row_q);
        CHECK((y.head(n) - expect_f).norm() <= 1e-13 * expect_f.norm());
        CHECK((y.tail(n) - expect_q).norm() <= 1e-13 * expect_q.norm());

        for (Eigen::Index r = 0; r < sys.matrix.rows(); ++r) CHECK(sys.matrix.row(r).norm() > 0.0);
    }
}

TEST_CASE("bracket operator is skew-symmetric on the unknowns") {
    for (auto kind : {BoundaryKind::FullyTruncated, BoundaryKind::PeriodicX}) {
        const Grid g(GridSpec{1.0, 1.0, 9, 8, kind});
        const UnknownLayout lay(g);
        const SparseMatrix b = assemble_bracket_operator(random_field(g, 31), lay);
        const SparseMatrix sum = b + SparseMatrix(b.transpose());
        CHECK(sum.norm() <= 1e-13 * b.norm());
    }
}

TEST_CASE("constant stream function decouples the blocks") {
    const Grid g(GridSpec{1.0, 1.0, 8, 8});
    const MMParams p = params_for(1.0, 1e-3, 0.1);
    const LinearSystem sys = assemble_stage_system(GridField(g, 2.0), p, 0.05);
    const auto n = static_cast<Eigen::Index>(sys.layout->size());
    CHECK(sys.matrix.nonZeros() == 2 * n);
    const Vector rhs_f = sys.layout->gather(random_field(g, 3));
    Vector rhs = Vector::Zero(2 * n);
    rhs.head(n) = rhs_f;
    const Vector x = solve_stage(sys, rhs, p);
    CHECK((x.head(n) - rhs_f).norm() <= 1e-14 * rhs_f.norm());
    CHECK(x.tail(n).norm() == 0.0);

    const GridField f0 = random_field(g, 9);
    const MMState s = dirk2_step(f0, GridField(g, -1.0), p);
    CHECK(max_diff(s.f, f0) <= 1e-12);
    for (double v : s.q.values()) CHECK(v == 0.0);
}

TEST_CASE("identity and small dense systems") {
    MMParams p;
    LinearSystem id;
    id.matrix.resize(6, 6);
    id.matrix.setIdentity();
    Vector b(6);
    b << 1, -2, 3, 0.5, 0, 7;
    CHECK((solve_stage(id, b, p) - b).norm() == doctest::Approx(0.0));

    Eigen::Matrix4d a;
    a << 4, 1, 0, 0.5, -1, 5, 1, 0, 0.2, 0, 3, -1, 1, 0.3, 0, 6;
    LinearSystem s4;
    s4.matrix = a.sparseView();
    Eigen::Vector4d rhs(1.0, 2.0, -3.0, 0.25);
    const Vector oracle = a.partialPivLu().solve(rhs);
    const Vector x = solve_stage(s4, rhs, p);
    CHECK((x - oracle).norm() <= 10.0 * p.linear_tol * oracle.norm());
    CHECK((solve_stage_dense(s4, rhs) - oracle).norm() <= 1e-14 * oracle.norm());
}

TEST_CASE("stage solve meets the residual contract and the dense oracle") {
    const Grid g(GridSpec{1.0, 1.0, 16, 16});
    const MMParams p = params_for(1e-3, g.dx() * g.dx(), 0.05);
    const LinearSystem sys = assemble_stage_system(circle_psi(g), p, p.lambda * p.dt);
    const auto n = static_cast<Eigen::Index>(sys.layout->size());
    Vector rhs = Vector::Zero(2 * n);
    rhs.head(n) = sys.layout->gather(offset_gaussian(g));
    const Vector x = solve_stage(sys, rhs, p);
    CHECK((sys.matrix * x - rhs).norm() <= p.linear_tol * rhs.norm());
    const Vector oracle = solve_stage_dense(sys, rhs);
    CHECK((x.head(n) - oracle.head(n)).norm() <= 1e-8 * oracle.head(n).norm());
}

TEST_CASE("singular stage matrix reports solver failure") {
    LinearSystem s;
    s.matrix.resize(3, 3);
    s.matrix.insert(0, 0) = 1.0;
    s.matrix.insert(1, 1) = 1.0;
    s.matrix.insert(2, 1) = 1.0;
    Vector b = Vector::Ones(3);
    CHECK_THROWS_AS(solve_stage(s, b, MMParams{}), SolverFailure);
}

TEST_CASE("lagged factorisation still meets the tolerance") {
    const Grid g(GridSpec{1.0, 1.0, 24, 24});
    const MMParams p = params_for(1.0, g.dx() * g.dx(), 0.05);
    Dirk2Stepper stepper(g, p);
    const GridField psi = circle_psi(g);
    const GridField f0 = offset_gaussian(g);
    stepper.set_psi(psi);
    const MMState first = stepper.step(f0);

    GridField psi2 = psi;
    psi2 *= 1.02;
    stepper.set_psi(psi2);
    const MMState lagged = stepper.step(f0);
    const MMState fresh = dirk2_step(f0, psi2, p);
    CHECK(stepper.solver().last_residual() <= p.linear_tol);
    CHECK(max_diff(lagged.f, fresh.f) <= 1e-8);
    CHECK(max_diff(first.f, fresh.f) > 1e-6);
}

TEST_CASE("DIRK2 local time error is third order") {
    // Reference: the same semi-discrete system integrated with many small steps.
    const Grid g(GridSpec{1.0, 1.0, 32, 32});
    const GridField psi = circle_psi(g);
    const GridField f0 = offset_gaussian(g);
    std::vector<double> err;
    for (double dt : {0.05, 0.025}) {
        const MMParams p = params_for(1.0, g.dx() * g.dx(), dt);
        const MMState one = dirk2_step(f0, psi, p);
        MMParams fine = p;
        fine.dt = dt / 128;
        Dirk2Stepper ref(g, fine);
        ref.set_psi(psi);
        GridField r = f0;
        for (int k = 0; k < 128; ++k) r = ref.step(r).f;
        err.push_back(discrete_norm(one.f - r, NormOrder::L2));
    }
    const double ratio = err[0] / err[1];
    CHECK(ratio >= 8.0 * 0.7);
    CHECK(ratio <= 8.0 * 1.3);
}

TEST_CASE("implicit Euler does not increase the L2 norm") {
    const Grid g(GridSpec{1.0, 1.0, 12, 12});
    const GridField psi = circle_psi(g);
    int seed = 0;
    for (double eps : {0.0, 1e-3, 1.0})
        for (double sigma : {g.dx(), g.dx() * g.dx()}) {
            const MMParams p = params_for(eps, sigma, 0.1);
            for (int r = 0; r < 5; ++r) {
                const GridField f = random_field(g, 500 + seed++);
                const MMState s = backward_euler_step(f, psi, p);
                const double before = discrete_norm(f, NormOrder::L2);
                CHECK(discrete_norm(s.f, NormOrder::L2) <= before * (1.0 + 10.0 * p.linear_tol));
            }
        }
}

TEST_CASE("implicit Euler against the dense oracle and on constants") {
    const Grid g(GridSpec{1.0, 1.0, 5, 5});
    const GridField psi = random_field(g, 77);
    const MMParams p = params_for(0.1, 0.02, 0.2);
    const GridField f = random_field(g, 78);
    const MMState s = backward_euler_step(f, psi, p);
    const LinearSystem sys = assemble_stage_system(psi, p, p.dt);
    const auto n = static_cast<Eigen::Index>(sys.layout->size());
    Vector rhs = Vector::Zero(2 * n);
    rhs.head(n) = sys.layout->gather(f);
    const Vector oracle = solve_stage_dense(sys, rhs);
    CHECK((sys.layout->gather(s.f) - oracle.head(n)).norm() <= 1e-9 * oracle.norm());
    CHECK((sys.layout->gather(s.q) - oracle.tail(n)).norm() <= 1e-9 * oracle.norm());

    const Grid per(GridSpec{1.0, 1.0, 8, 8, BoundaryKind::Periodic});
    const GridField c(per, 1.5);
    const MMState sc = backward_euler_step(c, random_field(per, 79), p);
    CHECK(max_diff(sc.f, c) <= 1e-12);
}

TEST_CASE("solution is continuous as epsilon goes to zero") {
    const Grid g(GridSpec{1.0, 1.0, 20, 20});
    const GridField psi = circle_psi(g);
    const GridField f0 = offset_gaussian(g);
    MMParams p = params_for(0.0, g.dx() * g.dx(), 0.01);
    p.linear_tol = 1e-12;
    const MMState s0 = dirk2_step(f0, psi, p);
    p.epsilon = 1e-8;
    const MMState s8 = dirk2_step(f0, psi, p);
    CHECK(discrete_norm(s8.f - s0.f, NormOrder::L2) <= 1e-6 * discrete_norm(s0.f, NormOrder::L2));
}

TEST_CASE("stepping is bit-reproducible") {
    const Grid g(GridSpec{1.0, 1.0, 20, 20, BoundaryKind::PeriodicX});
    const GridField psi = random_field(g, 8);
    const GridField f0 = random_field(g, 9);
    const MMParams p = params_for(1e-2, g.dx(), 0.05);
    const MMState a = dirk2_step(f0, psi, p);
    const MMState b = dirk2_step(f0, psi, p);
    for (std::size_t k = 0; k < g.node_count(); ++k) {
        CHECK(a.f.values()[k] == b.f.values()[k]);
        CHECK(a.q.values()[k] == b.q.values()[k]);
    }
}

TEST_CASE("condition estimates of known matrices") {
    SparseMatrix id(7, 7);
    id.setIdentity();
    CHECK(condition_estimate(id).kappa == doctest::Approx(1.0).epsilon(1e-6));

    SparseMatrix d(10, 10);
    for (int k = 0; k < 10; ++k) d.insert(k, k) = k + 1.0;
    const ConditionEstimate e = condition_estimate(d);
    CHECK(std::abs(e.kappa - 10.0) <= 1e-4);
    CHECK(e.iterations <= 30);
}

TEST_CASE("stage-system conditioning is insensitive to epsilon") {
    const Grid g(GridSpec{1.0, 1.0, 20, 20});
    const GridField psi = circle_psi(g);
    double k[2];
    int idx = 0;
    for (double eps : {1.0, 1e-6}) {
        const MMParams p = params_for(eps, g.dx() * g.dx(), 0.01);
        k[idx++] = condition_estimate(assemble_stage_system(psi, p, p.lambda * p.dt), p).kappa;
    }
    CHECK(k[0] > 1.0);
    CHECK(std::abs(std::log10(k[0] / k[1])) < 1.0);
}

TEST_CASE("sigma policies") {
    const GridSpec s{1.0, 1.0, 200, 200};
    CHECK(sigma_policy({SigmaKind::DxSquared}, s) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(sigma_policy({SigmaKind::Dx}, GridSpec{1.0, 1.0, 40, 40}) == doctest::Approx(0.05));
    const GridSpec vp{2.0 * M_PI, 10.0, 256, 256, BoundaryKind::PeriodicX};
    CHECK(sigma_policy({SigmaKind::ScaledDxSquared}, vp) ==
          doctest::Approx((2.0 / 256) * (2.0 / 256)).epsilon(1e-12));
    CHECK(sigma_policy({SigmaKind::Fixed, 3e-3}, s) == 3e-3);
    CHECK_THROWS_AS(sigma_policy({SigmaKind::Fixed, 0.0}, s), InvalidArgument);
    for (auto k : {SigmaKind::DxSquared, SigmaKind::Dx, SigmaKind::ScaledDxSquared, SigmaKind::Fixed})
        CHECK(sigma_kind_from_string(to_string(k)) == k);
    CHECK_THROWS_AS(sigma_kind_from_string("dx3"), InvalidArgument);
}
