#include "damm/mm_core.hpp"

#include <algorithm>
#include <random>

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <Eigen/UmfPackSupport>

#include "damm/bracket.hpp"

namespace damm {

void validate(const MMParams& p) {
    if (!(p.sigma > 0.0) || !std::isfinite(p.sigma))
        throw InvalidArgument("sigma must be strictly positive");
    if (!(p.epsilon >= 0.0) || !std::isfinite(p.epsilon))
        throw InvalidArgument("epsilon must be non-negative");
    if (!(p.dt > 0.0) || !std::isfinite(p.dt)) throw InvalidArgument("dt must be positive");
    if (!(p.lambda > 0.0) || !(p.lambda <= 1.0))
        throw InvalidArgument("DIRK coefficient lambda must lie in (0, 1]");
    if (!(p.linear_tol > 0.0)) throw InvalidArgument("linear_tol must be positive");
    if (p.linear_max_iter < 1) throw InvalidArgument("linear_max_iter must be at least 1");
}

// ---------------------------------------------------------------------------
// Unknown layout

UnknownLayout::UnknownLayout(const Grid& grid)
    : grid_(grid), index_of_node_(grid.node_count(), -1) {
    for (int j = 0; j < grid.nodes_y(); ++j) {
        for (int i = 0; i < grid.nodes_x(); ++i) {
            if (!grid.is_independent(i, j)) continue;
            index_of_node_[grid.index(i, j)] = static_cast<long>(nodes_.size());
            nodes_.push_back({i, j});
        }
    }
}

long UnknownLayout::index(int i, int j) const noexcept {
    if (!wrap_node(grid_, i, j)) return -1;
    return index_of_node_[grid_.index(i, j)];
}

Vector UnknownLayout::gather(const GridField& field) const {
    if (!(field.grid() == grid_)) throw InvalidArgument("gather: field on a different grid");
    Vector out(static_cast<Eigen::Index>(nodes_.size()));
    for (std::size_t k = 0; k < nodes_.size(); ++k)
        out[static_cast<Eigen::Index>(k)] = field(nodes_[k][0], nodes_[k][1]);
    return out;
}

GridField UnknownLayout::scatter(const Vector& x, std::size_t block) const {
    const auto n = static_cast<Eigen::Index>(nodes_.size());
    if (x.size() < n * static_cast<Eigen::Index>(block + 1))
        throw InvalidArgument("scatter: vector too short for requested block");
    GridField out(grid_);
    const Eigen::Index offset = n * static_cast<Eigen::Index>(block);
    for (std::size_t k = 0; k < nodes_.size(); ++k)
        out(nodes_[k][0], nodes_[k][1]) = x[offset + static_cast<Eigen::Index>(k)];
    enforce_boundary_in_place(out);
    return out;
}

// ---------------------------------------------------------------------------
// Assembly

namespace {

void check_psi(const GridField& psi) {
    if (!psi.all_finite()) throw InvalidArgument("stream function contains NaN or Inf");
}

void append_bracket_triplets(const GridField& psi, const UnknownLayout& layout,
                             Eigen::Index row_offset, Eigen::Index col_offset, double scale,
                             std::vector<Eigen::Triplet<double>>& out) {
    for (std::size_t k = 0; k < layout.size(); ++k) {
        const auto [i, j] = layout.node(k);
        const auto c = arakawa_coefficients(psi, i, j);
        for (std::size_t m = 0; m < 8; ++m) {
            const long col = layout.index(i + kArakawaOffsets[m][0], j + kArakawaOffsets[m][1]);
            if (col < 0 || c[m] == 0.0) continue;
            out.emplace_back(row_offset + static_cast<Eigen::Index>(k), col_offset + col,
                             scale * c[m]);
        }
    }
}

}  // namespace

SparseMatrix assemble_bracket_operator(const GridField& psi, const UnknownLayout& layout) {
    check_psi(psi);
    if (!(psi.grid() == layout.grid())) throw InvalidArgument("psi and layout grids differ");
    const auto n = static_cast<Eigen::Index>(layout.size());
    std::vector<Eigen::Triplet<double>> triplets;
    triplets.reserve(layout.size() * 8);
    append_bracket_triplets(psi, layout, 0, 0, 1.0, triplets);
    SparseMatrix b(n, n);
    b.setFromTriplets(triplets.begin(), triplets.end());
    return b;
}

LinearSystem assemble_stage_system(const GridField& psi, const MMParams& params,
                                   double stage_weight,
                                   std::shared_ptr<const UnknownLayout> layout) {
    validate(params);
    check_psi(psi);
    if (!layout || !(layout->grid() == psi.grid()))
        throw InvalidArgument("assemble_stage_system: layout does not match psi grid");
    const auto n = static_cast<Eigen::Index>(layout->size());
    std::vector<Eigen::Triplet<double>> t;
    t.reserve(layout->size() * 34);
    for (Eigen::Index k = 0; k < n; ++k) {
        t.emplace_back(k, k, 1.0);
        t.emplace_back(n + k, n + k, params.sigma);
    }
    append_bracket_triplets(psi, *layout, 0, n, stage_weight, t);
    append_bracket_triplets(psi, *layout, n, 0, 1.0, t);
    if (params.epsilon != 0.0) append_bracket_triplets(psi, *layout, n, n, -params.epsilon, t);
    LinearSystem sys;
    sys.matrix.resize(2 * n, 2 * n);
    sys.matrix.setFromTriplets(t.begin(), t.end());
    sys.matrix.makeCompressed();
    sys.layout = std::move(layout);
    return sys;
}

LinearSystem assemble_stage_system(const GridField& psi, const MMParams& params,
                                   double stage_weight) {
    return assemble_stage_system(psi, params, stage_weight,
                                 std::make_shared<const UnknownLayout>(psi.grid()));
}

// ---------------------------------------------------------------------------
// Stage solver

// UmfPackLU keeps pointers into the factored matrix, so the factors own a copy.
struct StageSolver::Factorization {
    SparseMatrix matrix;
    Eigen::UmfPackLU<SparseMatrix> lu;
};

StageSolver::StageSolver(double tol, int max_iter, int refactor_after)
    : tol_(tol), max_iter_(max_iter), refactor_after_(std::max(1, refactor_after)) {
    if (!(tol > 0.0)) throw InvalidArgument("solver tolerance must be positive");
    if (max_iter < 1) throw InvalidArgument("solver iteration cap must be at least 1");
}

StageSolver::~StageSolver() = default;
StageSolver::StageSolver(StageSolver&&) noexcept = default;
StageSolver& StageSolver::operator=(StageSolver&&) noexcept = default;

void StageSolver::set_matrix(const SparseMatrix& matrix) {
    if (matrix.rows() != matrix.cols()) throw InvalidArgument("stage matrix must be square");
    if (lu_ && matrix.rows() != matrix_.rows()) lu_.reset();
    matrix_ = matrix;
    matrix_.makeCompressed();
    lu_current_ = false;
    if (refactor_pending_) lu_.reset();
}

void StageSolver::force_refactor() { factorize(); }

void StageSolver::factorize() {
    auto fact = std::make_unique<Factorization>();
    fact->matrix = matrix_;
    fact->lu.compute(fact->matrix);
    if (fact->lu.info() != Eigen::Success)
        throw SolverFailure("sparse LU factorisation failed (singular stage matrix or out of memory)",
                            std::numeric_limits<double>::infinity(), 0);
    lu_ = std::move(fact);
    lu_current_ = true;
    refactor_pending_ = false;
    ++factorizations_;
}

bool StageSolver::gmres(const Vector& rhs, Vector& x, int budget, int& used, double& rel_res) {
    constexpr int restart = 30;
    const double bnorm = rhs.norm();
    const Eigen::Index n = rhs.size();
    std::vector<Vector> v;
    std::vector<Vector> z;
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(restart + 1, restart);
    Vector cs(restart), sn(restart), g(restart + 1);

    while (true) {
        Vector r = rhs - matrix_ * x;
        const double beta = r.norm();
        rel_res = beta / bnorm;
        if (rel_res <= tol_) return true;
        if (used >= budget) return false;

        if (v.empty()) {
            v.assign(restart + 1, Vector(n));
            z.assign(restart, Vector(n));
        }
        v[0] = r / beta;
        g.setZero();
        g[0] = beta;
        int k = 0;
        for (; k < restart && used < budget; ++k) {
            z[k] = lu_->lu.solve(v[k]);
            Vector w = matrix_ * z[k];
            for (int i = 0; i <= k; ++i) {
                h(i, k) = w.dot(v[i]);
                w -= h(i, k) * v[i];
            }
            h(k + 1, k) = w.norm();
            const bool breakdown = h(k + 1, k) <= 1e-300;
            if (!breakdown) v[k + 1] = w / h(k + 1, k);
            for (int i = 0; i < k; ++i) {
                const double t = cs[i] * h(i, k) + sn[i] * h(i + 1, k);
                h(i + 1, k) = -sn[i] * h(i, k) + cs[i] * h(i + 1, k);
                h(i, k) = t;
            }
            const double denom = std::hypot(h(k, k), h(k + 1, k));
            cs[k] = h(k, k) / denom;
            sn[k] = h(k + 1, k) / denom;
            h(k, k) = denom;
            h(k + 1, k) = 0.0;
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            ++used;
            if (breakdown || std::abs(g[k + 1]) <= 0.5 * tol_ * bnorm) {
                ++k;
                break;
            }
        }
        Vector y = h.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
        for (int i = 0; i < k; ++i) x += y[i] * z[i];
    }
}

Vector StageSolver::solve(const Vector& rhs) {
    if (rhs.size() != matrix_.rows()) throw InvalidArgument("rhs dimension mismatch");
    last_iterations_ = 0;
    last_residual_ = 0.0;
    const double bnorm = rhs.norm();
    if (bnorm == 0.0) return Vector::Zero(rhs.size());
    if (!lu_) factorize();

    Vector x = lu_->lu.solve(rhs);
    int used = 0;
    double rel = 0.0;
    const int first_budget = lu_current_ ? max_iter_ : std::min(max_iter_, refactor_after_);
    if (gmres(rhs, x, first_budget, used, rel)) {
        last_iterations_ = used;
        last_residual_ = rel;
        if (!lu_current_ && used > refactor_hint_) refactor_pending_ = true;
        return x;
    }
    if (!lu_current_) {
        factorize();
        x = lu_->lu.solve(rhs);
        int used2 = 0;
        const bool ok = gmres(rhs, x, max_iter_, used2, rel);
        used += used2;
        last_iterations_ = used;
        last_residual_ = rel;
        if (ok) return x;
    }
    last_iterations_ = used;
    last_residual_ = rel;
    throw SolverFailure("stage solver did not reach tolerance", rel, used);
}

Vector solve_stage(const LinearSystem& system, const Vector& rhs, const MMParams& params) {
    validate(params);
    StageSolver solver(params.linear_tol, params.linear_max_iter);
    solver.set_matrix(system.matrix);
    return solver.solve(rhs);
}

Vector solve_stage_dense(const LinearSystem& system, const Vector& rhs) {
    const Eigen::MatrixXd dense(system.matrix);
    return dense.partialPivLu().solve(rhs);
}

// ---------------------------------------------------------------------------
// Time steppers

namespace {

Vector stage_rhs(const Vector& f_part, Eigen::Index n) {
    Vector rhs = Vector::Zero(2 * n);
    rhs.head(n) = f_part;
    return rhs;
}

MMState unpack(const UnknownLayout& layout, const Vector& x) {
    return MMState{layout.scatter(x, 0), layout.scatter(x, 1)};
}

}  // namespace

Dirk2Stepper::Dirk2Stepper(const Grid& grid, const MMParams& params)
    : params_(params),
      layout_(std::make_shared<const UnknownLayout>(grid)),
      solver_(params.linear_tol, params.linear_max_iter) {
    validate(params_);
}

void Dirk2Stepper::set_psi(const GridField& psi) {
    system_ = assemble_stage_system(psi, params_, params_.lambda * params_.dt, layout_);
    solver_.set_matrix(system_->matrix);
}

MMState Dirk2Stepper::step(const GridField& f_n) {
    if (!system_) throw InvalidArgument("Dirk2Stepper::step called before set_psi");
    const auto n = static_cast<Eigen::Index>(layout_->size());
    const Vector fn = layout_->gather(f_n);

    const Vector x1 = solver_.solve(stage_rhs(fn, n));
    const double c = (1.0 - params_.lambda) / params_.lambda;
    const Vector rhs2 = fn + c * (x1.head(n) - fn);
    const Vector x2 = solver_.solve(stage_rhs(rhs2, n));
    return unpack(*layout_, x2);
}

MMState dirk2_step(const GridField& f_n, const GridField& psi, const MMParams& params) {
    require_same_grid(f_n, psi, "dirk2_step");
    Dirk2Stepper stepper(f_n.grid(), params);
    stepper.set_psi(psi);
    return stepper.step(f_n);
}

MMState backward_euler_step(const GridField& f_n, const GridField& psi, const MMParams& params) {
    require_same_grid(f_n, psi, "backward_euler_step");
    const LinearSystem sys = assemble_stage_system(psi, params, params.dt);
    const auto n = static_cast<Eigen::Index>(sys.layout->size());
    const Vector x = solve_stage(sys, stage_rhs(sys.layout->gather(f_n), n), params);
    return unpack(*sys.layout, x);
}

// ---------------------------------------------------------------------------
// Condition estimate

ConditionEstimate condition_estimate(const SparseMatrix& matrix) {
    if (matrix.rows() != matrix.cols() || matrix.rows() == 0)
        throw InvalidArgument("condition_estimate needs a non-empty square matrix");
    constexpr int kMaxSweeps = 30;
    constexpr double kRelChange = 1e-6;
    const Eigen::Index n = matrix.rows();

    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> dist(0.5, 1.5);
    Vector start(n);
    for (Eigen::Index k = 0; k < n; ++k) start[k] = dist(rng);
    start.normalize();

    ConditionEstimate est;

    // Largest eigenvalue of A^T A.
    Vector x = start;
    double mu = 0.0;
    for (int it = 0; it < kMaxSweeps; ++it) {
        Vector y = matrix.transpose() * (matrix * x);
        const double next = x.dot(y);
        est.residual_max = std::abs(next - mu) / std::max(std::abs(next), 1e-300);
        mu = next;
        est.iterations = std::max(est.iterations, it + 1);
        const double ny = y.norm();
        if (ny == 0.0) break;
        x = y / ny;
        if (it > 0 && est.residual_max < kRelChange) break;
    }
    est.sigma_max = std::sqrt(std::max(mu, 0.0));

    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu;
    SparseMatrix a = matrix;
    a.makeCompressed();
    lu.compute(a);
    if (lu.info() != Eigen::Success)
        throw SolverFailure("condition_estimate: factorisation failed (singular matrix)",
                            std::numeric_limits<double>::infinity(), 0);

    // Largest eigenvalue of (A^T A)^{-1} = A^{-1} A^{-T}.
    x = start;
    double nu = 0.0;
    for (int it = 0; it < kMaxSweeps; ++it) {
        Vector w = lu.transpose().solve(x);
        Vector y = lu.solve(w);
        if (!y.allFinite())
            throw SolverFailure("condition_estimate: inverse iteration diverged",
                                std::numeric_limits<double>::infinity(), it);
        const double next = x.dot(y);
        est.residual_min = std::abs(next - nu) / std::max(std::abs(next), 1e-300);
        nu = next;
        est.iterations = std::max(est.iterations, it + 1);
        x = y / y.norm();
        if (it > 0 && est.residual_min < kRelChange) break;
    }
    est.sigma_min = nu > 0.0 ? 1.0 / std::sqrt(nu) : 0.0;
    est.kappa = est.sigma_min > 0.0 ? est.sigma_max / est.sigma_min
                                    : std::numeric_limits<double>::infinity();
    return est;
}

ConditionEstimate condition_estimate(const LinearSystem& system, const MMParams& params) {
    validate(params);
    return condition_estimate(system.matrix);
}

// ---------------------------------------------------------------------------
// Stabilisation policy

double sigma_policy(const SigmaPolicy& policy, const GridSpec& spec) {
    const Grid grid(spec);
    switch (policy.kind) {
        case SigmaKind::DxSquared: return grid.dx() * grid.dx();
        case SigmaKind::Dx: return grid.dx();
        case SigmaKind::ScaledDxSquared: {
            const double r = grid.dx() / spec.half_width_x;
            return r * r;
        }
        case SigmaKind::Fixed:
            if (!(policy.value > 0.0)) throw InvalidArgument("fixed sigma must be positive");
            return policy.value;
    }
    throw InvalidArgument("unknown sigma policy");
}

std::string to_string(SigmaKind kind) {
    switch (kind) {
        case SigmaKind::DxSquared: return "dx2";
        case SigmaKind::Dx: return "dx";
        case SigmaKind::ScaledDxSquared: return "scaled-dx2";
        case SigmaKind::Fixed: return "fixed";
    }
    return "?";
}

SigmaKind sigma_kind_from_string(const std::string& name) {
    if (name == "dx2") return SigmaKind::DxSquared;
    if (name == "dx") return SigmaKind::Dx;
    if (name == "scaled-dx2") return SigmaKind::ScaledDxSquared;
    if (name == "fixed") return SigmaKind::Fixed;
    throw InvalidArgument("unknown sigma policy '" + name + "' (expected dx2, dx, scaled-dx2, fixed)");
}

}  // namespace damm
