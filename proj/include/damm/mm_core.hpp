#pragma once

#include <array>
#include <cmath>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Sparse>

#include "damm/grid.hpp"

namespace damm {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double>;

/// Thrown when a linear or nonlinear iteration fails to reach its tolerance.
class SolverFailure : public std::runtime_error {
public:
    SolverFailure(const std::string& what, double residual, int iterations)
        : std::runtime_error(what), residual_(residual), iterations_(iterations) {}
    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    double residual_;
    int iterations_;
};

inline const double kDefaultLambda = 1.0 - 1.0 / std::sqrt(2.0);

/// Constants of the stabilised micro-macro scheme.
struct MMParams {
    double epsilon = 1.0;
    double sigma = 1e-4;
    double dt = 0.01;
    double lambda = kDefaultLambda;
    double linear_tol = 1e-10;
    int linear_max_iter = 200;
};

/// Throws InvalidArgument on sigma <= 0, epsilon < 0, dt <= 0 or bad tolerances.
void validate(const MMParams& params);

/// Coupled pair (f, q) at one time level.
struct MMState {
    GridField f;
    GridField q;
};

/// Maps independent grid nodes to unknown indices, row-major by (j, i).
class UnknownLayout {
public:
    explicit UnknownLayout(const Grid& grid);

    const Grid& grid() const noexcept { return grid_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    /// Unknown index of node (i, j), or -1 when the node is eliminated.
    /// Periodic duplicates resolve to their first counterpart.
    long index(int i, int j) const noexcept;
    std::array<int, 2> node(std::size_t k) const noexcept { return nodes_[k]; }

    Vector gather(const GridField& field) const;
    /// Writes block `block` (0 or 1) of `x` onto a boundary-consistent field.
    GridField scatter(const Vector& x, std::size_t block = 0) const;

private:
    Grid grid_;
    std::vector<std::array<int, 2>> nodes_;
    std::vector<long> index_of_node_;
};

/// Sparse stage system over the f-block followed by the q-block.
struct LinearSystem {
    SparseMatrix matrix;
    std::shared_ptr<const UnknownLayout> layout;

    std::size_t dimension() const noexcept { return static_cast<std::size_t>(matrix.rows()); }
};

/// Matrix of u -> [u, psi] restricted to the independent nodes (psi frozen).
SparseMatrix assemble_bracket_operator(const GridField& psi, const UnknownLayout& layout);

/// Stage equations  f + w [q, psi] = rhs_f  and  [f, psi] - eps [q, psi] + sigma q = 0,
/// with w = stage_weight.
LinearSystem assemble_stage_system(const GridField& psi, const MMParams& params,
                                   double stage_weight);

LinearSystem assemble_stage_system(const GridField& psi, const MMParams& params,
                                   double stage_weight,
                                   std::shared_ptr<const UnknownLayout> layout);

/// Restarted right-preconditioned GMRES around a sparse LU factorisation.
///
/// The factorisation may be lagged: when the operator changes, the previous
/// factors are kept as preconditioner until convergence degrades past
/// `refactor_after` iterations, at which point the current operator is
/// factorised. Convergence is always measured on the true residual
/// ||A x - b|| / ||b||.
class StageSolver {
public:
    StageSolver(double tol, int max_iter, int refactor_after = 12);
    ~StageSolver();
    StageSolver(StageSolver&&) noexcept;
    StageSolver& operator=(StageSolver&&) noexcept;

    /// Installs a new operator; factors are refreshed lazily.
    void set_matrix(const SparseMatrix& matrix);
    void force_refactor();

    Vector solve(const Vector& rhs);

    int factorizations() const noexcept { return factorizations_; }
    int last_iterations() const noexcept { return last_iterations_; }
    double last_residual() const noexcept { return last_residual_; }

private:
    struct Factorization;
    void factorize();
    bool gmres(const Vector& rhs, Vector& x, int budget, int& used, double& rel_res);

    double tol_;
    int max_iter_;
    int refactor_after_;
    SparseMatrix matrix_;
    std::unique_ptr<Factorization> lu_;
    bool lu_current_ = false;
    /// Lagged solves slower than this schedule a refactorisation at the next set_matrix.
    int refactor_hint_ = 3;
    bool refactor_pending_ = false;
    int factorizations_ = 0;
    int last_iterations_ = 0;
    double last_residual_ = 0.0;
};

/// One-shot solve of `system` to params.linear_tol.
Vector solve_stage(const LinearSystem& system, const Vector& rhs, const MMParams& params);

/// Dense LU solve of the same system (test oracle; small grids only).
Vector solve_stage_dense(const LinearSystem& system, const Vector& rhs);

/// Two-stage L-stable DIRK step with psi frozen. Returns (f^{n+1}, q^{n+1}).
MMState dirk2_step(const GridField& f_n, const GridField& psi, const MMParams& params);

/// Single implicit-Euler stage with weight dt.
MMState backward_euler_step(const GridField& f_n, const GridField& psi, const MMParams& params);

/// Repeated DIRK2 stepping that reuses the assembled system and its
/// factorisation while psi is unchanged, and keeps the old factors as a
/// preconditioner when psi moves.
class Dirk2Stepper {
public:
    Dirk2Stepper(const Grid& grid, const MMParams& params);

    void set_psi(const GridField& psi);
    MMState step(const GridField& f_n);

    const MMParams& params() const noexcept { return params_; }
    const StageSolver& solver() const noexcept { return solver_; }
    const UnknownLayout& layout() const noexcept { return *layout_; }
    const LinearSystem& system() const { return system_.value(); }

private:
    MMParams params_;
    std::shared_ptr<const UnknownLayout> layout_;
    std::optional<LinearSystem> system_;
    StageSolver solver_;
};

struct ConditionEstimate {
    double kappa = 0.0;
    double sigma_max = 0.0;
    double sigma_min = 0.0;
    /// Relative change of the last power and inverse iterations.
    double residual_max = 0.0;
    double residual_min = 0.0;
    int iterations = 0;
};

/// 2-norm condition number via power iteration on A^T A and inverse
/// iteration through the LU factors. Stops after 30 sweeps or when the
/// relative change drops below 1e-6.
ConditionEstimate condition_estimate(const SparseMatrix& matrix);
ConditionEstimate condition_estimate(const LinearSystem& system, const MMParams& params);

enum class SigmaKind { DxSquared, Dx, ScaledDxSquared, Fixed };

struct SigmaPolicy {
    SigmaKind kind = SigmaKind::DxSquared;
    double value = 0.0;  ///< used by Fixed only
};

/// dx^2, dx, (dx/L_x)^2 or the fixed value.
double sigma_policy(const SigmaPolicy& policy, const GridSpec& grid);

std::string to_string(SigmaKind kind);
SigmaKind sigma_kind_from_string(const std::string& name);

}  // namespace damm
