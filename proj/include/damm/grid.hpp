#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

namespace damm {

/// Thrown when a configuration or argument violates a documented precondition.
class InvalidArgument : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Boundary regime of the truncated domain.
///
/// FullyTruncated: f = 0 on all four edges (truncation of the whole plane).
/// PeriodicX: column N_x+1 aliases column 1, f = 0 on the y-edges (truncation of a strip).
/// Periodic: periodic in both directions. Only used to check the discrete
/// conservation identities of the bracket without boundary flux.
enum class BoundaryKind { FullyTruncated, PeriodicX, Periodic };

struct GridSpec {
    double half_width_x = 1.0;
    double half_width_y = 1.0;
    int cells_x = 4;
    int cells_y = 4;
    BoundaryKind boundary = BoundaryKind::FullyTruncated;

    bool operator==(const GridSpec&) const = default;
};

/// Uniform node-centred grid over [-L_x, L_x] x [-L_y, L_y].
///
/// Nodes are indexed i = 0..N_x, j = 0..N_y (zero-based), so that
/// x(i) = i*dx - L_x and y(j) = j*dy - L_y.
class Grid {
public:
    explicit Grid(const GridSpec& spec);

    const GridSpec& spec() const noexcept { return spec_; }
    BoundaryKind boundary() const noexcept { return spec_.boundary; }
    int cells_x() const noexcept { return spec_.cells_x; }
    int cells_y() const noexcept { return spec_.cells_y; }
    int nodes_x() const noexcept { return spec_.cells_x + 1; }
    int nodes_y() const noexcept { return spec_.cells_y + 1; }
    std::size_t node_count() const noexcept {
        return static_cast<std::size_t>(nodes_x()) * static_cast<std::size_t>(nodes_y());
    }
    double dx() const noexcept { return dx_; }
    double dy() const noexcept { return dy_; }
    double x(int i) const noexcept { return i * dx_ - spec_.half_width_x; }
    double y(int j) const noexcept { return j * dy_ - spec_.half_width_y; }

    bool periodic_x() const noexcept { return spec_.boundary != BoundaryKind::FullyTruncated; }
    bool periodic_y() const noexcept { return spec_.boundary == BoundaryKind::Periodic; }

    /// Flat storage index of node (i, j); i runs fastest.
    std::size_t index(int i, int j) const noexcept {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(nodes_x()) +
               static_cast<std::size_t>(i);
    }

    /// True for nodes that carry an independent value: interior nodes plus,
    /// in periodic directions, the first (non-duplicate) edge.
    bool is_independent(int i, int j) const noexcept;

    bool operator==(const Grid& other) const noexcept { return spec_ == other.spec_; }

private:
    GridSpec spec_;
    double dx_;
    double dy_;
};

Grid make_grid(const GridSpec& spec);

/// Node values of a scalar function on a grid.
class GridField {
public:
    explicit GridField(Grid grid, double fill = 0.0);
    GridField(Grid grid, std::vector<double> values);

    template <typename Fn>
    static GridField sample(const Grid& grid, Fn&& fn) {
        GridField out(grid);
        for (int j = 0; j < grid.nodes_y(); ++j)
            for (int i = 0; i < grid.nodes_x(); ++i)
                out(i, j) = fn(grid.x(i), grid.y(j));
        return out;
    }

    const Grid& grid() const noexcept { return grid_; }
    double& operator()(int i, int j) noexcept { return values_[grid_.index(i, j)]; }
    double operator()(int i, int j) const noexcept { return values_[grid_.index(i, j)]; }

    std::span<double> values() noexcept { return values_; }
    std::span<const double> values() const noexcept { return values_; }

    GridField& operator+=(const GridField& other);
    GridField& operator-=(const GridField& other);
    GridField& operator*=(double scale);

    bool all_finite() const noexcept;

private:
    Grid grid_;
    std::vector<double> values_;
};

GridField operator+(GridField a, const GridField& b);
GridField operator-(GridField a, const GridField& b);
GridField operator*(double scale, GridField a);

/// Throws InvalidArgument unless both fields live on the same grid.
void require_same_grid(const GridField& a, const GridField& b, const char* context);

/// Applies the boundary regime: truncated edges are zeroed, periodic
/// duplicate edges are copied from their first counterpart.
GridField enforce_boundary(GridField field);
void enforce_boundary_in_place(GridField& field);

enum class NormOrder { L1, L2, Linf };

/// Discrete L^p norm with weight dx*dy at every stored node; duplicate
/// periodic nodes are counted once. Summation order is fixed (row-major).
double discrete_norm(const GridField& field, NormOrder p);

/// Same weighting, applied to a raw node array laid out like `grid`.
double discrete_norm(const Grid& grid, std::span<const double> values, NormOrder p);

/// Accumulates a space-time L^p norm over (0, T) x Omega_S with weight dt*dx*dy.
class SpaceTimeNorm {
public:
    SpaceTimeNorm(NormOrder p, double dt) : p_(p), dt_(dt) {}
    void add(const GridField& error);
    double value() const;

private:
    NormOrder p_;
    double dt_;
    double accum_ = 0.0;
};

}  // namespace damm
