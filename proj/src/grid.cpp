#include "damm/grid.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace damm {

Grid::Grid(const GridSpec& spec) : spec_(spec) {
    if (spec.cells_x < 4 || spec.cells_y < 4)
        throw InvalidArgument("grid needs at least 4 cells per direction, got " +
                              std::to_string(spec.cells_x) + "x" + std::to_string(spec.cells_y));
    if (!(spec.half_width_x > 0.0) || !(spec.half_width_y > 0.0))
        throw InvalidArgument("grid half-widths must be positive");
    dx_ = 2.0 * spec.half_width_x / spec.cells_x;
    dy_ = 2.0 * spec.half_width_y / spec.cells_y;
}

bool Grid::is_independent(int i, int j) const noexcept {
    const bool i_ok = periodic_x() ? (i >= 0 && i < cells_x()) : (i > 0 && i < cells_x());
    const bool j_ok = periodic_y() ? (j >= 0 && j < cells_y()) : (j > 0 && j < cells_y());
    return i_ok && j_ok;
}

Grid make_grid(const GridSpec& spec) { return Grid(spec); }

GridField::GridField(Grid grid, double fill)
    : grid_(std::move(grid)), values_(grid_.node_count(), fill) {}

GridField::GridField(Grid grid, std::vector<double> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.size() != grid_.node_count())
        throw InvalidArgument("field value count does not match grid node count");
}

void require_same_grid(const GridField& a, const GridField& b, const char* context) {
    if (!(a.grid() == b.grid()))
        throw InvalidArgument(std::string(context) + ": fields live on different grids");
}

GridField& GridField::operator+=(const GridField& other) {
    require_same_grid(*this, other, "operator+=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
    return *this;
}

GridField& GridField::operator-=(const GridField& other) {
    require_same_grid(*this, other, "operator-=");
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] -= other.values_[k];
    return *this;
}

GridField& GridField::operator*=(double scale) {
    for (double& v : values_) v *= scale;
    return *this;
}

bool GridField::all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

GridField operator+(GridField a, const GridField& b) { return a += b; }
GridField operator-(GridField a, const GridField& b) { return a -= b; }
GridField operator*(double scale, GridField a) { return a *= scale; }

void enforce_boundary_in_place(GridField& field) {
    const Grid& g = field.grid();
    const int nx = g.cells_x();
    const int ny = g.cells_y();
    if (g.periodic_y()) {
        for (int i = 0; i <= nx; ++i) field(i, ny) = field(i, 0);
    } else {
        for (int i = 0; i <= nx; ++i) {
            field(i, 0) = 0.0;
            field(i, ny) = 0.0;
        }
    }
    if (g.periodic_x()) {
        for (int j = 0; j <= ny; ++j) field(nx, j) = field(0, j);
    } else {
        for (int j = 0; j <= ny; ++j) {
            field(0, j) = 0.0;
            field(nx, j) = 0.0;
        }
    }
}

GridField enforce_boundary(GridField field) {
    enforce_boundary_in_place(field);
    return field;
}

double discrete_norm(const Grid& grid, std::span<const double> values, NormOrder p) {
    if (values.size() != grid.node_count())
        throw InvalidArgument("discrete_norm: value count does not match grid");
    const int i_end = grid.periodic_x() ? grid.cells_x() : grid.nodes_x();
    const int j_end = grid.periodic_y() ? grid.cells_y() : grid.nodes_y();
    const double w = grid.dx() * grid.dy();
    double acc = 0.0;
    for (int j = 0; j < j_end; ++j) {
        for (int i = 0; i < i_end; ++i) {
            const double a = std::abs(values[grid.index(i, j)]);
            switch (p) {
                case NormOrder::L1: acc += a; break;
                case NormOrder::L2: acc += a * a; break;
                case NormOrder::Linf: acc = std::max(acc, a); break;
            }
        }
    }
    switch (p) {
        case NormOrder::L1: return w * acc;
        case NormOrder::L2: return std::sqrt(w * acc);
        case NormOrder::Linf: return acc;
    }
    return acc;
}

double discrete_norm(const GridField& field, NormOrder p) {
    return discrete_norm(field.grid(), field.values(), p);
}

void SpaceTimeNorm::add(const GridField& error) {
    const double n = discrete_norm(error, p_);
    switch (p_) {
        case NormOrder::L1: accum_ += dt_ * n; break;
        case NormOrder::L2: accum_ += dt_ * n * n; break;
        case NormOrder::Linf: accum_ = std::max(accum_, n); break;
    }
}

double SpaceTimeNorm::value() const {
    return p_ == NormOrder::L2 ? std::sqrt(accum_) : accum_;
}

}  // namespace damm
