#include "damm/bracket.hpp"

namespace damm {

bool wrap_node(const Grid& grid, int& i, int& j) noexcept {
    const int nx = grid.cells_x();
    const int ny = grid.cells_y();
    if (grid.periodic_x()) {
        i = ((i % nx) + nx) % nx;
    } else if (i < 0 || i > nx) {
        return false;
    }
    if (grid.periodic_y()) {
        j = ((j % ny) + ny) % ny;
    } else if (j < 0 || j > ny) {
        return false;
    }
    return true;
}

double ghost_value(const GridField& field, int i, int j) noexcept {
    if (!wrap_node(field.grid(), i, j)) return 0.0;
    return field(i, j);
}

std::array<double, 8> arakawa_coefficients(const GridField& v, int i, int j) noexcept {
    auto at = [&](int di, int dj) { return ghost_value(v, i + di, j + dj); };
    const double scale = 1.0 / (12.0 * v.grid().dx() * v.grid().dy());
    return {
        scale * (at(0, 1) - at(0, -1) + at(1, 1) - at(1, -1)),    // A
        scale * (at(0, -1) - at(0, 1) - at(-1, 1) + at(-1, -1)),  // B
        scale * (at(-1, 0) - at(1, 0) - at(1, 1) + at(-1, 1)),    // C
        scale * (at(1, 0) - at(-1, 0) + at(1, -1) - at(-1, -1)),  // D
        scale * (at(0, 1) - at(1, 0)),                            // E
        scale * (at(0, -1) - at(-1, 0)),                          // F
        scale * (at(-1, 0) - at(0, 1)),                           // G
        scale * (at(1, 0) - at(0, -1)),                           // H
    };
}

GridField arakawa_bracket(const GridField& u, const GridField& v) {
    require_same_grid(u, v, "arakawa_bracket");
    const Grid& g = u.grid();
    GridField out(g);
    for (int j = 0; j < g.nodes_y(); ++j) {
        for (int i = 0; i < g.nodes_x(); ++i) {
            if (!g.is_independent(i, j)) continue;
            const auto c = arakawa_coefficients(v, i, j);
            double acc = 0.0;
            for (std::size_t k = 0; k < 8; ++k)
                acc += c[k] * ghost_value(u, i + kArakawaOffsets[k][0], j + kArakawaOffsets[k][1]);
            out(i, j) = acc;
        }
    }
    enforce_boundary_in_place(out);
    return out;
}

}  // namespace damm
