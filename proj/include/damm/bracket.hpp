#pragma once

#include <array>

#include "damm/grid.hpp"

namespace damm {

/// Offsets of the eight Arakawa neighbours, in the order of the
/// coefficients A..H: (+1,0) (-1,0) (0,+1) (0,-1) (+1,+1) (-1,-1) (-1,+1) (+1,-1).
inline constexpr std::array<std::array<int, 2>, 8> kArakawaOffsets{{
    {+1, 0}, {-1, 0}, {0, +1}, {0, -1}, {+1, +1}, {-1, -1}, {-1, +1}, {+1, -1},
}};

/// Value of `field` at a possibly out-of-range node: wraps in periodic
/// directions, zero outside the grid otherwise.
double ghost_value(const GridField& field, int i, int j) noexcept;

/// Wraps (i, j) into the stored range for periodic directions. Returns false
/// when the node lies outside a truncated direction.
bool wrap_node(const Grid& grid, int& i, int& j) noexcept;

/// Coefficients of u at the eight neighbours in [u, v]_{i,j}, already scaled
/// by 1/(12 dx dy). The bracket is linear in u with these weights.
std::array<double, 8> arakawa_coefficients(const GridField& v, int i, int j) noexcept;

/// Second-order Arakawa discretisation of {u, v} = u_x v_y - u_y v_x.
/// Computed at independent nodes; the result passes enforce_boundary.
GridField arakawa_bracket(const GridField& u, const GridField& v);

}  // namespace damm
