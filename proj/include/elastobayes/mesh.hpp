#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "elastobayes/core.hpp"

namespace eb::fem {

/// Conforming triangulation of the unit square with quadratic (vertex +
/// edge-midpoint) nodes. Each of the n x n cells is split along the
/// bottom-left to top-right diagonal, giving two congruent triangles.
struct TriMeshP2 {
    int n = 0;
    int num_vertices = 0;  // (n+1)^2
    int num_edges = 0;     // 3n^2 + 2n
    std::vector<Vec2> nodes;                      // vertices first, then edge midpoints
    std::vector<std::array<int, 3>> tri_vertices; // CCW vertex ids
    std::vector<std::array<int, 6>> tri_nodes;    // 3 vertices + midpoints of edges 01,12,20
    std::vector<std::array<int, 2>> edge_vertices;
    std::vector<std::uint8_t> boundary;           // per node
    double h = 0.0;                               // max element diameter, sqrt(2)/n

    int node_count() const { return static_cast<int>(nodes.size()); }
    int triangle_count() const { return static_cast<int>(tri_nodes.size()); }
    double element_area() const { return 1.0 / (2.0 * n * n); }
};

TriMeshP2 build_mesh(int n);

/// Plain-text dump: vertex list then triangle list.
void dump_mesh(const TriMeshP2& mesh, const std::string& path);

/// Node/component -> free index (or -1 for constrained boundary dofs).
/// Dof ordering is node major: dof = 2*node + component.
struct DofMap {
    int node_count = 0;
    int free_count = 0;
    std::vector<std::int32_t> free_index;

    int at(int node, int component) const { return free_index[2 * node + component]; }
};

DofMap make_dof_map(const TriMeshP2& mesh);

}  // namespace eb::fem
