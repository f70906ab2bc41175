#include "elastobayes/mesh.hpp"

#include <cmath>
#include <fstream>
#include <map>

namespace eb::fem {

namespace {

struct EdgeKey {
    int a, b;  // a < b
    bool operator<(const EdgeKey& o) const { return a != o.a ? a < o.a : b < o.b; }
};

}  // namespace

TriMeshP2 build_mesh(int n) {
    if (n < 2) throw ConfigError("mesh: need at least 2 subdivisions per side");

    TriMeshP2 mesh;
    mesh.n = n;
    mesh.num_vertices = (n + 1) * (n + 1);
    mesh.h = std::sqrt(2.0) / n;

    auto vertex_id = [n](int i, int j) { return j * (n + 1) + i; };

    mesh.nodes.resize(mesh.num_vertices);
    std::vector<std::array<int, 2>> vertex_ij(mesh.num_vertices);
    for (int j = 0; j <= n; ++j)
        for (int i = 0; i <= n; ++i) {
            mesh.nodes[vertex_id(i, j)] = {static_cast<double>(i) / n,
                                           static_cast<double>(j) / n};
            vertex_ij[vertex_id(i, j)] = {i, j};
        }

    // Cells in row-major order; the lower triangle of each cell comes first.
    mesh.tri_vertices.reserve(2 * n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) {
            const int v00 = vertex_id(i, j), v10 = vertex_id(i + 1, j);
            const int v01 = vertex_id(i, j + 1), v11 = vertex_id(i + 1, j + 1);
            mesh.tri_vertices.push_back({v00, v10, v11});
            mesh.tri_vertices.push_back({v00, v11, v01});
        }

    std::map<EdgeKey, int> edge_ids;
    auto edge_node = [&](int a, int b) {
        const EdgeKey key{std::min(a, b), std::max(a, b)};
        auto [it, inserted] = edge_ids.try_emplace(key, static_cast<int>(edge_ids.size()));
        return mesh.num_vertices + it->second;
    };

    mesh.tri_nodes.reserve(mesh.tri_vertices.size());
    for (const auto& tv : mesh.tri_vertices)
        mesh.tri_nodes.push_back({tv[0], tv[1], tv[2], edge_node(tv[0], tv[1]),
                                  edge_node(tv[1], tv[2]), edge_node(tv[2], tv[0])});

    mesh.num_edges = static_cast<int>(edge_ids.size());
    mesh.nodes.resize(mesh.num_vertices + mesh.num_edges);
    mesh.edge_vertices.resize(mesh.num_edges);
    for (const auto& [key, id] : edge_ids) {
        mesh.edge_vertices[id] = {key.a, key.b};
        mesh.nodes[mesh.num_vertices + id] = {0.5 * (mesh.nodes[key.a].x + mesh.nodes[key.b].x),
                                              0.5 * (mesh.nodes[key.a].y + mesh.nodes[key.b].y)};
    }

    mesh.boundary.assign(mesh.nodes.size(), 0);
    auto on_side = [n](const std::array<int, 2>& ij) {
        return ij[0] == 0 || ij[0] == n || ij[1] == 0 || ij[1] == n;
    };
    for (int v = 0; v < mesh.num_vertices; ++v)
        mesh.boundary[v] = on_side(vertex_ij[v]) ? 1 : 0;
    for (int e = 0; e < mesh.num_edges; ++e) {
        const auto [a, b] = mesh.edge_vertices[e];
        const auto& pa = vertex_ij[a];
        const auto& pb = vertex_ij[b];
        const bool along_boundary = (pa[0] == pb[0] && (pa[0] == 0 || pa[0] == n)) ||
                                    (pa[1] == pb[1] && (pa[1] == 0 || pa[1] == n));
        mesh.boundary[mesh.num_vertices + e] = along_boundary ? 1 : 0;
    }
    return mesh;
}

void dump_mesh(const TriMeshP2& mesh, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("mesh: cannot write " + path);
    out << "vertices " << mesh.num_vertices << '\n';
    out.precision(17);
    for (int v = 0; v < mesh.num_vertices; ++v)
        out << mesh.nodes[v].x << ' ' << mesh.nodes[v].y << '\n';
    out << "triangles " << mesh.triangle_count() << '\n';
    for (const auto& tv : mesh.tri_vertices)
        out << tv[0] << ' ' << tv[1] << ' ' << tv[2] << '\n';
}

DofMap make_dof_map(const TriMeshP2& mesh) {
    DofMap dofs;
    dofs.node_count = mesh.node_count();
    dofs.free_index.assign(2 * mesh.node_count(), -1);
    int next = 0;
    for (int node = 0; node < mesh.node_count(); ++node) {
        if (mesh.boundary[node]) continue;
        dofs.free_index[2 * node] = next++;
        dofs.free_index[2 * node + 1] = next++;
    }
    dofs.free_count = next;
    return dofs;
}

}  // namespace eb::fem
