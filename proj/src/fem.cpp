#include "elastobayes/fem.hpp"

#include <Eigen/IterativeLinearSolvers>

#include <algorithm>
#include <cmath>
#include <fstream>

namespace eb::fem {

BodyForce default_body_force() {
    return [](Vec2 p) { return Vec2{2.0 * p.x + 10.0, p.y - 3.0}; };
}

BodyForce affine_body_force(const std::array<double, 6>& c) {
    return [c](Vec2 p) {
        return Vec2{c[0] * p.x + c[1] * p.y + c[2], c[3] * p.x + c[4] * p.y + c[5]};
    };
}

void p2_shape(double xi, double eta, std::array<double, 6>& value) {
    const double l1 = 1.0 - xi - eta, l2 = xi, l3 = eta;
    value[0] = l1 * (2.0 * l1 - 1.0);
    value[1] = l2 * (2.0 * l2 - 1.0);
    value[2] = l3 * (2.0 * l3 - 1.0);
    value[3] = 4.0 * l1 * l2;
    value[4] = 4.0 * l2 * l3;
    value[5] = 4.0 * l3 * l1;
}

void p2_shape_gradient(double xi, double eta, std::array<Vec2, 6>& grad) {
    const double l1 = 1.0 - xi - eta, l2 = xi, l3 = eta;
    grad[0] = {-(4.0 * l1 - 1.0), -(4.0 * l1 - 1.0)};
    grad[1] = {4.0 * l2 - 1.0, 0.0};
    grad[2] = {0.0, 4.0 * l3 - 1.0};
    grad[3] = {4.0 * (l1 - l2), -4.0 * l2};
    grad[4] = {4.0 * l3, 4.0 * l2};
    grad[5] = {-4.0 * l3, 4.0 * (l1 - l3)};
}

const TriangleQuadrature& element_quadrature() {
    static const TriangleQuadrature rule = [] {
        TriangleQuadrature q;
        const double r15 = std::sqrt(15.0);
        const double a1 = (6.0 + r15) / 21.0, b1 = 1.0 - 2.0 * a1;
        const double a2 = (6.0 - r15) / 21.0, b2 = 1.0 - 2.0 * a2;
        const double w1 = (155.0 + r15) / 1200.0;
        const double w2 = (155.0 - r15) / 1200.0;
        q.points = {Vec2{1.0 / 3.0, 1.0 / 3.0}, Vec2{a1, b1}, Vec2{b1, a1}, Vec2{a1, a1},
                    Vec2{a2, b2}, Vec2{b2, a2}, Vec2{a2, a2}};
        q.weights = {9.0 / 40.0, w1, w1, w1, w2, w2, w2};
        return q;
    }();
    return rule;
}

namespace {

constexpr int kQ = TriangleQuadrature::size;

struct ElementGeometry {
    double area = 0.0;
    std::array<Vec2, kQ> x;                      // physical quadrature points
    std::array<std::array<double, 6>, kQ> shape;
    std::array<std::array<Vec2, 6>, kQ> grad;    // physical gradients
};

ElementGeometry element_geometry(const TriMeshP2& mesh, int t) {
    const auto& tv = mesh.tri_vertices[t];
    const Vec2 a = mesh.nodes[tv[0]], b = mesh.nodes[tv[1]], c = mesh.nodes[tv[2]];
    const Vec2 e1 = b - a, e2 = c - a;
    const double det = cross(e1, e2);
    ElementGeometry geom;
    geom.area = 0.5 * det;
    // inverse transpose of [e1 | e2]
    const double it00 = e2.y / det, it01 = -e1.y / det;
    const double it10 = -e2.x / det, it11 = e1.x / det;
    const auto& quad = element_quadrature();
    for (int q = 0; q < kQ; ++q) {
        const double xi = quad.points[q].x, eta = quad.points[q].y;
        geom.x[q] = {a.x + e1.x * xi + e2.x * eta, a.y + e1.y * xi + e2.y * eta};
        p2_shape(xi, eta, geom.shape[q]);
        std::array<Vec2, 6> ref;
        p2_shape_gradient(xi, eta, ref);
        for (int k = 0; k < 6; ++k)
            geom.grad[q][k] = {it00 * ref[k].x + it01 * ref[k].y,
                               it10 * ref[k].x + it11 * ref[k].y};
    }
    return geom;
}

// Local 12x12 stiffness, dof order (node, component) -> 2*node + component.
void local_stiffness(const ElementGeometry& geom, const KLField& field,
                     const std::function<double(int)>& modulus_at, double* local) {
    std::fill(local, local + 144, 0.0);
    const auto& quad = element_quadrature();
    for (int q = 0; q < kQ; ++q) {
        const double e_val = modulus_at(q);
        if (!(e_val > 0.0))
            throw ModelViolationError("assemble: non-positive Young's modulus at a quadrature point");
        const auto [mu, lambda] = field.lame(e_val);
        const double w = quad.weights[q] * geom.area;
        const double c2mu = 2.0 * mu * w, cmu = mu * w, clam = lambda * w;
        for (int i = 0; i < 6; ++i) {
            const double ax = geom.grad[q][i].x, ay = geom.grad[q][i].y;
            for (int j = 0; j < 6; ++j) {
                const double bx = geom.grad[q][j].x, by = geom.grad[q][j].y;
                local[(2 * i) * 12 + 2 * j] += c2mu * (ax * bx + 0.5 * ay * by) + clam * ax * bx;
                local[(2 * i) * 12 + 2 * j + 1] += cmu * ay * bx + clam * ax * by;
                local[(2 * i + 1) * 12 + 2 * j] += cmu * ax * by + clam * ay * bx;
                local[(2 * i + 1) * 12 + 2 * j + 1] +=
                    c2mu * (0.5 * ax * bx + ay * by) + clam * ay * by;
            }
        }
    }
}

Eigen::VectorXd assemble_rhs(const TriMeshP2& mesh, const DofMap& dofs, const BodyForce& force) {
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dofs.free_count);
    const auto& quad = element_quadrature();
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(mesh, t);
        const auto& nodes = mesh.tri_nodes[t];
        for (int q = 0; q < kQ; ++q) {
            const Vec2 f = force(geom.x[q]);
            const double w = quad.weights[q] * geom.area;
            for (int k = 0; k < 6; ++k) {
                const double v = w * geom.shape[q][k];
                const int i1 = dofs.at(nodes[k], 0);
                const int i2 = dofs.at(nodes[k], 1);
                if (i1 >= 0) rhs[i1] += v * f.x;
                if (i2 >= 0) rhs[i2] += v * f.y;
            }
        }
    }
    return rhs;
}

struct AssemblyPlan {
    Eigen::SparseMatrix<double> pattern;   // compressed, free x free
    std::vector<std::int32_t> scatter;     // triangle-major 12x12 value slots, -1 constrained
};

std::int32_t slot_of(const Eigen::SparseMatrix<double>& a, int row, int col) {
    const auto* outer = a.outerIndexPtr();
    const auto* inner = a.innerIndexPtr();
    const auto* lo = inner + outer[col];
    const auto* hi = inner + outer[col + 1];
    const auto* it = std::lower_bound(lo, hi, row);
    return static_cast<std::int32_t>(it - inner);
}

AssemblyPlan make_plan(const TriMeshP2& mesh, const DofMap& dofs) {
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.triangle_count()) * 144);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& nodes = mesh.tri_nodes[t];
        for (int i = 0; i < 6; ++i)
            for (int ci = 0; ci < 2; ++ci) {
                const int gi = dofs.at(nodes[i], ci);
                if (gi < 0) continue;
                for (int j = 0; j < 6; ++j)
                    for (int cj = 0; cj < 2; ++cj) {
                        const int gj = dofs.at(nodes[j], cj);
                        if (gj >= 0) trips.emplace_back(gi, gj, 0.0);
                    }
            }
    }
    AssemblyPlan plan;
    plan.pattern.resize(dofs.free_count, dofs.free_count);
    plan.pattern.setFromTriplets(trips.begin(), trips.end());
    plan.pattern.makeCompressed();

    plan.scatter.assign(static_cast<std::size_t>(mesh.triangle_count()) * 144, -1);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& nodes = mesh.tri_nodes[t];
        for (int i = 0; i < 6; ++i)
            for (int ci = 0; ci < 2; ++ci) {
                const int gi = dofs.at(nodes[i], ci);
                if (gi < 0) continue;
                for (int j = 0; j < 6; ++j)
                    for (int cj = 0; cj < 2; ++cj) {
                        const int gj = dofs.at(nodes[j], cj);
                        if (gj < 0) continue;
                        plan.scatter[static_cast<std::size_t>(t) * 144 + (2 * i + ci) * 12 + 2 * j +
                                     cj] = slot_of(plan.pattern, gi, gj);
                    }
            }
    }
    return plan;
}

void fill_values(const AssemblyPlan& plan, const TriMeshP2& mesh, const KLField& field,
                 const std::function<double(int t, int q, Vec2 x)>& modulus,
                 Eigen::SparseMatrix<double>& matrix) {
    double* values = matrix.valuePtr();
    std::fill(values, values + matrix.nonZeros(), 0.0);
    double local[144];
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(mesh, t);
        local_stiffness(geom, field, [&](int q) { return modulus(t, q, geom.x[q]); }, local);
        const std::int32_t* slots = plan.scatter.data() + static_cast<std::size_t>(t) * 144;
        for (int k = 0; k < 144; ++k)
            if (slots[k] >= 0) values[slots[k]] += local[k];
    }
}

Displacement run_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                       const TriMeshP2& mesh, const DofMap& dofs, const SolveOptions& options,
                       Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>* cached_ldlt) {
    Displacement out;
    out.mesh = &mesh;
    out.dofs = &dofs;

    const double b_norm = b.norm();
    Eigen::VectorXd u;
    std::string method = "ldlt";
    if (cached_ldlt) {
        cached_ldlt->factorize(a);
        if (cached_ldlt->info() != Eigen::Success)
            throw SolveError("solve: sparse factorization failed");
        u = cached_ldlt->solve(b);
    } else {
        Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(a);
        if (ldlt.info() != Eigen::Success)
            throw SolveError("solve: sparse factorization failed");
        u = ldlt.solve(b);
    }
    double residual = b_norm > 0.0 ? (a * u - b).norm() / b_norm : (a * u).norm();
    if (!(residual <= options.tolerance)) {
        Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
        cg.setTolerance(options.tolerance);
        cg.setMaxIterations(options.max_cg_iterations);
        cg.compute(a);
        u = cg.solveWithGuess(b, u);
        method = "cg";
        residual = b_norm > 0.0 ? (a * u - b).norm() / b_norm : (a * u).norm();
        if (!(residual <= options.tolerance))
            throw SolveError("solve: residual " + std::to_string(residual) +
                             " above tolerance after " + std::to_string(cg.iterations()) +
                             " cg iterations");
    }
    out.free_values = std::move(u);
    out.residual = residual;
    out.solver = method;
    return out;
}

}  // namespace

SparseSPD assemble(const TriMeshP2& mesh, const DofMap& dofs, const KLField& field,
                   std::span<const double> y, const BodyForce& force) {
    const AssemblyPlan plan = make_plan(mesh, dofs);
    SparseSPD system;
    system.matrix = plan.pattern;
    fill_values(plan, mesh, field,
                [&](int, int, Vec2 x) { return field.youngs_modulus(y, x); }, system.matrix);
    system.rhs = assemble_rhs(mesh, dofs, force);
    return system;
}

Eigen::SparseMatrix<double> assemble_unconstrained(const TriMeshP2& mesh, const KLField& field,
                                                   std::span<const double> y) {
    const int dof_count = 2 * mesh.node_count();
    std::vector<Eigen::Triplet<double>> trips;
    double local[144];
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(mesh, t);
        local_stiffness(geom, field,
                        [&](int q) { return field.youngs_modulus(y, geom.x[q]); }, local);
        const auto& nodes = mesh.tri_nodes[t];
        for (int i = 0; i < 6; ++i)
            for (int ci = 0; ci < 2; ++ci)
                for (int j = 0; j < 6; ++j)
                    for (int cj = 0; cj < 2; ++cj)
                        trips.emplace_back(2 * nodes[i] + ci, 2 * nodes[j] + cj,
                                           local[(2 * i + ci) * 12 + 2 * j + cj]);
    }
    Eigen::SparseMatrix<double> a(dof_count, dof_count);
    a.setFromTriplets(trips.begin(), trips.end());
    a.makeCompressed();
    return a;
}

Displacement solve(const SparseSPD& system, const TriMeshP2& mesh, const DofMap& dofs,
                   const SolveOptions& options) {
    return run_solve(system.matrix, system.rhs, mesh, dofs, options, nullptr);
}

Vec2 evaluate_at(const Displacement& u, Vec2 x) {
    const TriMeshP2& mesh = *u.mesh;
    const int n = mesh.n;
    if (!(x.x >= 0.0 && x.x <= 1.0 && x.y >= 0.0 && x.y <= 1.0))
        throw InputError("evaluate_at: point outside the closed unit square");

    auto cell_candidates = [n](double coord) {
        const double scaled = coord * n;
        int lo = static_cast<int>(std::floor(scaled));
        if (lo > n - 1) lo = n - 1;
        std::array<int, 2> cand{lo, -1};
        if (scaled == static_cast<double>(lo) && lo > 0) cand = {lo - 1, lo};
        return cand;
    };
    const auto is_cand = cell_candidates(x.x);
    const auto js_cand = cell_candidates(x.y);

    constexpr double eps = 1e-12;
    // Ties on shared edges resolve to the lowest triangle index.
    for (int jj : js_cand) {
        if (jj < 0) continue;
        for (int ii : is_cand) {
            if (ii < 0) continue;
            const int cell = jj * n + ii;
            for (int t = 2 * cell; t < 2 * cell + 2; ++t) {
                const auto& tv = mesh.tri_vertices[t];
                const Vec2 a = mesh.nodes[tv[0]];
                const Vec2 e1 = mesh.nodes[tv[1]] - a, e2 = mesh.nodes[tv[2]] - a;
                const Vec2 d = x - a;
                const double det = cross(e1, e2);
                const double xi = cross(d, e2) / det;
                const double eta = cross(e1, d) / det;
                if (xi >= -eps && eta >= -eps && xi + eta <= 1.0 + eps) {
                    std::array<double, 6> shape;
                    p2_shape(std::max(xi, 0.0), std::max(eta, 0.0), shape);
                    Vec2 value{0.0, 0.0};
                    const auto& nodes = mesh.tri_nodes[t];
                    for (int k = 0; k < 6; ++k) {
                        value.x += shape[k] * u.coefficient(nodes[k], 0);
                        value.y += shape[k] * u.coefficient(nodes[k], 1);
                    }
                    return value;
                }
            }
        }
    }
    throw InputError("evaluate_at: point location failed");  // unreachable
}

double qoi_integral(const Displacement& u) {
    const TriMeshP2& mesh = *u.mesh;
    const auto& quad = element_quadrature();
    KahanSum sum;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(mesh, t);
        const auto& nodes = mesh.tri_nodes[t];
        for (int q = 0; q < kQ; ++q) {
            double v = 0.0;
            for (int k = 0; k < 6; ++k)
                v += geom.shape[q][k] *
                     (u.coefficient(nodes[k], 0) + u.coefficient(nodes[k], 1));
            sum.add(quad.weights[q] * geom.area * v);
        }
    }
    return sum.value();
}

double l2_error(const Displacement& u, const std::function<Vec2(Vec2)>& exact) {
    // Twice-subdivided reference rule: 16 congruent sub-triangles x 7 points.
    struct RefRule {
        std::vector<Vec2> points;
        std::vector<double> weights;
    };
    static const RefRule fine = [] {
        RefRule r;
        const auto& quad = element_quadrature();
        std::vector<std::array<Vec2, 3>> tris{{Vec2{0, 0}, Vec2{1, 0}, Vec2{0, 1}}};
        for (int level = 0; level < 2; ++level) {
            std::vector<std::array<Vec2, 3>> next;
            for (const auto& tri : tris) {
                const Vec2 m01 = 0.5 * (tri[0] + tri[1]);
                const Vec2 m12 = 0.5 * (tri[1] + tri[2]);
                const Vec2 m20 = 0.5 * (tri[2] + tri[0]);
                next.push_back({tri[0], m01, m20});
                next.push_back({m01, tri[1], m12});
                next.push_back({m20, m12, tri[2]});
                next.push_back({m01, m12, m20});
            }
            tris = std::move(next);
        }
        for (const auto& tri : tris) {
            const Vec2 e1 = tri[1] - tri[0], e2 = tri[2] - tri[0];
            for (int q = 0; q < kQ; ++q) {
                const double xi = quad.points[q].x, eta = quad.points[q].y;
                r.points.push_back(tri[0] + xi * e1 + eta * e2);
                r.weights.push_back(quad.weights[q] / 16.0);
            }
        }
        return r;
    }();

    const TriMeshP2& mesh = *u.mesh;
    KahanSum sum;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const auto& tv = mesh.tri_vertices[t];
        const Vec2 a = mesh.nodes[tv[0]];
        const Vec2 e1 = mesh.nodes[tv[1]] - a, e2 = mesh.nodes[tv[2]] - a;
        const double area = 0.5 * cross(e1, e2);
        const auto& nodes = mesh.tri_nodes[t];
        for (std::size_t q = 0; q < fine.points.size(); ++q) {
            const double xi = fine.points[q].x, eta = fine.points[q].y;
            std::array<double, 6> shape;
            p2_shape(xi, eta, shape);
            Vec2 uh{0.0, 0.0};
            for (int k = 0; k < 6; ++k) {
                uh.x += shape[k] * u.coefficient(nodes[k], 0);
                uh.y += shape[k] * u.coefficient(nodes[k], 1);
            }
            const Vec2 x{a.x + e1.x * xi + e2.x * eta, a.y + e1.y * xi + e2.y * eta};
            const Vec2 diff = uh - exact(x);
            sum.add(fine.weights[q] * area * (diff.x * diff.x + diff.y * diff.y));
        }
    }
    return std::sqrt(sum.value());
}

void dump_solution(const Displacement& u, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("fem: cannot write " + path);
    out << "x,y,u1,u2\n";
    out.precision(17);
    const TriMeshP2& mesh = *u.mesh;
    for (int node = 0; node < mesh.node_count(); ++node)
        out << mesh.nodes[node].x << ',' << mesh.nodes[node].y << ',' << u.coefficient(node, 0)
            << ',' << u.coefficient(node, 1) << '\n';
}

Eigen::VectorXd interpolate_nodal(const TriMeshP2& mesh, const std::function<Vec2(Vec2)>& fn) {
    Eigen::VectorXd values(2 * mesh.node_count());
    for (int node = 0; node < mesh.node_count(); ++node) {
        const Vec2 v = fn(mesh.nodes[node]);
        values[2 * node] = v.x;
        values[2 * node + 1] = v.y;
    }
    return values;
}

ForwardSolver::ForwardSolver(const TriMeshP2& mesh, const DofMap& dofs, KLField field,
                             BodyForce force, SolveOptions options)
    : mesh_(&mesh),
      dofs_(&dofs),
      field_(std::move(field)),
      force_(std::move(force)),
      options_(options) {
    AssemblyPlan plan = make_plan(mesh, dofs);
    pattern_ = std::move(plan.pattern);
    scatter_ = std::move(plan.scatter);
    rhs_ = assemble_rhs(mesh, dofs, force_);

    const int s = field_.dimension();
    const auto& family = field_.family();
    basis_table_.resize(static_cast<std::size_t>(mesh.triangle_count()) * kQ * s);
    mean_table_.resize(static_cast<std::size_t>(mesh.triangle_count()) * kQ);
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(mesh, t);
        for (int q = 0; q < kQ; ++q) {
            mean_table_[static_cast<std::size_t>(t) * kQ + q] = family.mean(geom.x[q]);
            double* row = basis_table_.data() + (static_cast<std::size_t>(t) * kQ + q) * s;
            for (int j = 1; j <= s; ++j) row[j - 1] = family.basis(j, geom.x[q]);
        }
    }

    ldlt_ = std::make_unique<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>();
    ldlt_->analyzePattern(pattern_);
    analyzed_ = true;
}

Displacement ForwardSolver::solve_at(std::span<const double> y) {
    if (static_cast<int>(y.size()) != field_.dimension())
        throw InputError("forward: parameter vector length does not match the field");
    const int s = field_.dimension();

    double* values = pattern_.valuePtr();
    std::fill(values, values + pattern_.nonZeros(), 0.0);
    double local[144];
    for (int t = 0; t < mesh_->triangle_count(); ++t) {
        const ElementGeometry geom = element_geometry(*mesh_, t);
        const double* mean_row = mean_table_.data() + static_cast<std::size_t>(t) * kQ;
        local_stiffness(
            geom, field_,
            [&](int q) {
                const double* row = basis_table_.data() + (static_cast<std::size_t>(t) * kQ + q) * s;
                double value = mean_row[q];
                for (int j = 1; j <= s; ++j) value += y[j - 1] * row[j - 1];
                return value;
            },
            local);
        const std::int32_t* slots = scatter_.data() + static_cast<std::size_t>(t) * 144;
        for (int k = 0; k < 144; ++k)
            if (slots[k] >= 0) values[slots[k]] += local[k];
    }

    Displacement out = run_solve(pattern_, rhs_, *mesh_, *dofs_, options_, ldlt_.get());
    out.param.assign(y.begin(), y.end());
    return out;
}

}  // namespace eb::fem
