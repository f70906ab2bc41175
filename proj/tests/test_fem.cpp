#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "elastobayes/experiments.hpp"
#include "elastobayes/fem.hpp"
#include "oracles.hpp"

using namespace eb;
using namespace eb::fem;

namespace {

KLField unit_field() { return make_field("sine-product", 1, 0.4); }
const std::vector<double> kZeroParam{0.0};

// Modulus family that can go non-positive, for the abort path.
class HostileFamily final : public BasisFamily {
public:
    std::string name() const override { return "hostile"; }
    double mean(Vec2) const override { return 0.01; }
    double basis(int, Vec2) const override { return 1.0; }
    double amplitude(int) const override { return 1.0; }
    double mean_min() const override { return 0.01; }
    double mean_max() const override { return 0.01; }
};

Vec2 smooth_wave(Vec2 p) {
    const double pi = std::numbers::pi;
    return {std::sin(pi * p.x) * std::sin(pi * p.y), 0.0};
}

}  // namespace

TEST_CASE("mesh counting invariants") {
    SUBCASE("n = 2") {
        const TriMeshP2 mesh = build_mesh(2);
        CHECK(mesh.triangle_count() == 8);
        CHECK(mesh.num_vertices == 9);
        CHECK(mesh.num_edges == 16);
        CHECK(mesh.node_count() == 25);
    }
    SUBCASE("n = 4") {
        const TriMeshP2 mesh = build_mesh(4);
        CHECK(mesh.triangle_count() == 32);
        CHECK(mesh.num_vertices == 25);
    }
    SUBCASE("too coarse") { CHECK_THROWS_AS(build_mesh(1), eb::ConfigError); }
}

TEST_CASE("mesh geometry invariants") {
    for (int n : {2, 3, 8}) {
        const TriMeshP2 mesh = build_mesh(n);
        CHECK(mesh.h == std::sqrt(2.0) / n);
        double total = 0.0;
        const double expect_area = mesh.element_area();
        for (const auto& tv : mesh.tri_vertices) {
            const double twice =
                cross(mesh.nodes[tv[1]] - mesh.nodes[tv[0]], mesh.nodes[tv[2]] - mesh.nodes[tv[0]]);
            CHECK(twice > 0.0);  // consistent orientation
            CHECK(0.5 * twice == doctest::Approx(expect_area).epsilon(1e-14));
            total += 0.5 * twice;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-14));
        // boundary flags match coordinates exactly
        for (int v = 0; v < mesh.node_count(); ++v) {
            const Vec2 p = mesh.nodes[v];
            const bool on = p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
            CHECK(static_cast<bool>(mesh.boundary[v]) == on);
        }
    }
}

TEST_CASE("dof map partitions nodes") {
    const TriMeshP2 mesh = build_mesh(5);
    const DofMap dofs = make_dof_map(mesh);
    int boundary_nodes = 0;
    for (int v = 0; v < mesh.node_count(); ++v) boundary_nodes += mesh.boundary[v];
    CHECK(dofs.free_count == 2 * (mesh.node_count() - boundary_nodes));
    std::vector<bool> seen(dofs.free_count, false);
    for (int node = 0; node < mesh.node_count(); ++node)
        for (int c = 0; c < 2; ++c) {
            const int idx = dofs.at(node, c);
            if (mesh.boundary[node]) {
                CHECK(idx == -1);
            } else {
                REQUIRE(idx >= 0);
                REQUIRE(idx < dofs.free_count);
                CHECK_FALSE(seen[idx]);
                seen[idx] = true;
            }
        }
}

TEST_CASE("assembled matrix is symmetric and positive definite") {
    const TriMeshP2 mesh = build_mesh(6);
    const DofMap dofs = make_dof_map(mesh);
    const KLField field = make_field("sine-product", 4, 0.4);
    const std::vector<double> y{0.3, -0.2, 0.45, -0.45};
    const SparseSPD system = assemble(mesh, dofs, field, y, default_body_force());

    const Eigen::SparseMatrix<double> diff =
        Eigen::SparseMatrix<double>(system.matrix.transpose()) - system.matrix;
    double max_diag = 0.0;
    for (int i = 0; i < system.matrix.rows(); ++i)
        max_diag = std::max(max_diag, system.matrix.coeff(i, i));
    double max_asym = 0.0;
    for (int k = 0; k < diff.outerSize(); ++k)
        for (Eigen::SparseMatrix<double>::InnerIterator it(diff, k); it; ++it)
            max_asym = std::max(max_asym, std::abs(it.value()));
    CHECK(max_asym <= 1e-12 * max_diag);

    std::mt19937_64 rng(101);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        Eigen::VectorXd v(dofs.free_count);
        for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
        CHECK(v.dot(system.matrix * v) > 0.0);
    }
}

TEST_CASE("rigid translations are in the kernel of the unconstrained form") {
    const TriMeshP2 mesh = build_mesh(4);
    const KLField field = unit_field();
    const Eigen::SparseMatrix<double> full = assemble_unconstrained(mesh, field, kZeroParam);
    for (int component = 0; component < 2; ++component) {
        const Eigen::VectorXd ones = interpolate_nodal(mesh, [component](Vec2) {
            return component == 0 ? Vec2{1.0, 0.0} : Vec2{0.0, 1.0};
        });
        const Eigen::VectorXd residual = full * ones;
        CHECK(residual.lpNorm<Eigen::Infinity>() <= 1e-11);
    }
}

TEST_CASE("interpolant energy matches a dense quadrature oracle") {
    const TriMeshP2 mesh = build_mesh(4);
    const KLField field = unit_field();
    const auto [mu, lambda] = field.lame(1.0);

    const Eigen::SparseMatrix<double> full = assemble_unconstrained(mesh, field, kZeroParam);
    const Eigen::VectorXd w = interpolate_nodal(mesh, smooth_wave);
    const double energy_matrix = w.dot(full * w);

    // Independent route: dense Duffy-Gauss integration of the strain energy
    // of the interpolant, with test-side barycentric shape functions.
    const auto rule = oracle::duffy_triangle_rule(8);
    double energy_quad = 0.0;
    for (int t = 0; t < mesh.triangle_count(); ++t) {
        oracle::TriP2 tri;
        tri.a = mesh.nodes[mesh.tri_vertices[t][0]];
        tri.b = mesh.nodes[mesh.tri_vertices[t][1]];
        tri.c = mesh.nodes[mesh.tri_vertices[t][2]];
        for (int k = 0; k < 6; ++k) {
            const int node = mesh.tri_nodes[t][k];
            tri.values[k][0] = w[2 * node];
            tri.values[k][1] = w[2 * node + 1];
        }
        const double jac = tri.twice_area();  // times the reference weights (sum 1/2)
        for (const auto& qp : rule) {
            const Vec2 x = (1.0 - qp.xi - qp.eta) * tri.a + qp.xi * tri.b + qp.eta * tri.c;
            const auto g = tri.gradient(x);
            const double e11 = g[0][0], e22 = g[1][1];
            const double e12 = 0.5 * (g[0][1] + g[1][0]);
            const double div = e11 + e22;
            energy_quad +=
                qp.weight * jac *
                (2.0 * mu * (e11 * e11 + e22 * e22 + 2.0 * e12 * e12) + lambda * div * div);
        }
    }
    CHECK(energy_matrix == doctest::Approx(energy_quad).epsilon(1e-8));
}

TEST_CASE("non-positive modulus aborts assembly") {
    const TriMeshP2 mesh = build_mesh(3);
    const DofMap dofs = make_dof_map(mesh);
    const KLField hostile(std::make_shared<HostileFamily>(), 1, 0.4);
    const std::vector<double> bad{-0.4};
    CHECK_THROWS_AS((void)assemble(mesh, dofs, hostile, bad, default_body_force()),
                    eb::ModelViolationError);
    const std::vector<double> ok{0.4};
    CHECK_NOTHROW((void)assemble(mesh, dofs, hostile, ok, default_body_force()));
}

TEST_CASE("zero load gives the zero solution") {
    const TriMeshP2 mesh = build_mesh(4);
    const DofMap dofs = make_dof_map(mesh);
    SparseSPD system = assemble(mesh, dofs, unit_field(), kZeroParam, default_body_force());
    system.rhs.setZero();
    const Displacement u = solve(system, mesh, dofs);
    CHECK(u.free_values.norm() == 0.0);
    CHECK(u.residual == 0.0);
}

TEST_CASE("Galerkin residual is orthogonal to test vectors") {
    const TriMeshP2 mesh = build_mesh(8);
    const DofMap dofs = make_dof_map(mesh);
    const KLField field = make_field("sine-product", 4, 0.4);
    const std::vector<double> y{0.25, -0.4, 0.1, 0.3};
    const SparseSPD system = assemble(mesh, dofs, field, y, default_body_force());
    const Displacement u = solve(system, mesh, dofs);
    const Eigen::VectorXd residual = system.rhs - system.matrix * u.free_values;
    std::mt19937_64 rng(55);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const double tol = 1e-10;
    for (int trial = 0; trial < 20; ++trial) {
        Eigen::VectorXd v(dofs.free_count);
        for (int i = 0; i < v.size(); ++i) v[i] = gauss(rng);
        CHECK(std::abs(v.dot(residual)) <= 10.0 * tol * v.norm() * system.rhs.norm());
    }
}

TEST_CASE("manufactured force formula agrees with nested finite differences") {
    const KLField field = unit_field();
    const auto [mu, lambda] = field.lame(1.0);
    const BodyForce force = run::manufactured_force(mu, lambda);

    const double h = 1e-4;
    const auto grad_u = [&](Vec2 p) {
        // first derivatives of u* by central differences
        std::array<std::array<double, 2>, 2> g{};
        const Vec2 dx{h, 0.0}, dy{0.0, h};
        const Vec2 px = run::manufactured_solution(p + dx), mx = run::manufactured_solution(p - dx);
        const Vec2 py = run::manufactured_solution(p + dy), my = run::manufactured_solution(p - dy);
        g[0][0] = (px.x - mx.x) / (2 * h);
        g[0][1] = (py.x - my.x) / (2 * h);
        g[1][0] = (px.y - mx.y) / (2 * h);
        g[1][1] = (py.y - my.y) / (2 * h);
        return g;
    };
    const auto stress = [&](Vec2 p) {
        const auto g = grad_u(p);
        const double div = g[0][0] + g[1][1];
        std::array<double, 3> s{};  // s11, s22, s12
        s[0] = lambda * div + 2.0 * mu * g[0][0];
        s[1] = lambda * div + 2.0 * mu * g[1][1];
        s[2] = mu * (g[0][1] + g[1][0]);
        return s;
    };

    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> inside(0.2, 0.8);
    for (int trial = 0; trial < 15; ++trial) {
        const Vec2 p{inside(rng), inside(rng)};
        const Vec2 dx{h, 0.0}, dy{0.0, h};
        const auto sxp = stress(p + dx), sxm = stress(p - dx);
        const auto syp = stress(p + dy), sym = stress(p - dy);
        const double f1 = -((sxp[0] - sxm[0]) / (2 * h) + (syp[2] - sym[2]) / (2 * h));
        const double f2 = -((sxp[2] - sxm[2]) / (2 * h) + (syp[1] - sym[1]) / (2 * h));
        const Vec2 f = force(p);
        CHECK(f.x == doctest::Approx(f1).epsilon(5e-5));
        CHECK(f.y == doctest::Approx(f2).epsilon(5e-5));
    }
}

TEST_CASE("manufactured solution converges at third order") {
    const KLField field = unit_field();
    const auto [mu, lambda] = field.lame(1.0);
    const BodyForce force = run::manufactured_force(mu, lambda);

    std::vector<double> errs;
    for (int n : {8, 16, 32}) {
        const TriMeshP2 mesh = build_mesh(n);
        const DofMap dofs = make_dof_map(mesh);
        ForwardSolver solver(mesh, dofs, field, force);
        const Displacement u = solver.solve_at(kZeroParam);
        errs.push_back(l2_error(u, run::manufactured_solution));

        if (n == 32) {
            // interior point value against the known solution
            const Vec2 mid = evaluate_at(u, {0.5, 0.5});
            const double budget = 5.0 * mesh.h * mesh.h * mesh.h;
            CHECK(std::abs(mid.x - 1.0) < budget);
            CHECK(std::abs(mid.y - 0.0625) < budget);
            // homogeneous boundary is exact
            for (int node = 0; node < mesh.node_count(); ++node)
                if (mesh.boundary[node]) {
                    CHECK(u.coefficient(node, 0) == 0.0);
                    CHECK(u.coefficient(node, 1) == 0.0);
                }
            CHECK(evaluate_at(u, {0.0, 0.37}).x == 0.0);
            CHECK(evaluate_at(u, {1.0, 0.37}).y == 0.0);
        }
    }
    for (std::size_t i = 1; i < errs.size(); ++i) {
        const double eoc = std::log2(errs[i - 1] / errs[i]);
        INFO("l2 eoc step ", i, " = ", eoc);
        CHECK(eoc > 2.7);
        CHECK(eoc < 3.3);
    }
}

TEST_CASE("point evaluation") {
    const TriMeshP2 mesh = build_mesh(6);
    const DofMap dofs = make_dof_map(mesh);
    const KLField field = unit_field();
    ForwardSolver solver(mesh, dofs, field, default_body_force());
    const Displacement u = solver.solve_at(kZeroParam);

    SUBCASE("boundary values are exactly zero") {
        for (double t : {0.0, 0.25, 0.6, 1.0}) {
            for (const Vec2 p : {Vec2{t, 0.0}, Vec2{t, 1.0}, Vec2{0.0, t}, Vec2{1.0, t}}) {
                const Vec2 v = evaluate_at(u, p);
                CHECK(v.x == 0.0);
                CHECK(v.y == 0.0);
            }
        }
    }
    SUBCASE("mesh vertices return the nodal coefficients") {
        for (int node : {7, 15, 24}) {
            if (node >= mesh.num_vertices || mesh.boundary[node]) continue;
            const Vec2 v = evaluate_at(u, mesh.nodes[node]);
            CHECK(v.x == doctest::Approx(u.coefficient(node, 0)).epsilon(1e-14));
            CHECK(v.y == doctest::Approx(u.coefficient(node, 1)).epsilon(1e-14));
        }
    }
    SUBCASE("continuity across shared edges") {
        // Points on inter-cell lines: both adjacent elements agree, so the
        // returned value must coincide with a direct evaluation in each.
        std::mt19937_64 rng(31);
        std::uniform_real_distribution<double> unit(0.05, 0.95);
        for (int trial = 0; trial < 20; ++trial) {
            const double yy = unit(rng);
            const Vec2 p{3.0 / 6.0, yy};  // vertical mesh line x = 0.5
            const Vec2 via_library = evaluate_at(u, p);
            for (int side = 0; side < 2; ++side) {
                const int cell_i = 2 + side;  // cells left and right of the line
                const int cell_j = std::min(static_cast<int>(yy * 6.0), 5);
                for (int t = 2 * (cell_j * 6 + cell_i); t <= 2 * (cell_j * 6 + cell_i) + 1; ++t) {
                    oracle::TriP2 tri;
                    tri.a = mesh.nodes[mesh.tri_vertices[t][0]];
                    tri.b = mesh.nodes[mesh.tri_vertices[t][1]];
                    tri.c = mesh.nodes[mesh.tri_vertices[t][2]];
                    double l1, l2, l3;
                    tri.bary(p, l1, l2, l3);
                    if (l1 < -1e-12 || l2 < -1e-12 || l3 < -1e-12) continue;
                    for (int k = 0; k < 6; ++k) {
                        const int node = mesh.tri_nodes[t][k];
                        tri.values[k][0] = u.coefficient(node, 0);
                        tri.values[k][1] = u.coefficient(node, 1);
                    }
                    const Vec2 direct = tri.value(p);
                    CHECK(via_library.x == doctest::Approx(direct.x).epsilon(1e-12));
                    CHECK(via_library.y == doctest::Approx(direct.y).epsilon(1e-12));
                }
            }
        }
    }
    SUBCASE("outside the domain is an input error") {
        CHECK_THROWS_AS((void)evaluate_at(u, {1.2, 0.5}), eb::InputError);
        CHECK_THROWS_AS((void)evaluate_at(u, {0.5, -0.01}), eb::InputError);
    }
}

TEST_CASE("quantity of interest") {
    const TriMeshP2 mesh = build_mesh(8);
    const DofMap dofs = make_dof_map(mesh);

    SUBCASE("zero displacement integrates to zero") {
        Displacement zero;
        zero.mesh = &mesh;
        zero.dofs = &dofs;
        zero.free_values = Eigen::VectorXd::Zero(dofs.free_count);
        CHECK(qoi_integral(zero) == 0.0);
    }
    SUBCASE("interpolated separable quartic") {
        // int x(1-x)y(1-y) = 1/36; the P2 interpolation error adds O(h^3).
        auto quartic = [](Vec2 p) { return Vec2{p.x * (1 - p.x) * p.y * (1 - p.y), 0.0}; };
        std::vector<double> errs;
        for (int n : {8, 16}) {
            const TriMeshP2 fine = build_mesh(n);
            const DofMap fine_dofs = make_dof_map(fine);
            const Eigen::VectorXd nodal = interpolate_nodal(fine, quartic);
            Displacement w;
            w.mesh = &fine;
            w.dofs = &fine_dofs;
            w.free_values = Eigen::VectorXd::Zero(fine_dofs.free_count);
            for (int node = 0; node < fine.node_count(); ++node)
                for (int c = 0; c < 2; ++c)
                    if (fine_dofs.at(node, c) >= 0)
                        w.free_values[fine_dofs.at(node, c)] = nodal[2 * node + c];
            const double err = std::abs(qoi_integral(w) - 1.0 / 36.0);
            errs.push_back(err);
            CHECK(err < 2.0 * fine.h * fine.h * fine.h);
        }
        CHECK(errs[1] < errs[0]);
    }
    SUBCASE("linearity") {
        std::mt19937_64 rng(19);
        std::normal_distribution<double> gauss(0.0, 1.0);
        Displacement a, b, sum;
        for (Displacement* d : {&a, &b, &sum}) {
            d->mesh = &mesh;
            d->dofs = &dofs;
            d->free_values = Eigen::VectorXd(dofs.free_count);
        }
        for (int i = 0; i < dofs.free_count; ++i) {
            a.free_values[i] = gauss(rng);
            b.free_values[i] = gauss(rng);
            sum.free_values[i] = a.free_values[i] + b.free_values[i];
        }
        CHECK(qoi_integral(sum) ==
              doctest::Approx(qoi_integral(a) + qoi_integral(b)).epsilon(1e-13));
    }
}

TEST_CASE("forward composition") {
    const TriMeshP2 mesh = build_mesh(8);
    const DofMap dofs = make_dof_map(mesh);
    const KLField field = make_field("sine-product", 6, 0.4);
    const BodyForce force = default_body_force();
    ForwardSolver solver(mesh, dofs, field, force);

    SUBCASE("matches the direct call chain bit for bit") {
        for (const std::vector<double>& y :
             {std::vector<double>(6, 0.0), std::vector<double>{0.1, -0.3, 0.45, 0.0, -0.2, 0.05}}) {
            const Displacement via_solver = solver.solve_at(y);
            const SparseSPD system = assemble(mesh, dofs, field, y, force);
            const Displacement direct = solve(system, mesh, dofs);
            REQUIRE(via_solver.free_values.size() == direct.free_values.size());
            for (int i = 0; i < direct.free_values.size(); ++i)
                REQUIRE(via_solver.free_values[i] == direct.free_values[i]);
        }
    }
    SUBCASE("deterministic across repeated solves") {
        const std::vector<double> y{0.2, 0.1, -0.4, 0.3, 0.0, -0.1};
        const Displacement first = solver.solve_at(y);
        const Displacement second = solver.solve_at(y);
        for (int i = 0; i < first.free_values.size(); ++i)
            REQUIRE(first.free_values[i] == second.free_values[i]);
        CHECK(first.param == y);
        CHECK(first.residual <= 1e-10);
        CHECK(first.solver == "ldlt");
    }
    SUBCASE("small parameter changes move the solution a little") {
        std::vector<double> y{0.2, 0.1, -0.4, 0.3, 0.0, -0.1};
        const Displacement base = solver.solve_at(y);
        y[0] += 1e-3;
        const Displacement moved = solver.solve_at(y);
        const double rel =
            (moved.free_values - base.free_values).norm() / base.free_values.norm();
        CHECK(rel > 0.0);
        CHECK(rel < 0.05);  // smoke only, no sharp bound claimed
    }
}

TEST_CASE("mesh and solution dumps") {
    namespace fs = std::filesystem;
    fs::create_directories("tmp_fem");
    const TriMeshP2 mesh = build_mesh(3);
    dump_mesh(mesh, "tmp_fem/mesh.txt");
    {
        std::ifstream in("tmp_fem/mesh.txt");
        std::string word;
        int count = 0;
        in >> word >> count;
        CHECK(word == "vertices");
        CHECK(count == 16);
    }
    const DofMap dofs = make_dof_map(mesh);
    ForwardSolver solver(mesh, dofs, unit_field(), default_body_force());
    dump_solution(solver.solve_at(kZeroParam), "tmp_fem/solution.csv");
    {
        std::ifstream in("tmp_fem/solution.csv");
        std::string line;
        std::getline(in, line);
        CHECK(line == "x,y,u1,u2");
        int rows = 0;
        while (std::getline(in, line)) ++rows;
        CHECK(rows == mesh.node_count());
    }
}
