#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <array>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "elastobayes/field.hpp"
#include "elastobayes/mesh.hpp"

namespace eb::fem {

using BodyForce = std::function<Vec2(Vec2)>;

/// Body force of the default experiment: f(x) = (2 x1 + 10, x2 - 3).
BodyForce default_body_force();
/// Affine force (a1 x1 + b1 x2 + c1, a2 x1 + b2 x2 + c2) from 6 coefficients.
BodyForce affine_body_force(const std::array<double, 6>& coeff);

/// Quadratic Lagrange shape values/reference gradients on the unit triangle.
/// Node order: vertices 0,1,2 then midpoints of edges 01, 12, 20.
void p2_shape(double xi, double eta, std::array<double, 6>& value);
void p2_shape_gradient(double xi, double eta, std::array<Vec2, 6>& grad);

/// Symmetric triangle rule, exact for polynomials up to degree 5.
struct TriangleQuadrature {
    static constexpr int size = 7;
    std::array<Vec2, size> points;   // reference coordinates
    std::array<double, size> weights;  // sum to 1; scale by element area
};
const TriangleQuadrature& element_quadrature();

/// Assembled stiffness and load restricted to the free dofs.
struct SparseSPD {
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd rhs;
};

struct Displacement {
    const TriMeshP2* mesh = nullptr;
    const DofMap* dofs = nullptr;
    Eigen::VectorXd free_values;
    double residual = 0.0;        // achieved relative residual
    std::string solver;           // "ldlt" or "cg"
    std::vector<double> param;    // parameter vector of the solve

    double coefficient(int node, int component) const {
        const int idx = dofs->at(node, component);
        return idx < 0 ? 0.0 : free_values[idx];
    }
};

/// Bilinear form int 2 mu eps(u):eps(v) + lambda div u div v and load
/// int f . v over the free dofs. Non-positive modulus at a quadrature point
/// raises ModelViolationError.
SparseSPD assemble(const TriMeshP2& mesh, const DofMap& dofs, const KLField& field,
                   std::span<const double> y, const BodyForce& force);

/// Full stiffness over all dofs (no boundary conditions); diagnostics only.
Eigen::SparseMatrix<double> assemble_unconstrained(const TriMeshP2& mesh, const KLField& field,
                                                   std::span<const double> y);

struct SolveOptions {
    double tolerance = 1e-10;  // relative residual
    int max_cg_iterations = 20000;
};

/// Sparse Cholesky first, conjugate-gradient fallback; raises SolveError if
/// the requested residual is not reached.
Displacement solve(const SparseSPD& system, const TriMeshP2& mesh, const DofMap& dofs,
                   const SolveOptions& options = {});

/// P2 interpolant value at a point of the closed unit square. Location ties
/// on shared edges resolve to the lowest element index.
Vec2 evaluate_at(const Displacement& u, Vec2 x);

/// int (u1 + u2) dx by element quadrature (exact for the P2 interpolant).
double qoi_integral(const Displacement& u);

/// L2 distance to a reference displacement field, integrated with a
/// twice-subdivided element rule so the quadrature error stays far below
/// the discretization error.
double l2_error(const Displacement& u, const std::function<Vec2(Vec2)>& exact);

/// CSV dump: node x, y, u1, u2.
void dump_solution(const Displacement& u, const std::string& path);

/// Interpolate an analytic field onto all P2 nodes (both components).
Eigen::VectorXd interpolate_nodal(const TriMeshP2& mesh, const std::function<Vec2(Vec2)>& fn);

/// Repeated solves against one mesh/field/force: the sparsity pattern, its
/// symbolic factorization, the load vector and the per-quadrature-point
/// basis values are computed once. Each solve owns its numeric buffers, so
/// distinct instances may run concurrently.
class ForwardSolver {
public:
    ForwardSolver(const TriMeshP2& mesh, const DofMap& dofs, KLField field, BodyForce force,
                  SolveOptions options = {});

    Displacement solve_at(std::span<const double> y);

    const TriMeshP2& mesh() const { return *mesh_; }
    const DofMap& dofs() const { return *dofs_; }
    const KLField& field() const { return field_; }
    const BodyForce& force() const { return force_; }
    const SolveOptions& options() const { return options_; }

    /// Fresh instance sharing the immutable inputs; for worker threads.
    ForwardSolver clone() const { return ForwardSolver(*mesh_, *dofs_, field_, force_, options_); }

private:
    const TriMeshP2* mesh_;
    const DofMap* dofs_;
    KLField field_;
    BodyForce force_;
    SolveOptions options_;

    Eigen::SparseMatrix<double> pattern_;
    Eigen::VectorXd rhs_;
    std::vector<double> basis_table_;  // element x qpoint x dimension
    std::vector<double> mean_table_;   // element x qpoint
    std::vector<std::int32_t> scatter_;  // element-local pair -> value slot
    std::unique_ptr<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>> ldlt_;
    bool analyzed_ = false;
};

}  // namespace eb::fem
