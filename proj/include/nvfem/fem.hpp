#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "nvfem/errors.hpp"
#include "nvfem/mesh.hpp"

namespace nvfem {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Vector = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;

// ---------------------------------------------------------------------------
// Reference element: P2 Lagrange on the unit triangle (0,0)-(1,0)-(0,1).
// Nodes 0..2 are the vertices, node 3+m is the midpoint of the edge opposite
// vertex m, i.e. node 3 = midpoint(v1,v2), 4 = midpoint(v2,v0),
// 5 = midpoint(v0,v1).
// ---------------------------------------------------------------------------
struct ReferenceElementP2 {
    static constexpr int num_nodes = 6;

    static std::array<Vec2, 6> nodes() {
        return {Vec2(0, 0),     Vec2(1, 0),     Vec2(0, 1),
                Vec2(0.5, 0.5), Vec2(0, 0.5),   Vec2(0.5, 0)};
    }

    static std::array<double, 6> shape(const Vec2& p) {
        const double l0 = 1.0 - p.x() - p.y();
        const double l1 = p.x();
        const double l2 = p.y();
        return {l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1),
                4 * l1 * l2,       4 * l2 * l0,       4 * l0 * l1};
    }

    /// Gradients in reference coordinates.
    static std::array<Vec2, 6> shape_grad(const Vec2& p) {
        const double l0 = 1.0 - p.x() - p.y();
        const double l1 = p.x();
        const double l2 = p.y();
        const Vec2 g0(-1, -1), g1(1, 0), g2(0, 1);
        return {g0 * (4 * l0 - 1),
                g1 * (4 * l1 - 1),
                g2 * (4 * l2 - 1),
                4 * (g1 * l2 + g2 * l1),
                4 * (g2 * l0 + g0 * l2),
                4 * (g0 * l1 + g1 * l0)};
    }
};

// ---------------------------------------------------------------------------
// Quadrature
// ---------------------------------------------------------------------------
struct QuadratureRule {
    std::vector<Vec2> points;    // reference-triangle coordinates
    std::vector<double> weights; // sum to 1/2 (reference measure)
    int degree = 0;              // polynomials integrated exactly
};

struct EdgeQuadratureRule {
    std::vector<double> points;  // on [0,1]
    std::vector<double> weights; // sum to 1
    int degree = 0;
};

namespace detail {

/// 5-point Gauss-Legendre on [0,1], exact to degree 9.
inline void gauss5(std::array<double, 5>& x, std::array<double, 5>& w) {
    const double a = std::sqrt(5.0 - 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    const double b = std::sqrt(5.0 + 2.0 * std::sqrt(10.0 / 7.0)) / 3.0;
    const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
    const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
    x = {-b, -a, 0.0, a, b};
    w = {wb, wa, 128.0 / 225.0, wa, wb};
    for (int i = 0; i < 5; ++i) {
        x[i] = 0.5 * (x[i] + 1.0);
        w[i] *= 0.5;
    }
}

} // namespace detail

/// Collapsed (Duffy) 5x5 Gauss product rule on the reference triangle.
/// Exact for polynomials up to total degree 8.
inline QuadratureRule triangle_quadrature() {
    std::array<double, 5> x, w;
    detail::gauss5(x, w);
    QuadratureRule q;
    q.degree = 8;
    for (int i = 0; i < 5; ++i) {
        for (int j = 0; j < 5; ++j) {
            q.points.emplace_back(x[i], x[j] * (1.0 - x[i]));
            q.weights.push_back(w[i] * w[j] * (1.0 - x[i]));
        }
    }
    return q;
}

/// 5-point Gauss rule on [0,1], exact to degree 9, for boundary edges.
inline EdgeQuadratureRule edge_quadrature() {
    std::array<double, 5> x, w;
    detail::gauss5(x, w);
    EdgeQuadratureRule q;
    q.degree = 9;
    q.points.assign(x.begin(), x.end());
    q.weights.assign(w.begin(), w.end());
    return q;
}

// ---------------------------------------------------------------------------
// DOF map: vertex DOFs first (index = vertex id), then one DOF per edge
// midpoint (nv + edge id). V carries Dirichlet structure, W is free.
// ---------------------------------------------------------------------------
enum class SpaceKind { V, W };

class DofMap {
public:
    DofMap(const Mesh& mesh, SpaceKind kind) : mesh_(&mesh), kind_(kind) {
        const int nv = mesh.num_vertices();
        n_dofs_ = nv + mesh.num_edges();
        cell_dofs_.resize(mesh.num_cells());
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const auto& cell = mesh.cells[c];
            cell_dofs_[c] = {cell[0],
                             cell[1],
                             cell[2],
                             nv + mesh.edge_index(cell[1], cell[2]),
                             nv + mesh.edge_index(cell[2], cell[0]),
                             nv + mesh.edge_index(cell[0], cell[1])};
        }
        dof_coords_.resize(n_dofs_);
        for (int v = 0; v < nv; ++v) dof_coords_[v] = mesh.vertices[v];
        for (int e = 0; e < mesh.num_edges(); ++e)
            dof_coords_[nv + e] = 0.5 * (mesh.vertices[mesh.edges[e][0]] +
                                         mesh.vertices[mesh.edges[e][1]]);

        is_boundary_.assign(n_dofs_, false);
        for (const auto& b : mesh.boundary_edges) {
            is_boundary_[b.verts[0]] = true;
            is_boundary_[b.verts[1]] = true;
            is_boundary_[nv + mesh.edge_index(b.verts[0], b.verts[1])] = true;
        }
        interior_index_.assign(n_dofs_, -1);
        for (int d = 0; d < n_dofs_; ++d) {
            if (is_boundary_[d]) boundary_dofs_.push_back(d);
            else {
                interior_index_[d] = static_cast<int>(interior_dofs_.size());
                interior_dofs_.push_back(d);
            }
        }
    }

    const Mesh& mesh() const { return *mesh_; }
    SpaceKind kind() const { return kind_; }
    int size() const { return n_dofs_; }
    const std::array<int, 6>& cell_dofs(int cell) const { return cell_dofs_[cell]; }
    const Vec2& dof_coord(int dof) const { return dof_coords_[dof]; }
    bool is_boundary_dof(int dof) const { return is_boundary_[dof]; }
    const std::vector<int>& boundary_dofs() const { return boundary_dofs_; }
    const std::vector<int>& interior_dofs() const { return interior_dofs_; }
    /// Position of dof in the interior numbering, -1 for boundary DOFs.
    int interior_index(int dof) const { return interior_index_[dof]; }
    int num_interior() const { return static_cast<int>(interior_dofs_.size()); }

private:
    const Mesh* mesh_;
    SpaceKind kind_;
    int n_dofs_;
    std::vector<std::array<int, 6>> cell_dofs_;
    std::vector<Vec2> dof_coords_;
    std::vector<bool> is_boundary_;
    std::vector<int> boundary_dofs_;
    std::vector<int> interior_dofs_;
    std::vector<int> interior_index_;
};

inline DofMap build_dofmap(const Mesh& m, SpaceKind kind) { return DofMap(m, kind); }

// ---------------------------------------------------------------------------
// Element geometry
// ---------------------------------------------------------------------------
struct ElementMap {
    Vec2 origin;
    Mat2 jacobian;     // columns are edge vectors from vertex 0
    Mat2 inv_jac_t;    // maps reference gradients to physical ones
    double det_jac;    // = 2 * cell area

    ElementMap(const Mesh& m, int cell) {
        const Vec2& p0 = m.vertices[m.cells[cell][0]];
        const Vec2& p1 = m.vertices[m.cells[cell][1]];
        const Vec2& p2 = m.vertices[m.cells[cell][2]];
        origin = p0;
        jacobian.col(0) = p1 - p0;
        jacobian.col(1) = p2 - p0;
        det_jac = jacobian.determinant();
        inv_jac_t = jacobian.inverse().transpose();
    }

    Vec2 to_physical(const Vec2& ref) const { return origin + jacobian * ref; }
    Vec2 to_reference(const Vec2& x) const {
        return jacobian.inverse() * (x - origin);
    }
};

// ---------------------------------------------------------------------------
// FE function
// ---------------------------------------------------------------------------
class FEFunction {
public:
    FEFunction() = default;
    explicit FEFunction(const DofMap& dm) : dm_(&dm), coeffs_(Vector::Zero(dm.size())) {}
    FEFunction(const DofMap& dm, Vector coeffs) : dm_(&dm), coeffs_(std::move(coeffs)) {
        if (coeffs_.size() != dm.size())
            throw dimension_mismatch("FEFunction: coefficient length does not match DOF count");
    }

    const DofMap& dofmap() const { return *dm_; }
    const Vector& coeffs() const { return coeffs_; }
    Vector& coeffs() { return coeffs_; }

    double evaluate(int cell, const Vec2& ref) const {
        const auto phi = ReferenceElementP2::shape(ref);
        const auto& dofs = dm_->cell_dofs(cell);
        double v = 0.0;
        for (int a = 0; a < 6; ++a) v += coeffs_[dofs[a]] * phi[a];
        return v;
    }

    Vec2 evaluate_gradient(int cell, const Vec2& ref) const {
        const auto grad = ReferenceElementP2::shape_grad(ref);
        const auto& dofs = dm_->cell_dofs(cell);
        const ElementMap em(dm_->mesh(), cell);
        Vec2 g = Vec2::Zero();
        for (int a = 0; a < 6; ++a) g += coeffs_[dofs[a]] * (em.inv_jac_t * grad[a]);
        return g;
    }

private:
    const DofMap* dm_ = nullptr;
    Vector coeffs_;
};

/// Nodal interpolant: coefficients are f at the DOF coordinates.
template <class F>
FEFunction interpolate(F&& f, const DofMap& dm) {
    FEFunction u(dm);
    for (int d = 0; d < dm.size(); ++d) u.coeffs()[d] = f(dm.dof_coord(d));
    return u;
}

// ---------------------------------------------------------------------------
// Assembly
// ---------------------------------------------------------------------------
struct BasisEval {
    double value;
    Vec2 grad; // physical gradient
};

/// kernel(cell, x, trial, test) -> contribution density at a quadrature point.
using VolumeKernel =
    std::function<double(int, const Vec2&, const BasisEval&, const BasisEval&)>;

/// kernel(cell, x, outward normal, trial, test) on boundary edges.
using BoundaryKernel = std::function<double(int, const Vec2&, const Vec2&,
                                            const BasisEval&, const BasisEval&)>;

/// Element-loop assembler shared by all bilinear forms:
/// A[test, trial] = sum_cells sum_qp w * kernel.
inline SparseMatrix assemble_generic(const VolumeKernel& kernel, const DofMap& trial,
                                     const DofMap& test, const QuadratureRule& quad) {
    if (&trial.mesh() != &test.mesh())
        throw dimension_mismatch("assemble_generic: trial and test live on different meshes");
    const Mesh& mesh = trial.mesh();
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(static_cast<std::size_t>(mesh.num_cells()) * 36);

    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        Eigen::Matrix<double, 6, 6> local = Eigen::Matrix<double, 6, 6>::Zero();
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const Vec2& ref = quad.points[q];
            const double w = quad.weights[q] * em.det_jac;
            const Vec2 x = em.to_physical(ref);
            const auto phi = ReferenceElementP2::shape(ref);
            const auto dphi = ReferenceElementP2::shape_grad(ref);
            std::array<BasisEval, 6> basis;
            for (int a = 0; a < 6; ++a)
                basis[a] = {phi[a], em.inv_jac_t * dphi[a]};
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j)
                    local(i, j) += w * kernel(c, x, basis[j], basis[i]);
        }
        const auto& tr = trial.cell_dofs(c);
        const auto& te = test.cell_dofs(c);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                trips.emplace_back(te[i], tr[j], local(i, j));
    }

    SparseMatrix A(test.size(), trial.size());
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

inline SparseMatrix assemble_boundary(const BoundaryKernel& kernel, const DofMap& trial,
                                      const DofMap& test, const EdgeQuadratureRule& quad) {
    if (&trial.mesh() != &test.mesh())
        throw dimension_mismatch("assemble_boundary: trial and test live on different meshes");
    const Mesh& mesh = trial.mesh();
    std::vector<Eigen::Triplet<double>> trips;

    for (const auto& be : mesh.boundary_edges) {
        const int c = be.cell;
        const ElementMap em(mesh, c);
        const Vec2 a = mesh.vertices[be.verts[0]];
        const Vec2 b = mesh.vertices[be.verts[1]];
        const double length = (b - a).norm();
        const Vec2 ref_a = em.to_reference(a);
        const Vec2 ref_b = em.to_reference(b);

        Eigen::Matrix<double, 6, 6> local = Eigen::Matrix<double, 6, 6>::Zero();
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const double t = quad.points[q];
            const double w = quad.weights[q] * length;
            const Vec2 ref = ref_a + t * (ref_b - ref_a);
            const Vec2 x = em.to_physical(ref);
            const auto phi = ReferenceElementP2::shape(ref);
            const auto dphi = ReferenceElementP2::shape_grad(ref);
            std::array<BasisEval, 6> basis;
            for (int k = 0; k < 6; ++k)
                basis[k] = {phi[k], em.inv_jac_t * dphi[k]};
            for (int i = 0; i < 6; ++i)
                for (int j = 0; j < 6; ++j)
                    local(i, j) += w * kernel(c, x, be.normal, basis[j], basis[i]);
        }
        const auto& tr = trial.cell_dofs(c);
        const auto& te = test.cell_dofs(c);
        for (int i = 0; i < 6; ++i)
            for (int j = 0; j < 6; ++j)
                trips.emplace_back(te[i], tr[j], local(i, j));
    }

    SparseMatrix A(test.size(), trial.size());
    A.setFromTriplets(trips.begin(), trips.end());
    A.makeCompressed();
    return A;
}

/// Linear functional sum_cells int f(cell, x) * phi_test.
template <class F>
Vector assemble_load(F&& f, const DofMap& test, const QuadratureRule& quad) {
    const Mesh& mesh = test.mesh();
    Vector rhs = Vector::Zero(test.size());
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        const auto& dofs = test.cell_dofs(c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const Vec2& ref = quad.points[q];
            const double w = quad.weights[q] * em.det_jac;
            const double fv = f(c, ref, em.to_physical(ref));
            const auto phi = ReferenceElementP2::shape(ref);
            for (int a = 0; a < 6; ++a) rhs[dofs[a]] += w * fv * phi[a];
        }
    }
    return rhs;
}

inline SparseMatrix assemble_mass_matrix(const DofMap& dm, const QuadratureRule& quad) {
    return assemble_generic(
        [](int, const Vec2&, const BasisEval& u, const BasisEval& v) {
            return u.value * v.value;
        },
        dm, dm, quad);
}

// ---------------------------------------------------------------------------
// Direct sparse solve
// ---------------------------------------------------------------------------
class SparseFactorization {
public:
    explicit SparseFactorization(const SparseMatrix& A) {
        if (A.rows() != A.cols())
            throw dimension_mismatch("SparseFactorization: matrix must be square");
        lu_.compute(A);
        if (lu_.info() != Eigen::Success)
            throw singular_matrix("sparse factorization failed (zero pivot)");
    }

    Vector solve(const Vector& b) const {
        Vector x = lu_.solve(b);
        if (lu_.info() != Eigen::Success)
            throw singular_matrix("sparse triangular solve failed");
        return x;
    }

private:
    Eigen::SparseLU<SparseMatrix, Eigen::COLAMDOrdering<int>> lu_;
};

inline Vector solve_sparse(const SparseMatrix& A, const Vector& b) {
    return SparseFactorization(A).solve(b);
}

} // namespace nvfem
