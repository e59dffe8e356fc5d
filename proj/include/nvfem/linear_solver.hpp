#pragma once

#include <functional>
#include <utility>

#include "nvfem/fem.hpp"
#include "nvfem/hessian.hpp"

namespace nvfem {

/// Coefficients of A(x) : D^2 u + b(x) . grad u = f(x), u = g on the
/// boundary. Volume coefficients see the owning cell and reference point so
/// Newton callers can evaluate frozen discrete iterates exactly.
struct LinearNVProblem {
    std::function<Mat2(int cell, const Vec2& ref, const Vec2& x)> A;
    std::function<Vec2(int cell, const Vec2& ref, const Vec2& x)> b; // may be empty
    std::function<double(int cell, const Vec2& ref, const Vec2& x)> f;
    std::function<double(const Vec2& x)> g;
};

inline LinearNVProblem make_constant_problem(
    const Mat2& A, std::function<double(const Vec2&)> f,
    std::function<double(const Vec2&)> g) {
    LinearNVProblem p;
    p.A = [A](int, const Vec2&, const Vec2&) { return A; };
    p.f = [f = std::move(f)](int, const Vec2&, const Vec2& x) { return f(x); };
    p.g = std::move(g);
    return p;
}

struct LinearNVSolution {
    FEFunction u;   // full V coefficients, boundary DOFs carry the lift
    HessianField H; // auxiliary Hessian from the monolithic solve
};

struct BlockSystem {
    SparseMatrix mat; // unknowns [u_interior | h11 | h12 | h22]
    Vector rhs;
    Vector lift; // full V length, g at boundary DOFs, zero inside
    int n_interior;
    int n_w;
};

/// Per-mesh context for the mixed system (primal unknown + auxiliary
/// Hessian). The Hessian-definition rows are coefficient-independent and are
/// assembled once; each solve only rebuilds the PDE row.
class NonvariationalSolver {
public:
    explicit NonvariationalSolver(const Mesh& mesh)
        : mesh_(&mesh),
          vdm_(mesh, SpaceKind::V),
          wdm_(mesh, SpaceKind::W),
          quad_(triangle_quadrature()),
          equad_(edge_quadrature()),
          mass_(assemble_mass_matrix(wdm_, quad_)),
          blocks_(assemble_hessian_blocks(vdm_, wdm_, quad_, equad_)),
          mass_factor_(mass_) {}

    const Mesh& mesh() const { return *mesh_; }
    const DofMap& vspace() const { return vdm_; }
    const DofMap& wspace() const { return wdm_; }
    const QuadratureRule& quadrature() const { return quad_; }
    const EdgeQuadratureRule& edge_quad() const { return equad_; }
    const SparseMatrix& mass_matrix() const { return mass_; }
    const HessianBlocks& hessian_blocks() const { return blocks_; }

    /// Finite element Hessian of u through the cached mass factorization;
    /// equivalent to fe_hessian(u, wspace()) but reuses the decomposition.
    HessianField recover_hessian(const FEFunction& u) const {
        HessianField H;
        H.wdm = &wdm_;
        H.h11 = mass_factor_.solve(blocks_.b11 * u.coeffs());
        H.h12 = mass_factor_.solve(blocks_.b12 * u.coeffs());
        H.h22 = mass_factor_.solve(blocks_.b22 * u.coeffs());
        return H;
    }

    BlockSystem assemble_block_system(const LinearNVProblem& p) const {
        const int ni = vdm_.num_interior();
        const int nw = wdm_.size();
        const int nv_full = vdm_.size();

        Vector lift = Vector::Zero(nv_full);
        for (int d : vdm_.boundary_dofs()) lift[d] = p.g(vdm_.dof_coord(d));

        std::vector<Eigen::Triplet<double>> trips;
        Vector rhs = Vector::Zero(ni + 3 * nw);

        // PDE row, tested with interior V functions:
        // int (A11 h11 + 2 A12 h12 + A22 h22) phi + int (b . grad u) phi
        // = int f phi, off-diagonal factor 2 from the Frobenius pairing.
        // One element loop so coefficients are evaluated once per point.
        for (int c = 0; c < mesh_->num_cells(); ++c) {
            const ElementMap em(*mesh_, c);
            const auto& vdofs = vdm_.cell_dofs(c);
            const auto& wdofs = wdm_.cell_dofs(c);
            Eigen::Matrix<double, 6, 6> c11 = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 6> c12 = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 6> c22 = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 6> adv = Eigen::Matrix<double, 6, 6>::Zero();
            Eigen::Matrix<double, 6, 1> load = Eigen::Matrix<double, 6, 1>::Zero();

            for (std::size_t q = 0; q < quad_.points.size(); ++q) {
                const Vec2& ref = quad_.points[q];
                const double w = quad_.weights[q] * em.det_jac;
                const Vec2 x = em.to_physical(ref);
                const Mat2 A = p.A(c, ref, x);
                const double fv = p.f(c, ref, x);
                const Vec2 bv = p.b ? p.b(c, ref, x) : Vec2(Vec2::Zero());

                const auto phi = ReferenceElementP2::shape(ref);
                const auto dphi = ReferenceElementP2::shape_grad(ref);
                std::array<Vec2, 6> grad;
                for (int k = 0; k < 6; ++k) grad[k] = em.inv_jac_t * dphi[k];

                for (int i = 0; i < 6; ++i) {
                    const double tw = w * phi[i];
                    load[i] += tw * fv;
                    for (int j = 0; j < 6; ++j) {
                        c11(i, j) += tw * A(0, 0) * phi[j];
                        c12(i, j) += tw * 2.0 * A(0, 1) * phi[j];
                        c22(i, j) += tw * A(1, 1) * phi[j];
                        if (p.b) adv(i, j) += tw * bv.dot(grad[j]);
                    }
                }
            }

            for (int i = 0; i < 6; ++i) {
                const int row = vdm_.interior_index(vdofs[i]);
                if (row < 0) continue;
                rhs[row] += load[i];
                for (int j = 0; j < 6; ++j) {
                    trips.emplace_back(row, ni + wdofs[j], c11(i, j));
                    trips.emplace_back(row, ni + nw + wdofs[j], c12(i, j));
                    trips.emplace_back(row, ni + 2 * nw + wdofs[j], c22(i, j));
                    if (p.b) {
                        const int col = vdm_.interior_index(vdofs[j]);
                        if (col >= 0) trips.emplace_back(row, col, adv(i, j));
                        else rhs[row] -= adv(i, j) * lift[vdofs[j]];
                    }
                }
            }
        }

        // Hessian-definition rows: M h_ij - B_ij u_full = 0, with the lift
        // part of u_full moved to the right-hand side.
        const SparseMatrix* bs[3] = {&blocks_.b11, &blocks_.b12, &blocks_.b22};
        for (int comp = 0; comp < 3; ++comp) {
            const int row0 = ni + comp * nw;
            for (int k = 0; k < mass_.outerSize(); ++k)
                for (SparseMatrix::InnerIterator it(mass_, k); it; ++it)
                    trips.emplace_back(row0 + it.row(), ni + comp * nw + it.col(),
                                       it.value());
            const SparseMatrix& B = *bs[comp];
            Vector lift_rhs = B * lift;
            for (int r = 0; r < nw; ++r) rhs[row0 + r] += lift_rhs[r];
            for (int k = 0; k < B.outerSize(); ++k) {
                for (SparseMatrix::InnerIterator it(B, k); it; ++it) {
                    const int col = vdm_.interior_index(static_cast<int>(it.col()));
                    if (col >= 0) trips.emplace_back(row0 + it.row(), col, -it.value());
                }
            }
        }

        BlockSystem sys;
        sys.n_interior = ni;
        sys.n_w = nw;
        sys.lift = std::move(lift);
        sys.rhs = std::move(rhs);
        sys.mat.resize(ni + 3 * nw, ni + 3 * nw);
        sys.mat.setFromTriplets(trips.begin(), trips.end());
        sys.mat.makeCompressed();
        return sys;
    }

    LinearNVSolution solve(const LinearNVProblem& p) const {
        const BlockSystem sys = assemble_block_system(p);
        const Vector sol = solve_sparse(sys.mat, sys.rhs);

        FEFunction u(vdm_);
        u.coeffs() = sys.lift;
        for (int d : vdm_.interior_dofs())
            u.coeffs()[d] = sol[vdm_.interior_index(d)];

        HessianField H;
        H.wdm = &wdm_;
        H.h11 = sol.segment(sys.n_interior, sys.n_w);
        H.h12 = sol.segment(sys.n_interior + sys.n_w, sys.n_w);
        H.h22 = sol.segment(sys.n_interior + 2 * sys.n_w, sys.n_w);
        return {std::move(u), std::move(H)};
    }

private:
    const Mesh* mesh_;
    DofMap vdm_, wdm_;
    QuadratureRule quad_;
    EdgeQuadratureRule equad_;
    SparseMatrix mass_;
    HessianBlocks blocks_;
    SparseFactorization mass_factor_;
};

/// Solution objects reference the DOF maps owned by the solver context, so
/// the context must outlive them.
inline LinearNVSolution solve_nonvariational(const LinearNVProblem& p,
                                             const NonvariationalSolver& ctx) {
    return ctx.solve(p);
}

} // namespace nvfem
