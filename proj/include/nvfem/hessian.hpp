#pragma once

#include <array>
#include <cmath>

#include "nvfem/fem.hpp"

namespace nvfem {

/// Upper-triangular components of the auxiliary Hessian field, all in W.
struct HessianField {
    const DofMap* wdm = nullptr;
    Vector h11, h12, h22;

    Mat2 evaluate(int cell, const Vec2& ref) const {
        const auto phi = ReferenceElementP2::shape(ref);
        const auto& dofs = wdm->cell_dofs(cell);
        double a = 0, b = 0, c = 0;
        for (int k = 0; k < 6; ++k) {
            a += h11[dofs[k]] * phi[k];
            b += h12[dofs[k]] * phi[k];
            c += h22[dofs[k]] * phi[k];
        }
        Mat2 H;
        H << a, b, b, c;
        return H;
    }
};

/// min eigenvalue of a symmetric 2x2 in closed form.
inline double min_eigenvalue_sym2(const Mat2& H) {
    const double mean = 0.5 * (H(0, 0) + H(1, 1));
    const double dev = 0.5 * (H(0, 0) - H(1, 1));
    return mean - std::sqrt(dev * dev + H(0, 1) * H(0, 1));
}

struct ConvexityReport {
    bool convex;
    double min_eigenvalue;
    Vec2 location; // physical point attaining the minimum
};

/// Distributional-Hessian blocks: (B_ij u)_a = -int d_i u d_j phi_a
/// + int_bdry d_i u n_j phi_a. The (i,j) slot is selectable so the symmetry
/// property can be probed from both sides; production code uses (1,2) only.
inline SparseMatrix assemble_hessian_block(int i, int j, const DofMap& trial,
                                           const DofMap& test, const QuadratureRule& quad,
                                           const EdgeQuadratureRule& equad) {
    SparseMatrix vol = assemble_generic(
        [i, j](int, const Vec2&, const BasisEval& u, const BasisEval& v) {
            return -u.grad[i] * v.grad[j];
        },
        trial, test, quad);
    SparseMatrix bdy = assemble_boundary(
        [i, j](int, const Vec2&, const Vec2& n, const BasisEval& u, const BasisEval& v) {
            return u.grad[i] * n[j] * v.value;
        },
        trial, test, equad);
    return vol + bdy;
}

struct HessianBlocks {
    SparseMatrix b11, b12, b22;
};

inline HessianBlocks assemble_hessian_blocks(const DofMap& trial, const DofMap& test,
                                             const QuadratureRule& quad,
                                             const EdgeQuadratureRule& equad) {
    return {assemble_hessian_block(0, 0, trial, test, quad, equad),
            assemble_hessian_block(0, 1, trial, test, quad, equad),
            assemble_hessian_block(1, 1, trial, test, quad, equad)};
}

/// Riesz representative of the distributional Hessian in W:
/// M h_ij = B_ij u componentwise.
inline HessianField fe_hessian(const FEFunction& u, const DofMap& wdm,
                               const QuadratureRule& quad,
                               const EdgeQuadratureRule& equad) {
    const auto blocks = assemble_hessian_blocks(u.dofmap(), wdm, quad, equad);
    const SparseFactorization mass(assemble_mass_matrix(wdm, quad));
    HessianField H;
    H.wdm = &wdm;
    H.h11 = mass.solve(blocks.b11 * u.coeffs());
    H.h12 = mass.solve(blocks.b12 * u.coeffs());
    H.h22 = mass.solve(blocks.b22 * u.coeffs());
    return H;
}

inline HessianField fe_hessian(const FEFunction& u, const DofMap& wdm) {
    return fe_hessian(u, wdm, triangle_quadrature(), edge_quadrature());
}

/// Pointwise PSD surrogate for finite element convexity: scans the 2x2 field
/// at every quadrature point of every cell.
inline ConvexityReport check_fe_convexity(const HessianField& H, double tol,
                                          const QuadratureRule& quad) {
    const Mesh& mesh = H.wdm->mesh();
    double min_eig = std::numeric_limits<double>::infinity();
    Vec2 where = Vec2::Zero();
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (const Vec2& ref : quad.points) {
            const double lam = min_eigenvalue_sym2(H.evaluate(c, ref));
            if (lam < min_eig) {
                min_eig = lam;
                where = em.to_physical(ref);
            }
        }
    }
    return {min_eig >= -tol, min_eig, where};
}

inline ConvexityReport check_fe_convexity(const HessianField& H, double tol) {
    return check_fe_convexity(H, tol, triangle_quadrature());
}

} // namespace nvfem
