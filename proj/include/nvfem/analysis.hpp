#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "nvfem/gauss_curvature.hpp"

namespace nvfem {

// ---------------------------------------------------------------------------
// Manufactured solutions over [-half_width, half_width]^2
// ---------------------------------------------------------------------------
inline GaussCurvatureProblem manufactured_problem(const std::string& name,
                                                  double /*half_width*/ = 0.5) {
    GaussCurvatureProblem p;
    if (name == "quartic") {
        // u = |x|^4: D^2 u = 4 r^2 I + 8 x x^T, det = 48 r^4, |grad u|^2 = 16 r^6
        p.exact = [](const Vec2& x) {
            const double r2 = x.squaredNorm();
            return r2 * r2;
        };
        p.exact_grad = [](const Vec2& x) { return Vec2(4.0 * x.squaredNorm() * x); };
        p.exact_hess = [](const Vec2& x) {
            const double r2 = x.squaredNorm();
            return Mat2(4.0 * r2 * Mat2::Identity() + 8.0 * x * x.transpose());
        };
        p.K = [](const Vec2& x) {
            const double r2 = x.squaredNorm();
            const double denom = 1.0 + 16.0 * r2 * r2 * r2;
            return 48.0 * r2 * r2 / (denom * denom);
        };
    } else if (name == "exponential") {
        // u = exp(r^2/2): D^2 u = e^{r^2/2}(I + x x^T), det = e^{r^2}(1 + r^2)
        p.exact = [](const Vec2& x) { return std::exp(0.5 * x.squaredNorm()); };
        p.exact_grad = [](const Vec2& x) {
            return Vec2(std::exp(0.5 * x.squaredNorm()) * x);
        };
        p.exact_hess = [](const Vec2& x) {
            return Mat2(std::exp(0.5 * x.squaredNorm()) *
                        (Mat2::Identity() + x * x.transpose()));
        };
        p.K = [](const Vec2& x) {
            const double r2 = x.squaredNorm();
            const double e = std::exp(r2);
            const double denom = 1.0 + e * r2;
            return e * (1.0 + r2) / (denom * denom);
        };
    } else {
        throw invalid_parameter("manufactured_problem: unknown name '" + name + "'");
    }
    p.g = p.exact;
    return p;
}

// ---------------------------------------------------------------------------
// Error norms (quadrature approximations, returned as square roots)
// ---------------------------------------------------------------------------
template <class F>
double error_l2(const FEFunction& u, F&& exact, const QuadratureRule& quad) {
    const Mesh& mesh = u.dofmap().mesh();
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const Vec2& ref = quad.points[q];
            const double d = u.evaluate(c, ref) - exact(em.to_physical(ref));
            acc += quad.weights[q] * em.det_jac * d * d;
        }
    }
    return std::sqrt(acc);
}

template <class G>
double error_h1_semi(const FEFunction& u, G&& exact_grad, const QuadratureRule& quad) {
    const Mesh& mesh = u.dofmap().mesh();
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const Vec2& ref = quad.points[q];
            const Vec2 d = u.evaluate_gradient(c, ref) - exact_grad(em.to_physical(ref));
            acc += quad.weights[q] * em.det_jac * d.squaredNorm();
        }
    }
    return std::sqrt(acc);
}

/// Frobenius-weighted Hessian error: the off-diagonal counts twice.
template <class H>
double error_hessian(const HessianField& h, H&& exact_hess, const QuadratureRule& quad) {
    const Mesh& mesh = h.wdm->mesh();
    double acc = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const Vec2& ref = quad.points[q];
            const Mat2 d = h.evaluate(c, ref) - exact_hess(em.to_physical(ref));
            acc += quad.weights[q] * em.det_jac *
                   (d(0, 0) * d(0, 0) + 2.0 * d(0, 1) * d(0, 1) + d(1, 1) * d(1, 1));
        }
    }
    return std::sqrt(acc);
}

// ---------------------------------------------------------------------------
// Convergence tables
// ---------------------------------------------------------------------------
struct ErrorRecord {
    int level;
    double h_max;
    int n_dofs;
    double err_l2;
    double err_h1;
    double err_hessian;
    int newton_iterations;
};

struct ConvergenceTable {
    std::vector<ErrorRecord> records;
};

struct EocRates {
    std::vector<double> l2, h1, hessian; // +infinity marks an exact hit
};

inline EocRates eoc(const ConvergenceTable& table) {
    if (table.records.size() < 2)
        throw invalid_parameter("eoc: need at least two records");
    const auto rate = [](double e0, double e1, double h0, double h1) {
        if (e1 == 0.0) return std::numeric_limits<double>::infinity();
        return std::log(e0 / e1) / std::log(h0 / h1);
    };
    EocRates r;
    for (std::size_t k = 0; k + 1 < table.records.size(); ++k) {
        const auto& a = table.records[k];
        const auto& b = table.records[k + 1];
        r.l2.push_back(rate(a.err_l2, b.err_l2, a.h_max, b.h_max));
        r.h1.push_back(rate(a.err_h1, b.err_h1, a.h_max, b.h_max));
        r.hessian.push_back(rate(a.err_hessian, b.err_hessian, a.h_max, b.h_max));
    }
    return r;
}

struct StudyResult {
    ConvergenceTable table;
    bool all_converged = true;
    NewtonStatus last_status = NewtonStatus::converged;
};

using LevelCallback = std::function<void(int level, const Mesh& mesh,
                                         const NonvariationalSolver& ctx,
                                         const NewtonResult& result)>;

/// Solve on `levels` concurrently refined meshes and record errors. A level
/// that fails to converge terminates the study with the partial table.
inline StudyResult run_convergence_study(const GaussCurvatureProblem& p,
                                         const Mesh& base, int levels,
                                         const NewtonConfig& cfg = {},
                                         const LevelCallback& on_level = {}) {
    if (levels < 2) throw invalid_parameter("run_convergence_study: levels must be >= 2");
    if (!p.exact) throw invalid_parameter("run_convergence_study: exact solution required");

    StudyResult out;
    Mesh mesh = base;
    for (int lvl = 0; lvl < levels; ++lvl) {
        if (lvl > 0) mesh = refine_uniform(mesh);
        const NonvariationalSolver ctx(mesh);
        const NewtonResult res = newton_solve(p, ctx, cfg);
        out.last_status = res.status;
        if (on_level) on_level(lvl, mesh, ctx, res);
        if (!res.converged()) {
            out.all_converged = false;
            break;
        }
        ErrorRecord rec;
        rec.level = lvl;
        rec.h_max = mesh_size(mesh);
        rec.n_dofs = ctx.vspace().size();
        rec.err_l2 = error_l2(res.u, p.exact, ctx.quadrature());
        rec.err_h1 = error_h1_semi(res.u, p.exact_grad, ctx.quadrature());
        rec.err_hessian = error_hessian(res.H, p.exact_hess, ctx.quadrature());
        rec.newton_iterations = res.iterations;
        out.table.records.push_back(rec);
    }
    return out;
}

} // namespace nvfem
