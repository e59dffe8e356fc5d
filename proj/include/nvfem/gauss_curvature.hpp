#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "nvfem/linear_solver.hpp"

namespace nvfem {

/// det D^2 u = K (1 + |grad u|^2)^2 on a square, u = g on the boundary.
struct GaussCurvatureProblem {
    std::function<double(const Vec2&)> K;
    std::function<double(const Vec2&)> g;
    // analytic fields for error studies, when a manufactured solution exists
    std::function<double(const Vec2&)> exact;
    std::function<Vec2(const Vec2&)> exact_grad;
    std::function<Mat2(const Vec2&)> exact_hess;
};

struct NewtonConfig {
    double tol = 1e-10;          // stop on ||U^n - U^{n-1}||_inf over coefficients
    int max_iter = 50;
    double convexity_tol = 1e-8; // monitor threshold for the discrete Hessian
    double damping = 1.0;        // largest step fraction; 1 = full Newton steps
    double divergence_factor = 1e3;
    bool line_search = true;     // backtrack on the weak residual when a step overshoots
    bool project_jacobian = true; // clamp cof H to the PSD cone in the iteration matrix
    // Below this increment the safeguards switch off and plain Newton runs;
    // the modified iteration is only linearly convergent when the clamp is
    // active at the solution, while plain Newton finishes quadratically. A
    // plain step that grows the increment tenfold is discarded and the
    // safeguards come back.
    double local_step_threshold = 1e-5;

    void validate() const {
        if (!(tol > 0)) throw invalid_parameter("NewtonConfig: tol must be positive");
        if (max_iter < 1) throw invalid_parameter("NewtonConfig: max_iter must be >= 1");
        if (!(damping > 0 && damping <= 1))
            throw invalid_parameter("NewtonConfig: damping must lie in (0,1]");
    }
};

struct NewtonStep {
    double increment_linf;
    double residual_linf; // weak residual against interior test functions
    double min_eigenvalue;
    double seconds;
};

using NewtonTrace = std::vector<NewtonStep>;

enum class NewtonStatus { converged, max_iterations, diverged, ellipticity_failure };

inline std::string to_string(NewtonStatus s) {
    switch (s) {
        case NewtonStatus::converged: return "converged";
        case NewtonStatus::max_iterations: return "max_iterations";
        case NewtonStatus::diverged: return "diverged";
        case NewtonStatus::ellipticity_failure: return "ellipticity_failure";
    }
    return "unknown";
}

struct NewtonResult {
    NewtonStatus status;
    FEFunction u;
    HessianField H;
    NewtonTrace trace;
    int iterations = 0;
    bool converged() const { return status == NewtonStatus::converged; }
};

inline Mat2 cofactor_2x2(const Mat2& H) {
    Mat2 c;
    c << H(1, 1), -H(0, 1), -H(1, 0), H(0, 0);
    return c;
}

/// Nearest matrix in the PSD cone: eigenvalues of the symmetric part clamped
/// from below at zero.
inline Mat2 psd_part(const Mat2& A) {
    const double a = A(0, 0), b = 0.5 * (A(0, 1) + A(1, 0)), c = A(1, 1);
    const double mean = 0.5 * (a + c), dev = 0.5 * (a - c);
    const double r = std::sqrt(dev * dev + b * b);
    const double lo = mean - r, hi = mean + r;
    if (lo >= 0.0) return A;
    const double hi_pos = std::max(hi, 0.0);
    if (r < 1e-300) return Mat2(Mat2::Zero());
    Vec2 v = std::abs(b) > 0.0 ? Vec2(b, hi - a).normalized()
                               : (a >= c ? Vec2(1, 0) : Vec2(0, 1));
    return Mat2(hi_pos * v * v.transpose());
}

/// det H - K (1 + |grad|^2)^2, the pointwise strong-form residual (d = 2).
inline double residual_density(const Mat2& H, const Vec2& grad_u, double k_val) {
    const double s = 1.0 + grad_u.squaredNorm();
    return H.determinant() - k_val * s * s;
}

/// Gateaux derivative of the curvature operator at (H, grad u) in direction
/// (Hv, grad v): cof H : Hv - 4 K (1 + |grad u|^2) grad u . grad v.
inline double linearized_density(const Mat2& H, const Vec2& grad_u, double k_val,
                                 const Mat2& dir_hess, const Vec2& dir_grad) {
    const double frob = (cofactor_2x2(H).array() * dir_hess.array()).sum();
    return frob - 4.0 * k_val * (1.0 + grad_u.squaredNorm()) * grad_u.dot(dir_grad);
}

/// One Newton step written in the unknown U^n: the previous iterate's terms
/// are absorbed into the right-hand side.
inline LinearNVProblem newton_coefficients(const HessianField& h_prev,
                                           const FEFunction& u_prev,
                                           const GaussCurvatureProblem& p) {
    LinearNVProblem lin;
    lin.g = p.g;
    lin.A = [&h_prev](int c, const Vec2& ref, const Vec2&) {
        return cofactor_2x2(h_prev.evaluate(c, ref));
    };
    lin.b = [&u_prev, &p](int c, const Vec2& ref, const Vec2& x) {
        const Vec2 grad = u_prev.evaluate_gradient(c, ref);
        return Vec2(-4.0 * p.K(x) * (1.0 + grad.squaredNorm()) * grad);
    };
    lin.f = [&h_prev, &u_prev, &p](int c, const Vec2& ref, const Vec2& x) {
        const Mat2 H = h_prev.evaluate(c, ref);
        const Vec2 grad = u_prev.evaluate_gradient(c, ref);
        const double k = p.K(x);
        const double s = 1.0 + grad.squaredNorm();
        const double cof_h = 2.0 * H.determinant(); // cof H : H
        return cof_h - 4.0 * k * s * grad.squaredNorm() - (H.determinant() - k * s * s);
    };
    return lin;
}

namespace detail {

inline Vector weak_residual_vector(const NonvariationalSolver& ctx, const FEFunction& u,
                                   const HessianField& H, const GaussCurvatureProblem& p) {
    return assemble_load(
        [&](int c, const Vec2& ref, const Vec2& x) {
            return residual_density(H.evaluate(c, ref), u.evaluate_gradient(c, ref),
                                    p.K(x));
        },
        ctx.vspace(), ctx.quadrature());
}

} // namespace detail

/// Max magnitude of the weak residual <det H - K(1+|grad U|^2)^2, phi> over
/// interior test functions.
inline double weak_residual_linf(const NonvariationalSolver& ctx, const FEFunction& u,
                                 const HessianField& H, const GaussCurvatureProblem& p) {
    const Vector r = detail::weak_residual_vector(ctx, u, H, p);
    double mx = 0.0;
    for (int d : ctx.vspace().interior_dofs()) mx = std::max(mx, std::abs(r[d]));
    return mx;
}

/// Euclidean norm of the interior weak residual; the merit function for the
/// line search.
inline double weak_residual_l2(const NonvariationalSolver& ctx, const FEFunction& u,
                               const HessianField& H, const GaussCurvatureProblem& p) {
    const Vector r = detail::weak_residual_vector(ctx, u, H, p);
    double s = 0.0;
    for (int d : ctx.vspace().interior_dofs()) s += r[d] * r[d];
    return std::sqrt(s);
}

/// Summary of the initialization screen: mean curvature of the candidate,
/// and the area fraction where the pointwise convexity surrogate fails a
/// threshold relative to that mean.
struct ConvexityScreen {
    double mean_curvature = 0.0; // clamped at zero
    double negative_fraction = 0.0;
    bool plausible = false;
};

/// Initialization screen: the pointwise convexity surrogate in bulk. The
/// recovered Hessian of a convex function overshoots near boundary corners
/// (the boundary term of the recovery is exact only in the limit), so a
/// strict global eigenvalue bound would reject every useful candidate. The
/// overshoot lives on an area that shrinks with the mesh, so we screen on the
/// area fraction where the smallest eigenvalue drops below half the mean
/// curvature: qualitatively convex bowls stay around a tenth, saddles and
/// concave candidates are order one.
inline ConvexityScreen convexity_screen(const NonvariationalSolver& ctx,
                                        const HessianField& H, double tol) {
    const Mesh& mesh = ctx.mesh();
    const QuadratureRule& quad = ctx.quadrature();

    double trace_integral = 0.0, area = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            const double w = quad.weights[q] * em.det_jac;
            trace_integral += w * H.evaluate(c, quad.points[q]).trace();
            area += w;
        }
    }

    ConvexityScreen s;
    s.mean_curvature = std::max(0.5 * trace_integral / area, 0.0);
    const double threshold = -std::max(0.5 * s.mean_curvature, tol);
    double bad = 0.0;
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (std::size_t q = 0; q < quad.points.size(); ++q) {
            if (min_eigenvalue_sym2(H.evaluate(c, quad.points[q])) < threshold)
                bad += quad.weights[q] * em.det_jac;
        }
    }
    s.negative_fraction = bad / area;
    s.plausible = s.negative_fraction <= 0.15;
    return s;
}

inline bool plausibly_convex(const NonvariationalSolver& ctx, const HessianField& H,
                             double tol) {
    return convexity_screen(ctx, H, tol).plausible;
}

/// Convex starting iterate: solve the Poisson surrogate
/// laplace u0 = 2 sqrt(Kbar) with Kbar = K (1 + |grad G|^2)^2 and G the
/// interpolated boundary lift. Falls back to an interpolated paraboloid if
/// the surrogate fails the convexity screen.
inline std::pair<FEFunction, HessianField> initial_guess(
    const GaussCurvatureProblem& p, const NonvariationalSolver& ctx,
    const NewtonConfig& cfg = {}) {
    const FEFunction lift = interpolate(p.g, ctx.vspace());

    LinearNVProblem poisson;
    poisson.g = p.g;
    poisson.A = [](int, const Vec2&, const Vec2&) { return Mat2(Mat2::Identity()); };
    poisson.f = [&](int c, const Vec2& ref, const Vec2& x) {
        const double s = 1.0 + lift.evaluate_gradient(c, ref).squaredNorm();
        return 2.0 * std::sqrt(p.K(x) * s * s);
    };

    try {
        auto sol = ctx.solve(poisson);
        if (plausibly_convex(ctx, sol.H, cfg.convexity_tol))
            return {std::move(sol.u), std::move(sol.H)};
    } catch (const singular_matrix&) {
        // fall through to the paraboloid
    }

    // Paraboloid about the domain centroid, scaled by the smallest sampled
    // curvature, plus the boundary lift.
    const Mesh& mesh = ctx.mesh();
    Vec2 centroid = Vec2::Zero();
    for (const auto& v : mesh.vertices) centroid += v;
    centroid /= static_cast<double>(mesh.num_vertices());

    double kbar_min = std::numeric_limits<double>::infinity();
    for (int c = 0; c < mesh.num_cells(); ++c) {
        const ElementMap em(mesh, c);
        for (const Vec2& ref : ctx.quadrature().points) {
            const double s = 1.0 + lift.evaluate_gradient(c, ref).squaredNorm();
            kbar_min = std::min(kbar_min, p.K(em.to_physical(ref)) * s * s);
        }
    }
    kbar_min = std::max(kbar_min, 0.0);

    // The paraboloid overshoots the boundary data by its own boundary values;
    // the first Newton step restores the boundary condition exactly, so the
    // mismatch is transient. Clamping the boundary coefficients instead would
    // put a kink in the iterate whose recovered Hessian is badly indefinite.
    const double scale = std::sqrt(kbar_min);
    FEFunction u0 = interpolate(
        [&](const Vec2& x) {
            return 0.5 * scale * (x - centroid).squaredNorm() + p.g(x);
        },
        ctx.vspace());
    HessianField H0 = ctx.recover_hessian(u0);
    const ConvexityScreen screen = convexity_screen(ctx, H0, cfg.convexity_tol);
    if (!screen.plausible)
        throw initialization_failure(
            "no plausibly convex starting iterate found (negative area fraction " +
            std::to_string(screen.negative_fraction) + ")");
    return {std::move(u0), std::move(H0)};
}

/// Newton iteration starting from the given iterate. Far from the solution
/// the iteration matrix optionally clamps cof H to the PSD cone (the exact
/// residual stays on the right-hand side, so fixed points are unchanged) and
/// backtracks along the step when the weak residual grows beyond its recent
/// history. Once the increment is small the safeguards switch off and plain
/// Newton finishes quadratically; a plain step that jumps out of the basin is
/// discarded and the safeguards return. For smooth convex problems the
/// safeguards are inactive throughout: cof H is already PSD and full steps
/// reduce the residual, so the iteration is plain Newton from the start.
inline NewtonResult newton_solve_from(const GaussCurvatureProblem& p,
                                      const NonvariationalSolver& ctx,
                                      FEFunction u, HessianField H,
                                      const NewtonConfig& cfg = {}) {
    cfg.validate();

    NewtonResult res;
    res.status = NewtonStatus::max_iterations;
    double min_increment = std::numeric_limits<double>::infinity();
    double last_increment = std::numeric_limits<double>::infinity();
    // Nonmonotone line search reference: the worst merit over a trailing
    // window. Transient residual growth is normal for the modified-Newton
    // map on degenerate problems; only sustained growth is backtracked.
    constexpr std::size_t merit_window = 10;
    std::deque<double> merit_history;
    if (cfg.line_search) merit_history.push_back(weak_residual_l2(ctx, u, H, p));
    // Two phases: safeguarded far from the solution, plain Newton once the
    // increment drops below the threshold. A rejected plain step lowers the
    // re-entry bar tenfold, so phase flapping terminates.
    bool local_phase = false;
    double reentry_cap = cfg.local_step_threshold;

    int iterations = 0, solves = 0;
    while (iterations < cfg.max_iter && solves < cfg.max_iter + 20) {
        ++solves;
        const auto t0 = std::chrono::steady_clock::now();
        const bool use_project = cfg.project_jacobian && !local_phase;
        const bool use_search = cfg.line_search && !local_phase;

        LinearNVProblem lin = newton_coefficients(H, u, p);
        if (use_project) {
            const HessianField& h_prev = H;
            const FEFunction& u_prev = u;
            lin.A = [&h_prev](int c, const Vec2& ref, const Vec2&) {
                return psd_part(cofactor_2x2(h_prev.evaluate(c, ref)));
            };
            lin.f = [&h_prev, &u_prev, &p](int c, const Vec2& ref, const Vec2& x) {
                const Mat2 Hq = h_prev.evaluate(c, ref);
                const Vec2 grad = u_prev.evaluate_gradient(c, ref);
                const Mat2 A = psd_part(cofactor_2x2(Hq));
                const double k = p.K(x);
                const double s = 1.0 + grad.squaredNorm();
                return (A.array() * Hq.array()).sum() -
                       4.0 * k * s * grad.squaredNorm() -
                       (Hq.determinant() - k * s * s);
            };
        }

        LinearNVSolution next;
        try {
            next = ctx.solve(lin);
        } catch (const singular_matrix&) {
            res.status = NewtonStatus::ellipticity_failure;
            break;
        }

        const Vector dir = next.u.coeffs() - u.coeffs();
        double alpha = cfg.damping;
        FEFunction u_new;
        HessianField H_new;
        double merit_new = 0.0;
        if (alpha == 1.0 && !use_search) {
            u_new = std::move(next.u);
            H_new = std::move(next.H);
        } else {
            const double merit_ref =
                use_search
                    ? *std::max_element(merit_history.begin(), merit_history.end())
                    : 0.0;
            constexpr int max_backtracks = 12;
            for (int bt = 0;; ++bt) {
                u_new = u;
                u_new.coeffs() += alpha * dir;
                // Boundary values always take the full step so the boundary
                // condition is exact from the first iteration onward.
                for (int d : ctx.vspace().boundary_dofs())
                    u_new.coeffs()[d] = next.u.coeffs()[d];
                H_new = ctx.recover_hessian(u_new);
                if (!use_search) break;
                merit_new = weak_residual_l2(ctx, u_new, H_new, p);
                if (merit_new <= (1.0 - 1e-4 * alpha) * merit_ref ||
                    bt == max_backtracks)
                    break;
                alpha *= 0.5;
            }
        }

        const double inc = (u_new.coeffs() - u.coeffs()).lpNorm<Eigen::Infinity>();
        if (local_phase &&
            (!std::isfinite(inc) || inc > 10.0 * last_increment)) {
            // plain step left the basin: discard it and restore safeguards
            local_phase = false;
            reentry_cap *= 0.1;
            if (cfg.line_search) {
                merit_history.clear();
                merit_history.push_back(weak_residual_l2(ctx, u, H, p));
            }
            continue;
        }
        if (use_search) {
            if (merit_new == 0.0) merit_new = weak_residual_l2(ctx, u_new, H_new, p);
            merit_history.push_back(merit_new);
            if (merit_history.size() > merit_window) merit_history.pop_front();
        }

        u = std::move(u_new);
        H = std::move(H_new);
        res.iterations = ++iterations;
        last_increment = inc;

        NewtonStep step;
        step.increment_linf = inc;
        step.residual_linf = weak_residual_linf(ctx, u, H, p);
        step.min_eigenvalue = check_fe_convexity(H, cfg.convexity_tol,
                                                 ctx.quadrature()).min_eigenvalue;
        step.seconds = std::chrono::duration<double>(
                           std::chrono::steady_clock::now() - t0).count();
        res.trace.push_back(step);

        if (!std::isfinite(inc) || inc > cfg.divergence_factor * min_increment) {
            res.status = NewtonStatus::diverged;
            break;
        }
        min_increment = std::min(min_increment, inc);
        if (inc <= cfg.tol) {
            res.status = NewtonStatus::converged;
            break;
        }
        if (!local_phase && inc <= reentry_cap) local_phase = true;
    }

    res.u = std::move(u);
    res.H = std::move(H);
    return res;
}

inline NewtonResult newton_solve(const GaussCurvatureProblem& p,
                                 const NonvariationalSolver& ctx,
                                 const NewtonConfig& cfg = {}) {
    cfg.validate();
    auto [u, H] = initial_guess(p, ctx, cfg);
    return newton_solve_from(p, ctx, std::move(u), std::move(H), cfg);
}

struct SweepEntry {
    double k = 0.0;
    NewtonResult result;
};

/// Constant-curvature sweep with warm-start continuation: curvatures are
/// solved in increasing order and each run starts from the previous converged
/// state, rescaled by sqrt(K/K_prev) — det D^2 is homogeneous of degree two,
/// so the rescaled bowl is a first-order guess for the new curvature. Entries
/// come back sorted by K. After a failure later curvatures still warm-start
/// from the last converged state.
inline std::vector<SweepEntry> sweep_constant_curvature(
    const NonvariationalSolver& ctx, std::vector<double> ks,
    const std::function<double(const Vec2&)>& g, const NewtonConfig& cfg = {}) {
    cfg.validate();
    for (double k : ks)
        if (!(k > 0)) throw invalid_parameter("sweep: curvatures must be positive");
    std::sort(ks.begin(), ks.end());

    std::vector<SweepEntry> out;
    std::optional<FEFunction> u_prev;
    std::optional<HessianField> h_prev;
    double k_prev = 0.0;
    for (double k : ks) {
        GaussCurvatureProblem p;
        p.K = [k](const Vec2&) { return k; };
        p.g = g;

        SweepEntry entry;
        entry.k = k;
        if (u_prev) {
            const double lambda = std::sqrt(k / k_prev);
            FEFunction u0 = *u_prev;
            u0.coeffs() *= lambda;
            HessianField H0 = *h_prev;
            H0.h11 *= lambda;
            H0.h12 *= lambda;
            H0.h22 *= lambda;
            entry.result = newton_solve_from(p, ctx, std::move(u0), std::move(H0), cfg);
        } else {
            entry.result = newton_solve(p, ctx, cfg);
        }
        if (entry.result.converged()) {
            u_prev = entry.result.u;
            h_prev = entry.result.H;
            k_prev = k;
        }
        out.push_back(std::move(entry));
    }
    return out;
}

} // namespace nvfem
