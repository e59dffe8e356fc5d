#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nvfem/hessian.hpp"

using namespace nvfem;

namespace {

struct Setup {
    Mesh mesh;
    DofMap vdm;
    DofMap wdm;
    QuadratureRule quad = triangle_quadrature();
    EdgeQuadratureRule equad = edge_quadrature();

    explicit Setup(Mesh m)
        : mesh(std::move(m)), vdm(mesh, SpaceKind::V), wdm(mesh, SpaceKind::W) {}
};

Setup perturbed_setup() { return Setup(generate_square_mesh(-0.5, 0.5, 3, 0.2, 17)); }

} // namespace

TEST_CASE("hessian blocks annihilate low-order fields") {
    Setup s = perturbed_setup();
    const auto blocks = assemble_hessian_blocks(s.wdm, s.wdm, s.quad, s.equad);

    SECTION("constants") {
        const FEFunction u = interpolate([](const Vec2&) { return 3.0; }, s.wdm);
        CHECK((blocks.b11 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-13);
        CHECK((blocks.b12 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-13);
        CHECK((blocks.b22 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-13);
    }

    SECTION("linear field: divergence theorem per test function") {
        const FEFunction u = interpolate([](const Vec2& x) { return x.x(); }, s.wdm);
        CHECK((blocks.b11 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-12);
        CHECK((blocks.b12 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-12);
        CHECK((blocks.b22 * u.coeffs()).lpNorm<Eigen::Infinity>() < 1e-12);
    }
}

TEST_CASE("fe_hessian is exact on quadratics") {
    Setup s = perturbed_setup();

    SECTION("x^2") {
        const FEFunction u =
            interpolate([](const Vec2& x) { return x.x() * x.x(); }, s.wdm);
        const HessianField H = fe_hessian(u, s.wdm, s.quad, s.equad);
        CHECK((H.h11.array() - 2.0).abs().maxCoeff() < 1e-10);
        CHECK(H.h12.cwiseAbs().maxCoeff() < 1e-10);
        CHECK(H.h22.cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("xy") {
        const FEFunction u =
            interpolate([](const Vec2& x) { return x.x() * x.y(); }, s.wdm);
        const HessianField H = fe_hessian(u, s.wdm, s.quad, s.equad);
        CHECK(H.h11.cwiseAbs().maxCoeff() < 1e-10);
        CHECK((H.h12.array() - 1.0).abs().maxCoeff() < 1e-10);
        CHECK(H.h22.cwiseAbs().maxCoeff() < 1e-10);
    }

    SECTION("y^2") {
        const FEFunction u =
            interpolate([](const Vec2& x) { return x.y() * x.y(); }, s.wdm);
        const HessianField H = fe_hessian(u, s.wdm, s.quad, s.equad);
        CHECK(H.h11.cwiseAbs().maxCoeff() < 1e-10);
        CHECK(H.h12.cwiseAbs().maxCoeff() < 1e-10);
        CHECK((H.h22.array() - 2.0).abs().maxCoeff() < 1e-10);
    }
}

TEST_CASE("off-diagonal symmetry for arbitrary coefficients") {
    Setup s = perturbed_setup();
    const SparseMatrix b12 = assemble_hessian_block(0, 1, s.wdm, s.wdm, s.quad, s.equad);
    const SparseMatrix b21 = assemble_hessian_block(1, 0, s.wdm, s.wdm, s.quad, s.equad);
    const SparseFactorization mass(assemble_mass_matrix(s.wdm, s.quad));

    std::mt19937 rng(99);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        Vector c(s.wdm.size());
        for (int d = 0; d < s.wdm.size(); ++d) c[d] = dist(rng);
        const Vector h12 = mass.solve(b12 * c);
        const Vector h21 = mass.solve(b21 * c);
        CHECK((h12 - h21).lpNorm<Eigen::Infinity>() < 1e-10);
    }
}

TEST_CASE("fe_hessian is linear") {
    Setup s = perturbed_setup();
    std::mt19937 rng(5);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    FEFunction u(s.wdm), v(s.wdm);
    for (int d = 0; d < s.wdm.size(); ++d) {
        u.coeffs()[d] = dist(rng);
        v.coeffs()[d] = dist(rng);
    }
    const double alpha = dist(rng), beta = dist(rng);
    FEFunction w(s.wdm);
    w.coeffs() = alpha * u.coeffs() + beta * v.coeffs();

    const HessianField Hu = fe_hessian(u, s.wdm, s.quad, s.equad);
    const HessianField Hv = fe_hessian(v, s.wdm, s.quad, s.equad);
    const HessianField Hw = fe_hessian(w, s.wdm, s.quad, s.equad);
    CHECK((Hw.h11 - alpha * Hu.h11 - beta * Hv.h11).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((Hw.h12 - alpha * Hu.h12 - beta * Hv.h12).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK((Hw.h22 - alpha * Hu.h22 - beta * Hv.h22).lpNorm<Eigen::Infinity>() < 1e-10);
}

TEST_CASE("hessian recovery converges at O(h^1.5) for |x|^4") {
    Mesh mesh = generate_square_mesh(-0.5, 0.5, 2, 0.1, 23);
    const QuadratureRule quad = triangle_quadrature();
    const EdgeQuadratureRule equad = edge_quadrature();

    const auto u4 = [](const Vec2& x) {
        const double r2 = x.squaredNorm();
        return r2 * r2;
    };
    const auto hess4 = [](const Vec2& x) {
        const double r2 = x.squaredNorm();
        return Mat2(4.0 * r2 * Mat2::Identity() + 8.0 * x * x.transpose());
    };

    std::vector<double> errs, hs;
    for (int lvl = 0; lvl < 4; ++lvl) {
        if (lvl > 0) mesh = refine_uniform(mesh);
        const DofMap wdm(mesh, SpaceKind::W);
        const FEFunction u = interpolate(u4, wdm);
        const HessianField H = fe_hessian(u, wdm, quad, equad);

        double acc = 0.0;
        for (int c = 0; c < mesh.num_cells(); ++c) {
            const ElementMap em(mesh, c);
            for (std::size_t q = 0; q < quad.points.size(); ++q) {
                const Mat2 d =
                    H.evaluate(c, quad.points[q]) - hess4(em.to_physical(quad.points[q]));
                acc += quad.weights[q] * em.det_jac *
                       (d(0, 0) * d(0, 0) + 2 * d(0, 1) * d(0, 1) + d(1, 1) * d(1, 1));
            }
        }
        errs.push_back(std::sqrt(acc));
        hs.push_back(mesh_size(mesh));
    }
    const double rate = std::log(errs[errs.size() - 2] / errs.back()) /
                        std::log(hs[hs.size() - 2] / hs.back());
    CHECK(rate > 1.2);
    CHECK(rate < 1.9);
}

TEST_CASE("convexity check") {
    Setup s = perturbed_setup();

    SECTION("convex bowl") {
        const FEFunction u = interpolate(
            [](const Vec2& x) { return x.squaredNorm(); }, s.wdm);
        const auto report =
            check_fe_convexity(fe_hessian(u, s.wdm, s.quad, s.equad), 1e-8, s.quad);
        CHECK(report.convex);
        CHECK(report.min_eigenvalue == Catch::Approx(2.0).epsilon(1e-8));
    }

    SECTION("saddle") {
        const FEFunction u = interpolate(
            [](const Vec2& x) { return x.x() * x.x() - x.y() * x.y(); }, s.wdm);
        const auto report =
            check_fe_convexity(fe_hessian(u, s.wdm, s.quad, s.equad), 1e-8, s.quad);
        CHECK_FALSE(report.convex);
        CHECK(report.min_eigenvalue == Catch::Approx(-2.0).epsilon(1e-8));
    }

    SECTION("zero field sits on the semidefinite boundary") {
        HessianField H;
        H.wdm = &s.wdm;
        H.h11 = Vector::Zero(s.wdm.size());
        H.h12 = Vector::Zero(s.wdm.size());
        H.h22 = Vector::Zero(s.wdm.size());
        const auto report = check_fe_convexity(H, 0.0, s.quad);
        CHECK(report.convex);
        CHECK(report.min_eigenvalue == 0.0);
    }
}

TEST_CASE("min eigenvalue closed form") {
    Mat2 H;
    H << 3, 1, 1, 3;
    CHECK(min_eigenvalue_sym2(H) == Catch::Approx(2.0).epsilon(1e-14));
    Eigen::SelfAdjointEigenSolver<Mat2> es;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        Mat2 A;
        const double a = dist(rng), b = dist(rng), c = dist(rng);
        A << a, b, b, c;
        es.compute(A);
        CHECK(min_eigenvalue_sym2(A) ==
              Catch::Approx(es.eigenvalues().minCoeff()).margin(1e-12));
    }
}
