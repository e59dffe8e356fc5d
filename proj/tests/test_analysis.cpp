#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "nvfem/analysis.hpp"

using namespace nvfem;

TEST_CASE("manufactured curvature fields") {
    SECTION("quartic value at (0.5, 0.5)") {
        const GaussCurvatureProblem p = manufactured_problem("quartic");
        CHECK(p.K(Vec2(0.5, 0.5)) == Catch::Approx(4.0 / 3.0).epsilon(1e-14));
    }
    SECTION("exponential value at the origin") {
        const GaussCurvatureProblem p = manufactured_problem("exponential");
        CHECK(p.K(Vec2::Zero()) == Catch::Approx(1.0).epsilon(1e-14));
    }
    SECTION("unknown name") {
        CHECK_THROWS_AS(manufactured_problem("cubic"), invalid_parameter);
    }

    SECTION("defining identity at random points") {
        std::mt19937 rng(2);
        std::uniform_real_distribution<double> dist(-0.5, 0.5);
        for (const char* name : {"quartic", "exponential"}) {
            const GaussCurvatureProblem p = manufactured_problem(name);
            for (int trial = 0; trial < 100; ++trial) {
                const Vec2 x(dist(rng), dist(rng));
                const double det = p.exact_hess(x).determinant();
                const double s = 1.0 + p.exact_grad(x).squaredNorm();
                // K = det / (1+|grad|^2)^2 pointwise
                CHECK(std::abs(p.K(x) * s * s - det) <= 1e-12 * std::max(1.0, det));
                CHECK(std::abs(residual_density(p.exact_hess(x), p.exact_grad(x),
                                                p.K(x))) <= 1e-12 * std::max(1.0, det));
            }
        }
    }

    SECTION("analytic derivatives match finite differences") {
        std::mt19937 rng(8);
        std::uniform_real_distribution<double> dist(-0.4, 0.4);
        const double step = 1e-5;
        for (const char* name : {"quartic", "exponential"}) {
            const GaussCurvatureProblem p = manufactured_problem(name);
            for (int trial = 0; trial < 20; ++trial) {
                const Vec2 x(dist(rng), dist(rng));
                for (int d = 0; d < 2; ++d) {
                    Vec2 e = Vec2::Zero();
                    e[d] = step;
                    const double fd = (p.exact(x + e) - p.exact(x - e)) / (2 * step);
                    CHECK(std::abs(fd - p.exact_grad(x)[d]) < 1e-8);
                    const Vec2 gfd = (p.exact_grad(x + e) - p.exact_grad(x - e)) / (2 * step);
                    CHECK((gfd - p.exact_hess(x).col(d)).norm() < 1e-8);
                }
            }
        }
    }
}

TEST_CASE("error norms") {
    const Mesh m = generate_square_mesh(-0.5, 0.5, 3, 0.2, 19);
    const DofMap wdm(m, SpaceKind::W);
    const QuadratureRule quad = triangle_quadrature();
    const EdgeQuadratureRule equad = edge_quadrature();

    SECTION("vanish on reproduced quadratics") {
        const auto f = [](const Vec2& x) { return x.x() * x.x() + x.x() * x.y(); };
        const FEFunction u = interpolate(f, wdm);
        CHECK(error_l2(u, f, quad) < 1e-10);
        CHECK(error_h1_semi(u, [](const Vec2& x) { return Vec2(2 * x.x() + x.y(), x.x()); },
                            quad) < 1e-10);
        const HessianField H = fe_hessian(u, wdm, quad, equad);
        Mat2 exact;
        exact << 2, 1, 1, 0;
        CHECK(error_hessian(H, [&](const Vec2&) { return exact; }, quad) < 1e-10);
    }

    SECTION("mass matrix quadratic-form oracle") {
        std::mt19937 rng(14);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        FEFunction u(wdm);
        for (int d = 0; d < wdm.size(); ++d) u.coeffs()[d] = dist(rng);
        const SparseMatrix M = assemble_mass_matrix(wdm, quad);
        const double oracle = std::sqrt(u.coeffs().dot(M * u.coeffs()));
        CHECK(error_l2(u, [](const Vec2&) { return 0.0; }, quad) ==
              Catch::Approx(oracle).epsilon(1e-12));
    }

    SECTION("interpolation error decays at O(h^3)") {
        const auto f = [](const Vec2& x) { return std::sin(2 * x.x()) * std::cos(x.y()); };
        Mesh mesh = generate_square_mesh(-0.5, 0.5, 2, 0.1, 3);
        std::vector<double> errs, hs;
        for (int lvl = 0; lvl < 4; ++lvl) {
            if (lvl > 0) mesh = refine_uniform(mesh);
            const DofMap dm(mesh, SpaceKind::W);
            errs.push_back(error_l2(interpolate(f, dm), f, quad));
            hs.push_back(mesh_size(mesh));
        }
        const double rate = std::log(errs[2] / errs[3]) / std::log(hs[2] / hs[3]);
        CHECK(rate == Catch::Approx(3.0).margin(0.3));
    }
}

TEST_CASE("eoc arithmetic") {
    ConvergenceTable t;
    t.records.push_back({0, 1.0, 10, 1.0, 1.0, 1.0, 1});
    t.records.push_back({1, 0.5, 40, 1.0 / 8, 1.0 / 4, std::pow(2.0, -1.5), 1});
    const EocRates r = eoc(t);
    CHECK(r.l2[0] == Catch::Approx(3.0).epsilon(1e-13));
    CHECK(r.h1[0] == Catch::Approx(2.0).epsilon(1e-13));
    CHECK(r.hessian[0] == Catch::Approx(1.5).epsilon(1e-13));

    SECTION("exact hit maps to the infinity marker") {
        t.records[1].err_l2 = 0.0;
        CHECK(std::isinf(eoc(t).l2[0]));
    }
    SECTION("too few records") {
        ConvergenceTable single;
        single.records.push_back(t.records[0]);
        CHECK_THROWS_AS(eoc(single), invalid_parameter);
    }
}

TEST_CASE("convergence study on the quartic problem") {
    const GaussCurvatureProblem p = manufactured_problem("quartic");
    const Mesh base = generate_square_mesh(-0.5, 0.5, 3, 0.1, 1);
    const StudyResult res = run_convergence_study(p, base, 3);
    REQUIRE(res.all_converged);
    REQUIRE(res.table.records.size() == 3);

    SECTION("errors decrease monotonically") {
        for (std::size_t i = 0; i + 1 < res.table.records.size(); ++i) {
            CHECK(res.table.records[i + 1].err_l2 < res.table.records[i].err_l2);
            CHECK(res.table.records[i + 1].err_h1 < res.table.records[i].err_h1);
            CHECK(res.table.records[i + 1].err_hessian <= res.table.records[i].err_hessian);
        }
    }
    SECTION("meshsize halves between levels") {
        for (std::size_t i = 0; i + 1 < res.table.records.size(); ++i)
            CHECK(res.table.records[i + 1].h_max ==
                  Catch::Approx(res.table.records[i].h_max / 2).epsilon(1e-12));
    }
    SECTION("rate trends") {
        const EocRates r = eoc(res.table);
        CHECK(r.l2.back() > 2.0);
        CHECK(r.h1.back() > 1.5);
        CHECK(r.hessian.back() > 1.0);
    }
}

TEST_CASE("study guards") {
    const GaussCurvatureProblem p = manufactured_problem("quartic");
    const Mesh base = generate_square_mesh(-0.5, 0.5, 2, 0.0);
    CHECK_THROWS_AS(run_convergence_study(p, base, 1), invalid_parameter);
}
