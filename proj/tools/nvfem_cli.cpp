// Command-line driver: convergence studies, constant-curvature sweeps,
// standalone linear solves, and mesh inspection. All numeric output uses
// %.17g with LF newlines so repeated runs are byte-identical.

#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "nvfem/nvfem.hpp"
#include "nvfem/report.hpp"

namespace fs = std::filesystem;
using namespace nvfem;

namespace {

constexpr int exit_ok = 0;
constexpr int exit_config_error = 1;
constexpr int exit_nonconvergence = 2;

std::string fmt(double v) { return format_number(v); }

struct RunConfig {
    std::string out_dir = ".";
    double half_width = 0.5;
    int n = 4;
    double perturb = 0.15;
    int levels = 4;
    std::uint64_t seed = 1;
    std::string problem = "quartic";
    std::vector<double> k_values;
    double tol = 1e-10;
    int max_iter = 50;
    double damping = 1.0;
};

void add_common_options(CLI::App* cmd, RunConfig& cfg) {
    cmd->fallthrough(); // lets the root-level --config appear after the subcommand
    cmd->add_option("--out", cfg.out_dir, "output directory");
    cmd->add_option("--half-width", cfg.half_width, "domain is [-X, X]^2");
    cmd->add_option("--n", cfg.n, "base resolution (n x n squares, criss-crossed)");
    cmd->add_option("--perturb", cfg.perturb, "interior vertex perturbation in [0, 0.3)");
    cmd->add_option("--seed", cfg.seed, "perturbation seed");
    cmd->add_option("--tol", cfg.tol, "Newton stop tolerance (increment sup norm)");
    cmd->add_option("--max-iter", cfg.max_iter, "Newton iteration cap");
    cmd->add_option("--damping", cfg.damping, "Newton damping factor in (0, 1]");
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open '" + path.string() + "' for writing");
    return out;
}

void prepare_out_dir(const RunConfig& cfg) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    // probe writability up front so failures are a clean config error
    const fs::path probe = fs::path(cfg.out_dir) / ".write_probe";
    {
        std::ofstream test(probe);
        if (!test) throw invalid_parameter("output directory '" + cfg.out_dir +
                                           "' is not writable");
    }
    fs::remove(probe, ec);
}

NewtonConfig newton_config(const RunConfig& cfg) {
    NewtonConfig nc;
    nc.tol = cfg.tol;
    nc.max_iter = cfg.max_iter;
    nc.damping = cfg.damping;
    nc.validate();
    return nc;
}

void write_convergence_csv(const fs::path& path, const ConvergenceTable& table) {
    auto out = open_out(path);
    out << convergence_csv(table);
}

void print_convergence_table(const ConvergenceTable& table) {
    EocRates rates;
    if (table.records.size() >= 2) rates = eoc(table);
    std::printf("%5s %12s %8s %12s %8s %12s %8s %12s %8s %6s\n", "level", "h", "ndof",
                "err_l2", "eoc", "err_h1", "eoc", "err_h2", "eoc", "iters");
    for (std::size_t i = 0; i < table.records.size(); ++i) {
        const auto& r = table.records[i];
        const auto cell = [&](const std::vector<double>& v) {
            return i == 0 ? std::string("-") : fmt(v[i - 1]).substr(0, 5);
        };
        std::printf("%5d %12.4e %8d %12.4e %8s %12.4e %8s %12.4e %8s %6d\n", r.level,
                    r.h_max, r.n_dofs, r.err_l2, cell(rates.l2).c_str(), r.err_h1,
                    cell(rates.h1).c_str(), r.err_hessian, cell(rates.hessian).c_str(),
                    r.newton_iterations);
    }
}

int cmd_converge(const RunConfig& cfg) {
    if (cfg.problem != "quartic" && cfg.problem != "exponential")
        throw invalid_parameter("converge: --problem must be quartic or exponential");
    if (cfg.levels < 2) throw invalid_parameter("converge: need --levels >= 2 for EOC");
    prepare_out_dir(cfg);

    const GaussCurvatureProblem p = manufactured_problem(cfg.problem, cfg.half_width);
    const Mesh base = generate_square_mesh(-cfg.half_width, cfg.half_width, cfg.n,
                                           cfg.perturb, cfg.seed);
    const fs::path dir(cfg.out_dir);

    const StudyResult study = run_convergence_study(
        p, base, cfg.levels, newton_config(cfg),
        [&](int level, const Mesh& mesh, const NonvariationalSolver& ctx,
            const NewtonResult& res) {
            auto mout = open_out(dir / ("mesh_" + std::to_string(level) + ".txt"));
            mout << save_mesh(mesh);
            if (res.converged())
                emit_field(ctx.vspace(), res.u.coeffs(),
                           (dir / ("field_u_level" + std::to_string(level) + ".dat"))
                               .string());
        });

    write_convergence_csv(dir / "convergence.csv", study.table);
    print_convergence_table(study.table);
    if (!study.all_converged) {
        std::cerr << "warning: Newton " << to_string(study.last_status)
                  << " at level " << study.table.records.size() << "\n";
        return exit_nonconvergence;
    }
    return exit_ok;
}

int cmd_sweep(const RunConfig& cfg) {
    if (cfg.k_values.empty()) throw invalid_parameter("sweep: --k list is required");
    for (double k : cfg.k_values)
        if (!(k > 0)) throw invalid_parameter("sweep: all K values must be positive");
    prepare_out_dir(cfg);

    const Mesh mesh = generate_square_mesh(-cfg.half_width, cfg.half_width, cfg.n,
                                           cfg.perturb, cfg.seed);
    const NonvariationalSolver ctx(mesh);
    const NewtonConfig nc = newton_config(cfg);
    const fs::path dir(cfg.out_dir);

    auto csv = open_out(dir / "sweep.csv");
    csv << "K,converged,iterations,min_u,min_eig_H\n";
    auto report = open_out(dir / "sweep_report.txt");
    report << "Constant-curvature sweep on [" << fmt(-cfg.half_width) << ","
           << fmt(cfg.half_width) << "]^2, " << mesh.num_cells()
           << " cells, h_max=" << fmt(mesh_size(mesh)) << "\n"
           << "Boundary data: u = 0 on the boundary. The largest K for which\n"
           << "Newton still converges depends on this choice; other boundary\n"
           << "data shifts the observed breakdown threshold. Runs ascend in K\n"
           << "and warm-start from the previous converged curvature.\n\n";

    const auto entries = sweep_constant_curvature(
        ctx, cfg.k_values, [](const Vec2&) { return 0.0; }, nc);
    bool all_converged = true;
    for (const auto& e : entries) {
        const NewtonResult& res = e.result;
        const double min_u = res.u.coeffs().minCoeff();
        const double min_eig =
            check_fe_convexity(res.H, nc.convexity_tol, ctx.quadrature()).min_eigenvalue;
        csv << fmt(e.k) << ',' << (res.converged() ? "true" : "false") << ','
            << res.iterations << ',' << fmt(min_u) << ',' << fmt(min_eig) << '\n';
        report << "K=" << fmt(e.k) << ": " << to_string(res.status) << " after "
               << res.iterations << " iterations";
        if (!res.converged() && !res.trace.empty())
            report << " (last residual " << fmt(res.trace.back().residual_linf)
                   << ", last increment " << fmt(res.trace.back().increment_linf)
                   << ")";
        report << "\n";
        std::printf("K=%-8g %-20s iters=%d min_u=%.6g\n", e.k,
                    to_string(res.status).c_str(), res.iterations, min_u);
        all_converged = all_converged && res.converged();
        if (res.converged()) {
            char tag[48];
            std::snprintf(tag, sizeof tag, "field_K%g.dat", e.k);
            emit_field(ctx.vspace(), res.u.coeffs(), (dir / tag).string());
        }
    }
    return all_converged ? exit_ok : exit_nonconvergence;
}

struct LinearCase {
    LinearNVProblem problem;
    std::function<double(const Vec2&)> exact;
};

LinearCase make_linear_case(const std::string& name, double hw) {
    const double pi = std::acos(-1.0);
    const auto sine = [pi, hw](const Vec2& x) {
        return std::sin(pi * (x.x() + hw)) * std::sin(pi * (x.y() + hw));
    };

    LinearCase lc;
    if (name == "identity") {
        lc.exact = sine;
        lc.problem = make_constant_problem(
            Mat2::Identity(),
            [pi, sine](const Vec2& x) { return -2.0 * pi * pi * sine(x); },
            [](const Vec2&) { return 0.0; });
    } else if (name == "constant-spd") {
        Mat2 A;
        A << 2, 1, 1, 2;
        lc.exact = [](const Vec2& x) { return x.x() * x.x() + x.x() * x.y(); };
        // A : D^2(x^2 + xy) = 2*2 + 2*1*1 = 6
        lc.problem = make_constant_problem(
            A, [](const Vec2&) { return 6.0; }, lc.exact);
    } else if (name == "manufactured") {
        // A(x) = [[1+x^2, xy],[xy, 1+y^2]], SPD since det = 1 + x^2 + y^2
        lc.exact = sine;
        lc.problem.g = [](const Vec2&) { return 0.0; };
        lc.problem.A = [](int, const Vec2&, const Vec2& x) {
            Mat2 A;
            A << 1 + x.x() * x.x(), x.x() * x.y(), x.x() * x.y(), 1 + x.y() * x.y();
            return A;
        };
        lc.problem.f = [pi, hw](int, const Vec2&, const Vec2& x) {
            const double sx = std::sin(pi * (x.x() + hw)), cx = std::cos(pi * (x.x() + hw));
            const double sy = std::sin(pi * (x.y() + hw)), cy = std::cos(pi * (x.y() + hw));
            const double uxx = -pi * pi * sx * sy;
            const double uyy = -pi * pi * sx * sy;
            const double uxy = pi * pi * cx * cy;
            return (1 + x.x() * x.x()) * uxx + 2 * x.x() * x.y() * uxy +
                   (1 + x.y() * x.y()) * uyy;
        };
    } else {
        throw invalid_parameter("solve-linear: unknown case '" + name + "'");
    }
    return lc;
}

int cmd_solve_linear(const RunConfig& cfg) {
    prepare_out_dir(cfg);
    const LinearCase lc = make_linear_case(cfg.problem, cfg.half_width);
    const fs::path dir(cfg.out_dir);
    const QuadratureRule quad = triangle_quadrature();

    auto csv = open_out(dir / "linear.csv");
    csv << "level,h,ndof,err_l2,eoc_l2\n";

    Mesh mesh = generate_square_mesh(-cfg.half_width, cfg.half_width, cfg.n,
                                     cfg.perturb, cfg.seed);
    double prev_err = 0.0, prev_h = 0.0;
    for (int lvl = 0; lvl < cfg.levels; ++lvl) {
        if (lvl > 0) mesh = refine_uniform(mesh);
        const NonvariationalSolver ctx(mesh);
        const LinearNVSolution sol = ctx.solve(lc.problem);
        const double err = error_l2(sol.u, lc.exact, quad);
        const double h = mesh_size(mesh);
        csv << lvl << ',' << fmt(h) << ',' << ctx.vspace().size() << ',' << fmt(err)
            << ',';
        if (lvl > 0 && err > 0.0) csv << fmt(std::log(prev_err / err) / std::log(prev_h / h));
        csv << '\n';
        std::printf("level %d  h=%.4e  ndof=%d  err_l2=%.6e\n", lvl, h,
                    ctx.vspace().size(), err);
        if (lvl == cfg.levels - 1)
            emit_field(ctx.vspace(), sol.u.coeffs(), (dir / "field_u.dat").string());
        prev_err = err;
        prev_h = h;
    }
    return exit_ok;
}

int cmd_mesh_info(const RunConfig& cfg, const std::string& mesh_file) {
    Mesh mesh = mesh_file.empty()
                    ? generate_square_mesh(-cfg.half_width, cfg.half_width, cfg.n,
                                           cfg.perturb, cfg.seed)
                    : [&] {
                          std::ifstream in(mesh_file, std::ios::binary);
                          if (!in) throw io_error("cannot read '" + mesh_file + "'");
                          std::ostringstream ss;
                          ss << in.rdbuf();
                          return load_mesh(ss.str());
                      }();
    std::printf("vertices       %d\n", mesh.num_vertices());
    std::printf("cells          %d\n", mesh.num_cells());
    std::printf("edges          %d\n", mesh.num_edges());
    std::printf("boundary_edges %d\n", static_cast<int>(mesh.boundary_edges.size()));
    std::printf("h_max          %.17g\n", mesh_size(mesh));
    std::printf("area           %.17g\n", mesh.total_area());
    if (!cfg.out_dir.empty() && mesh_file.empty()) {
        prepare_out_dir(cfg);
        auto out = open_out(fs::path(cfg.out_dir) / "mesh_0.txt");
        out << save_mesh(mesh);
    }
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Nonvariational finite element solver for prescribed Gauss curvature"};
    app.require_subcommand(1);
    app.set_config("--config", "",
                   "key=value config file, keys under a [subcommand] section; "
                   "flags override");

    RunConfig cfg;
    std::string mesh_file;

    auto* converge = app.add_subcommand("converge", "manufactured-solution convergence study");
    add_common_options(converge, cfg);
    converge->add_option("--problem", cfg.problem, "quartic | exponential");
    converge->add_option("--levels", cfg.levels, "number of refinement levels");

    auto* sweep = app.add_subcommand("sweep", "constant-curvature sweep with g = 0");
    add_common_options(sweep, cfg);
    sweep->add_option("--k", cfg.k_values, "curvature values")->delimiter(',');

    auto* linear = app.add_subcommand("solve-linear", "standalone linear solver runs");
    add_common_options(linear, cfg);
    linear->add_option("--case", cfg.problem, "identity | constant-spd | manufactured");
    linear->add_option("--levels", cfg.levels, "number of refinement levels");

    auto* info = app.add_subcommand("mesh-info", "generate or load a mesh and report stats");
    add_common_options(info, cfg);
    info->add_option("--mesh", mesh_file, "load this mesh file instead of generating");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? exit_ok : exit_config_error;
    }

    try {
        if (converge->parsed()) {
            cfg.half_width = converge->count("--half-width") ? cfg.half_width : 0.5;
            return cmd_converge(cfg);
        }
        if (sweep->parsed()) {
            if (!sweep->count("--half-width")) cfg.half_width = 0.57;
            if (!sweep->count("--n")) cfg.n = 23;
            return cmd_sweep(cfg);
        }
        if (linear->parsed()) {
            if (!linear->count("--case")) cfg.problem = "identity";
            return cmd_solve_linear(cfg);
        }
        if (info->parsed()) return cmd_mesh_info(cfg, mesh_file);
    } catch (const invalid_parameter& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config_error;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_config_error;
    }
    return exit_config_error;
}
