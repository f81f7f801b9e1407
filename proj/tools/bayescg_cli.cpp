// Command-line driver: solve, converge, estimate, describe, gen-problem.
// Exit codes: 0 success, 1 solver breakdown, 2 configuration, parse or I/O error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "bayescg/experiment.hpp"

namespace {

using namespace bayescg;

constexpr int kExitOk = 0;
constexpr int kExitSolver = 1;
constexpr int kExitConfig = 2;

struct FlagTable {
    std::string config_path;
    std::map<std::string, std::string> values;
    std::vector<std::pair<std::string, std::string>> order;  // (config key, flag)
};

void add_config_flags(CLI::App* cmd, FlagTable& t) {
    cmd->add_option("-c,--config", t.config_path, "key=value config file; flags override it");
    const std::vector<std::pair<std::string, std::string>> flags = {
        {"problem.kind", "--problem-kind"},   {"problem.n", "--n"},
        {"problem.spectrum", "--spectrum"},   {"problem.kappa", "--kappa"},
        {"problem.lam_min", "--lam-min"},     {"problem.lam_max", "--lam-max"},
        {"problem.rho", "--rho"},             {"problem.seed", "--problem-seed"},
        {"problem.solution", "--solution"},   {"problem.solution_path", "--solution-path"},
        {"problem.matrix_path", "--matrix"},  {"problem.drop_tol", "--drop-tol"},
        {"solver", "--solver"},               {"reorthogonalize", "--reorth"},
        {"iterations", "--iterations"},       {"rel_residual_tol", "--tol"},
        {"samples", "--samples"},             {"alpha", "--alpha"},
        {"output_dir", "--out"},              {"seed", "--seed"},
    };
    for (const auto& [key, flag] : flags) {
        t.order.emplace_back(key, flag);
        cmd->add_option(flag, t.values[key], "sets " + key);
    }
}

ExperimentConfig resolve_config(const FlagTable& t, CLI::App* cmd) {
    ExperimentConfig cfg;
    if (!t.config_path.empty()) cfg = load_config(t.config_path);
    for (const auto& [key, flag] : t.order)
        if (cmd->count(flag) > 0) set_config_value(cfg, key, t.values.at(key));
    return cfg;
}

std::ofstream open_file(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    std::ofstream out((std::filesystem::path(dir) / name).string(), std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + name + "' in '" + dir + "'");
    return out;
}

int run_solve(const ExperimentConfig& cfg) {
    const Problem p = build_problem(cfg.problem);
    const SolverChoice choice = parse_solver(cfg.solver);
    const Vector x0 = Vector::Zero(p.a.dim());
    CgConfig cg_cfg;
    cg_cfg.reorthogonalize = cfg.reorthogonalize;
    cg_cfg.rel_residual_tol = cfg.rel_residual_tol;
    cg_cfg.max_iters = cfg.iterations;
    cg_cfg.store_iterates = p.a.dim() <= 4096;

    {
        auto m = open_file(cfg.output_dir, "manifest.txt");
        write_manifest(m, cfg, "solve");
    }
    Vector x;
    SolveTrace trace;
    std::optional<KrylovFactors> factors;
    switch (choice.kind) {
        case SolverChoice::Kind::Cg: {
            CgResult r = cg_solve(p.a, p.b, x0, cg_cfg);
            x = std::move(r.x);
            trace = std::move(r.trace);
            break;
        }
        case SolverChoice::Kind::BayesCg: {
            PriorSpec ps;
            ps.kind = choice.prior;
            BayesCgConfig b;
            b.reorthogonalize = cfg.reorthogonalize;
            b.rel_residual_tol = cfg.rel_residual_tol;
            b.max_iters = cfg.iterations;
            b.store_iterates = cg_cfg.store_iterates;
            b.covariance = CovarianceMode::Downdates;
            BayesCgResult r = bayescg_solve(p.a, p.b, make_prior(ps, p.a, x0), b);
            x = r.posterior.mean;
            trace = std::move(r.trace);
            std::cout << "trace_ASigma: " << format_double(r.posterior.trace_a_sigma) << '\n';
            break;
        }
        case SolverChoice::Kind::Krylov: {
            KrylovResult r = bayescg_krylov_solve(p.a, p.b, x0, choice.delay, cg_cfg);
            x = std::move(r.x);
            trace = std::move(r.trace);
            factors = std::move(r.factors);
            break;
        }
    }
    {
        auto out = open_file(cfg.output_dir, "x.txt");
        write_vector(out, x);
    }
    {
        auto out = open_file(cfg.output_dir, "trace.csv");
        write_trace_csv(out, trace, std::make_pair(&p.a, &p.x_star));
    }
    const double err = a_norm_sq(p.a, p.x_star - x);
    std::cout << "iterations: " << trace.iterations() << '\n'
              << "termination: " << to_string(trace.termination) << '\n'
              << "residual_norm: "
              << format_double(trace.records.empty() ? trace.initial_residual_norm : trace.records.back().residual_norm)
              << '\n'
              << "anorm_err_sq: " << format_double(err) << '\n';
    if (factors) {
        auto out = open_file(cfg.output_dir, "factors.csv");
        write_factors_csv(out, *factors);
        const ErrorEstimate e = credible_interval(*factors, cfg.alpha);
        std::cout << "delay: " << e.d << '\n'
                  << "mu: " << format_double(e.mu) << '\n'
                  << "sigma_sq: " << format_double(e.sigma_sq) << '\n'
                  << "s_alpha: " << format_double(e.s_alpha) << '\n';
    }
    return kExitOk;
}

int run_converge(const ExperimentConfig& cfg) {
    const Problem p = build_problem(cfg.problem);
    const ExperimentSummary s = run_convergence_experiment(cfg, p);
    auto gp = open_file(cfg.output_dir, "convergence.gp");
    write_gnuplot_stub(gp, "convergence.csv", false);
    std::cout << "rows: " << s.rows << '\n' << "csv: " << s.csv_path << '\n';
    return kExitOk;
}

int run_estimate(const ExperimentConfig& cfg) {
    const Problem p = build_problem(cfg.problem);
    const ExperimentSummary s = run_estimation_experiment(cfg, p);
    auto gp = open_file(cfg.output_dir, "estimate.gp");
    write_gnuplot_stub(gp, "estimate.csv", true);
    std::cout << "rows: " << s.rows << '\n' << "csv: " << s.csv_path << '\n';
    return kExitOk;
}

int run_describe(const ExperimentConfig& cfg, Index lanczos_steps) {
    const Problem p = build_problem(cfg.problem);
    write_description(std::cout, describe_problem(p, lanczos_steps));
    return kExitOk;
}

int run_gen_problem(const ExperimentConfig& cfg) {
    const Problem p = build_problem(cfg.problem);
    write_problem(p, cfg.output_dir);
    auto m = open_file(cfg.output_dir, "manifest.txt");
    write_manifest(m, cfg, "gen-problem");
    std::cout << "wrote A.mtx, x_star.txt, b.txt to " << cfg.output_dir << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"BayesCG solvers, posterior error estimates and experiment driver"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    struct Sub {
        CLI::App* cmd;
        FlagTable flags;
    };
    std::map<std::string, Sub> subs;
    const std::vector<std::pair<std::string, std::string>> names = {
        {"solve", "solve one system and write x, the iteration trace and Krylov factors"},
        {"converge", "per-iteration error, trace(A Sigma_m) and posterior samples"},
        {"estimate", "per-iteration error estimates and credible bounds from rank-d posteriors"},
        {"describe", "dimension, nnz and Lanczos extremal eigenvalue estimates"},
        {"gen-problem", "write A, x* and b of a generated problem"},
    };
    for (const auto& [name, help] : names) {
        auto& s = subs[name];
        s.cmd = app.add_subcommand(name, help);
        add_config_flags(s.cmd, s.flags);
    }
    Index lanczos_steps = 200;
    subs["describe"].cmd->add_option("--lanczos-steps", lanczos_steps, "Lanczos steps (capped at n)")
        ->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfig;
    }

    try {
        for (auto& [name, s] : subs) {
            if (!s.cmd->parsed()) continue;
            const ExperimentConfig cfg = resolve_config(s.flags, s.cmd);
            if (name == "solve") return run_solve(cfg);
            if (name == "converge") return run_converge(cfg);
            if (name == "estimate") return run_estimate(cfg);
            if (name == "describe") return run_describe(cfg, lanczos_steps);
            if (name == "gen-problem") return run_gen_problem(cfg);
        }
    } catch (const BreakdownError& e) {
        std::cerr << "solver error: " << e.what() << " (iteration " << e.index() << ")\n";
        return kExitSolver;
    } catch (const ParseError& e) {
        std::cerr << "parse error: " << e.what() << " (line " << e.line() << ")\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitConfig;
    }
    return kExitConfig;
}
