#pragma once

// Experiment configuration (flat key=value files), convergence and estimation runs that
// write CSV tables, and problem descriptions.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bayescg/bayescg.hpp"
#include "bayescg/cg.hpp"
#include "bayescg/errors.hpp"
#include "bayescg/io.hpp"
#include "bayescg/krylov.hpp"
#include "bayescg/lanczos.hpp"
#include "bayescg/problem.hpp"
#include "bayescg/uq.hpp"

namespace bayescg {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr int kCsvSchemaVersion = 1;

struct ExperimentConfig {
    ProblemSpec problem;
    /// cg | bayescg:<inverse|natural|identity> | krylov:<d|full>
    std::string solver = "krylov:5";
    bool reorthogonalize = true;
    /// Number of iterations to report; 0 runs until the residual tolerance is met.
    Index iterations = 0;
    double rel_residual_tol = 1e-8;
    Index samples = 10;
    double alpha = 95.0;
    std::string output_dir = "out";
    /// Seed of the posterior samples (the problem has its own seed).
    std::uint64_t seed = 1;
};

struct SolverChoice {
    enum class Kind { Cg, BayesCg, Krylov } kind = Kind::Cg;
    PriorKind prior = PriorKind::Inverse;
    Index delay = 0;  // kFullRank for krylov:full
};

inline SolverChoice parse_solver(const std::string& s) {
    SolverChoice c;
    if (s == "cg") return c;
    const auto colon = s.find(':');
    const std::string head = s.substr(0, colon);
    const std::string arg = colon == std::string::npos ? "" : s.substr(colon + 1);
    if (head == "bayescg") {
        c.kind = SolverChoice::Kind::BayesCg;
        if (arg == "inverse")
            c.prior = PriorKind::Inverse;
        else if (arg == "natural")
            c.prior = PriorKind::Natural;
        else if (arg == "identity")
            c.prior = PriorKind::Identity;
        else
            throw ConfigError("unknown BayesCG prior '" + arg + "' (expected inverse, natural or identity)");
        return c;
    }
    if (head == "krylov") {
        c.kind = SolverChoice::Kind::Krylov;
        if (arg == "full") {
            c.delay = kFullRank;
            return c;
        }
        try {
            std::size_t used = 0;
            const long long d = std::stoll(arg, &used);
            if (used != arg.size() || d < 1) throw ConfigError("");
            c.delay = static_cast<Index>(d);
        } catch (const std::exception&) {
            throw ConfigError("krylov solver needs a positive delay or 'full', got '" + arg + "'");
        }
        return c;
    }
    throw ConfigError("unknown solver '" + s + "'");
}

namespace detail {

inline const char* problem_kind_name(ProblemKind k) {
    switch (k) {
        case ProblemKind::Prescribed:
            return "prescribed";
        case ProblemKind::MatrixMarketPreconditioned:
            return "matrix-market-preconditioned";
        case ProblemKind::Explicit:
            return "explicit";
    }
    return "";
}

inline const char* spectrum_name(SpectrumKind k) { return k == SpectrumKind::Geometric ? "geometric" : "strakos"; }

inline const char* solution_name(SolutionMode m) {
    switch (m) {
        case SolutionMode::Gaussian:
            return "gaussian";
        case SolutionMode::Ones:
            return "ones";
        case SolutionMode::File:
            return "file";
    }
    return "";
}

inline double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': not a number: '" + v + "'");
}

inline long long parse_int(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const long long x = std::stoll(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': not an integer: '" + v + "'");
}

inline std::uint64_t parse_uint(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        if (!v.empty() && v[0] != '-') {
            const unsigned long long x = std::stoull(v, &used);
            if (used == v.size()) return x;
        }
    } catch (const std::exception&) {
    }
    throw ConfigError("config key '" + key + "': not an unsigned integer: '" + v + "'");
}

inline bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

}  // namespace detail

/// Sets one configuration entry. Throws ConfigError on unknown keys or bad values.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    using namespace detail;
    ProblemSpec& p = cfg.problem;
    if (key == "problem.kind") {
        if (value == "prescribed")
            p.kind = ProblemKind::Prescribed;
        else if (value == "matrix-market-preconditioned")
            p.kind = ProblemKind::MatrixMarketPreconditioned;
        else if (value == "explicit")
            p.kind = ProblemKind::Explicit;
        else
            throw ConfigError("unknown problem.kind '" + value + "'");
    } else if (key == "problem.n") {
        const long long n = parse_int(key, value);
        if (n < 1) throw ConfigError("problem.n must be positive");
        p.n = static_cast<Index>(n);
    } else if (key == "problem.spectrum") {
        if (value == "geometric")
            p.spectrum = SpectrumKind::Geometric;
        else if (value == "strakos")
            p.spectrum = SpectrumKind::Strakos;
        else
            throw ConfigError("unknown problem.spectrum '" + value + "'");
    } else if (key == "problem.kappa") {
        p.kappa = parse_double(key, value);
    } else if (key == "problem.lam_min") {
        p.lam_min = parse_double(key, value);
    } else if (key == "problem.lam_max") {
        p.lam_max = parse_double(key, value);
    } else if (key == "problem.rho") {
        p.rho = parse_double(key, value);
    } else if (key == "problem.seed") {
        p.seed = parse_uint(key, value);
    } else if (key == "problem.solution") {
        if (value == "gaussian")
            p.solution = SolutionMode::Gaussian;
        else if (value == "ones")
            p.solution = SolutionMode::Ones;
        else if (value == "file")
            p.solution = SolutionMode::File;
        else
            throw ConfigError("unknown problem.solution '" + value + "'");
    } else if (key == "problem.solution_path") {
        p.solution_path = value;
    } else if (key == "problem.matrix_path") {
        p.matrix_path = value;
    } else if (key == "problem.drop_tol") {
        p.drop_tol = parse_double(key, value);
    } else if (key == "solver") {
        parse_solver(value);
        cfg.solver = value;
    } else if (key == "reorthogonalize") {
        cfg.reorthogonalize = parse_bool(key, value);
    } else if (key == "iterations") {
        const long long it = parse_int(key, value);
        if (it < 0) throw ConfigError("iterations must be non-negative");
        cfg.iterations = static_cast<Index>(it);
    } else if (key == "rel_residual_tol") {
        cfg.rel_residual_tol = parse_double(key, value);
        if (!(cfg.rel_residual_tol > 0.0)) throw ConfigError("rel_residual_tol must be positive");
    } else if (key == "samples") {
        const long long s = parse_int(key, value);
        if (s < 0) throw ConfigError("samples must be non-negative");
        cfg.samples = static_cast<Index>(s);
    } else if (key == "alpha") {
        cfg.alpha = parse_double(key, value);
        credible_multiplier(cfg.alpha);
    } else if (key == "output_dir") {
        cfg.output_dir = value;
    } else if (key == "seed") {
        cfg.seed = parse_uint(key, value);
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
}

/// key=value lines; '#' starts a comment line.
inline ExperimentConfig parse_config(std::istream& in, ExperimentConfig cfg = {}) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ParseError("config line without '='", line_no);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        set_config_value(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path, ExperimentConfig cfg = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse_config(in, std::move(cfg));
}

inline void write_config(std::ostream& out, const ExperimentConfig& cfg) {
    const ProblemSpec& p = cfg.problem;
    out << "problem.kind=" << detail::problem_kind_name(p.kind) << '\n'
        << "problem.n=" << p.n << '\n'
        << "problem.spectrum=" << detail::spectrum_name(p.spectrum) << '\n'
        << "problem.kappa=" << format_double(p.kappa) << '\n'
        << "problem.lam_min=" << format_double(p.lam_min) << '\n'
        << "problem.lam_max=" << format_double(p.lam_max) << '\n'
        << "problem.rho=" << format_double(p.rho) << '\n'
        << "problem.seed=" << p.seed << '\n'
        << "problem.solution=" << detail::solution_name(p.solution) << '\n'
        << "problem.solution_path=" << p.solution_path << '\n'
        << "problem.matrix_path=" << p.matrix_path << '\n'
        << "problem.drop_tol=" << format_double(p.drop_tol) << '\n'
        << "solver=" << cfg.solver << '\n'
        << "reorthogonalize=" << (cfg.reorthogonalize ? "true" : "false") << '\n'
        << "iterations=" << cfg.iterations << '\n'
        << "rel_residual_tol=" << format_double(cfg.rel_residual_tol) << '\n'
        << "samples=" << cfg.samples << '\n'
        << "alpha=" << format_double(cfg.alpha) << '\n'
        << "output_dir=" << cfg.output_dir << '\n'
        << "seed=" << cfg.seed << '\n';
}

inline std::string config_to_string(const ExperimentConfig& cfg) {
    std::ostringstream ss;
    write_config(ss, cfg);
    return ss.str();
}

/// Config plus code and schema version.
inline void write_manifest(std::ostream& out, const ExperimentConfig& cfg, const std::string& command) {
    out << "# bayescg run manifest\n"
        << "command=" << command << '\n'
        << "code_version=" << kVersion << '\n'
        << "csv_schema=" << kCsvSchemaVersion << '\n';
    write_config(out, cfg);
}

namespace detail {

inline std::ofstream open_output(const std::string& dir, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
    const std::string path = (std::filesystem::path(dir) / name).string();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + path + "'");
    return out;
}

inline void write_manifest_file(const ExperimentConfig& cfg, const std::string& command) {
    auto out = open_output(cfg.output_dir, "manifest.txt");
    write_manifest(out, cfg, command);
}

inline std::string csv_number(double x) { return std::isfinite(x) ? format_double(x) : std::string(); }

/// Number of iterations to report for a run that otherwise stops at the tolerance.
inline Index report_iterations(const ExperimentConfig& cfg, const Problem& p) {
    if (cfg.iterations > 0) return cfg.iterations;
    CgConfig c;
    c.reorthogonalize = cfg.reorthogonalize;
    c.rel_residual_tol = cfg.rel_residual_tol;
    return cg_solve(p.a, p.b, Vector::Zero(p.a.dim()), c).trace.iterations();
}

inline void sample_header(std::ostream& out, Index samples) {
    for (Index k = 1; k <= samples; ++k) out << ",sample_" << k;
}

}  // namespace detail

/// Rows written by an experiment.
struct ExperimentSummary {
    Index rows = 0;
    std::string csv_path;
};

/// Per-iteration convergence table, convergence.csv. Columns: iter, anorm_err_sq,
/// trace_ASigma, sample_1 .. sample_N. For cg the trace and sample columns are empty;
/// for bayescg they come from the dense posterior N(x_m, Sigma_m); for krylov:d from
/// the rank-d factors (krylov:full uses every remaining direction).
inline ExperimentSummary run_convergence_experiment(const ExperimentConfig& cfg, const Problem& problem) {
    const SolverChoice choice = parse_solver(cfg.solver);
    const SpdOperator& a = problem.a;
    const Index n = a.dim();
    const Vector x0 = Vector::Zero(n);
    const Index iters = detail::report_iterations(cfg, problem);
    const Rng sampling_root(cfg.seed);

    detail::write_manifest_file(cfg, "converge");
    auto out = detail::open_output(cfg.output_dir, "convergence.csv");
    out << "iter,anorm_err_sq,trace_ASigma";
    detail::sample_header(out, cfg.samples);
    out << '\n';
    ExperimentSummary summary;
    summary.csv_path = (std::filesystem::path(cfg.output_dir) / "convergence.csv").string();

    auto write_row = [&](Index m, double err, double tr, const std::vector<double>* samples) {
        out << m << ',' << detail::csv_number(err) << ',' << detail::csv_number(tr);
        for (Index k = 0; k < cfg.samples; ++k)
            out << ',' << (samples ? detail::csv_number((*samples)[static_cast<std::size_t>(k)]) : std::string());
        out << '\n';
        ++summary.rows;
    };
    auto draw = [&](Index m, auto&& sampler) -> std::vector<double> {
        if (cfg.samples == 0) return {};
        Rng rng = sampling_root.split(static_cast<std::uint64_t>(m));
        return sampler(std::max<Index>(cfg.samples, 2), rng).samples;
    };

    switch (choice.kind) {
        case SolverChoice::Kind::Cg: {
            CgConfig c;
            c.reorthogonalize = cfg.reorthogonalize;
            c.rel_residual_tol = std::numeric_limits<double>::min();
            c.max_iters = iters;
            c.store_iterates = true;
            const CgResult r = cg_solve(a, problem.b, x0, c);
            for (std::size_t m = 0; m < r.trace.iterates.size(); ++m)
                write_row(static_cast<Index>(m), a_norm_sq(a, problem.x_star - r.trace.iterates[m]),
                          std::numeric_limits<double>::quiet_NaN(), nullptr);
            break;
        }
        case SolverChoice::Kind::BayesCg: {
            PriorSpec ps;
            ps.kind = choice.prior;
            const Gaussian prior = make_prior(ps, a, x0);
            BayesCgConfig c;
            c.reorthogonalize = cfg.reorthogonalize;
            c.rel_residual_tol = std::numeric_limits<double>::min();
            c.max_iters = iters;
            c.observer = [&](const BayesCgState& st) {
                std::vector<double> s;
                if (cfg.samples > 0) {
                    const Gaussian post = Gaussian::dense(*st.mean, *st.covariance);
                    s = draw(st.m, [&](Index count, Rng& rng) {
                        return s_statistic_samples(a, post, count, rng, cfg.alpha);
                    });
                }
                write_row(st.m, a_norm_sq(a, problem.x_star - *st.mean), st.trace_a_sigma,
                          cfg.samples > 0 ? &s : nullptr);
            };
            try {
                bayescg_solve(a, problem.b, prior, c);
            } catch (const BreakdownError&) {
                // Past the grade the search directions vanish; rows written so far stand.
                if (summary.rows == 0) throw;
            }
            break;
        }
        case SolverChoice::Kind::Krylov: {
            for_each_delay_window(a, problem.b, x0, &problem.x_star, iters, choice.delay, cfg.reorthogonalize,
                                  [&](const DelayWindow& w) {
                                      std::vector<double> s;
                                      if (cfg.samples > 0)
                                          s = draw(w.m, [&](Index count, Rng& rng) {
                                              return s_statistic_samples(w.factors, count, rng, cfg.alpha);
                                          });
                                      write_row(w.m, w.err_sq, w.factors.trace(), cfg.samples > 0 ? &s : nullptr);
                                  });
            break;
        }
    }
    if (!out) throw ConfigError("write failed for '" + summary.csv_path + "'");
    return summary;
}

/// Per-iteration estimate table, estimate.csv. Columns: iter, d, true_err_sq, mu,
/// sigma_sq, s_alpha, mu_hat, s_hat, rho_mu, rho_s_alpha, rho_mu_hat, rho_s_hat,
/// sample_1 .. sample_N. Accuracy columns are empty where rho is undefined.
inline ExperimentSummary run_estimation_experiment(const ExperimentConfig& cfg, const Problem& problem) {
    const SolverChoice choice = parse_solver(cfg.solver);
    if (choice.kind != SolverChoice::Kind::Krylov || choice.delay == kFullRank)
        throw ConfigError("estimate needs solver krylov:<d>");
    const SpdOperator& a = problem.a;
    const Index n = a.dim();
    const Index iters = detail::report_iterations(cfg, problem);
    const Rng sampling_root(cfg.seed);
    const bool sampling = cfg.samples >= 2;
    if (cfg.samples == 1) throw ConfigError("estimate needs samples = 0 or samples >= 2");

    detail::write_manifest_file(cfg, "estimate");
    auto out = detail::open_output(cfg.output_dir, "estimate.csv");
    out << "iter,d,true_err_sq,mu,sigma_sq,s_alpha,mu_hat,s_hat,rho_mu,rho_s_alpha,rho_mu_hat,rho_s_hat";
    detail::sample_header(out, cfg.samples);
    out << '\n';
    ExperimentSummary summary;
    summary.csv_path = (std::filesystem::path(cfg.output_dir) / "estimate.csv").string();

    auto rho = [](double e, double t) {
        return e > 0.0 && t > 0.0 ? detail::csv_number(relative_accuracy(e, t)) : std::string();
    };
    for_each_delay_window(
        a, problem.b, Vector::Zero(n), &problem.x_star, iters, choice.delay, cfg.reorthogonalize,
        [&](const DelayWindow& w) {
            const ErrorEstimate est = credible_interval(w.factors, cfg.alpha);
            EmpiricalEstimate emp;
            double mu_hat = std::numeric_limits<double>::quiet_NaN(), s_hat = mu_hat;
            if (sampling) {
                Rng rng = sampling_root.split(static_cast<std::uint64_t>(w.m));
                emp = s_statistic_samples(w.factors, cfg.samples, rng, cfg.alpha);
                mu_hat = emp.mu_hat;
                s_hat = emp.s_hat;
            }
            out << w.m << ',' << w.factors.rank() << ',' << detail::csv_number(w.err_sq) << ','
                << detail::csv_number(est.mu) << ',' << detail::csv_number(est.sigma_sq) << ','
                << detail::csv_number(est.s_alpha) << ',' << detail::csv_number(mu_hat) << ','
                << detail::csv_number(s_hat) << ',' << rho(est.mu, w.err_sq) << ',' << rho(est.s_alpha, w.err_sq)
                << ',' << rho(mu_hat, w.err_sq) << ',' << rho(s_hat, w.err_sq);
            for (double s : emp.samples) out << ',' << detail::csv_number(s);
            out << '\n';
            ++summary.rows;
        });
    if (!out) throw ConfigError("write failed for '" + summary.csv_path + "'");
    return summary;
}

struct ProblemDescription {
    Index n = 0;
    Index nnz = 0;
    RitzEstimate ritz;
    std::optional<double> shift_constant;
    std::optional<Index> factor_offdiag_nnz;
};

inline ProblemDescription describe_problem(const Problem& p, Index lanczos_steps = 200) {
    ProblemDescription d;
    d.n = p.a.dim();
    d.nnz = p.a.nnz();
    d.ritz = lanczos_extremal(p.a, std::min(lanczos_steps, d.n));
    d.shift_constant = p.shift_constant;
    d.factor_offdiag_nnz = p.factor_offdiag_nnz;
    return d;
}

inline void write_description(std::ostream& out, const ProblemDescription& d) {
    out << "n: " << d.n << '\n'
        << "nnz: " << d.nnz << '\n'
        << "lanczos_steps: " << d.ritz.steps << '\n'
        << "ritz_min: " << format_double(d.ritz.lambda_min) << '\n'
        << "ritz_max: " << format_double(d.ritz.lambda_max) << '\n'
        << "kappa_estimate: " << format_double(d.ritz.kappa()) << '\n';
    if (d.shift_constant) out << "shift_constant: " << format_double(*d.shift_constant) << '\n';
    if (d.factor_offdiag_nnz) out << "factor_offdiag_nnz: " << *d.factor_offdiag_nnz << '\n';
}

/// gnuplot script plotting the table in `csv_name` on a log scale.
inline void write_gnuplot_stub(std::ostream& out, const std::string& csv_name, bool estimate) {
    out << "set datafile separator ','\nset logscale y\nset key autotitle columnhead\nset xlabel 'iteration'\n";
    if (estimate)
        out << "plot '" << csv_name << "' using 1:3 with lines, '' using 1:4 with lines, '' using 1:6 with lines\n";
    else
        out << "plot '" << csv_name << "' using 1:2 with lines, '' using 1:3 with lines\n";
}

/// Writes A (Matrix Market), x* and b into `dir`. A must be explicitly stored.
inline void write_problem(const Problem& p, const std::string& dir) {
    if (p.a.is_dense()) {
        auto out = detail::open_output(dir, "A.mtx");
        write_matrix_market(out, *p.a.dense_matrix());
    } else if (const SparseMatrix* s = p.a.sparse_matrix()) {
        auto out = detail::open_output(dir, "A.mtx");
        write_matrix_market(out, *s);
    } else {
        throw ConfigError("gen-problem: preconditioned operators are not stored explicitly");
    }
    auto xs = detail::open_output(dir, "x_star.txt");
    write_vector(xs, p.x_star);
    auto bs = detail::open_output(dir, "b.txt");
    write_vector(bs, p.b);
}

}  // namespace bayescg
