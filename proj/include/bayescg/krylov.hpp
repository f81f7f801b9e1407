#pragma once

// BayesCG under the Krylov prior Gamma0 = V Phi V^T, V^T A V = I, phi_i = gamma_i |r_{i-1}|^2.
// The posterior mean after m iterations is the CG iterate x_m, and the rank-d
// approximate posterior covariance is built from the directions of d further CG
// iterations: Gamma_m ~ V_{m+1:m+d} Phi_{m+1:m+d} V_{m+1:m+d}^T.

#include <cmath>
#include <cstdint>
#include <cstring>
#include <deque>
#include <functional>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "bayescg/bayescg.hpp"
#include "bayescg/cg.hpp"
#include "bayescg/errors.hpp"
#include "bayescg/gaussian.hpp"
#include "bayescg/io.hpp"
#include "bayescg/linalg.hpp"

namespace bayescg {

/// Pass as the delay to keep iterating until the grade is reached.
inline constexpr Index kFullRank = std::numeric_limits<Index>::max();

/// Relative residual at which a delay loop treats the Krylov space as exhausted.
inline constexpr double kGradeTol = 1e-14;

struct KrylovFactors {
    /// Iteration of the posterior mean; the columns are directions m+1 .. m+d.
    Index m = 0;
    /// A-normalized directions, n x d.
    Matrix v;
    Vector phi;
    /// V^T A V, d x d.
    Matrix gram;
    /// Set when the grade was reached before the requested delay was complete.
    bool grade_reached = false;

    Index dim() const { return v.rows(); }
    Index rank() const { return phi.size(); }

    /// sum of phi in increasing index order.
    double trace() const {
        double s = 0.0;
        for (Index i = 0; i < phi.size(); ++i) s += phi[i];
        return s;
    }

    /// F = V diag(sqrt(phi)), so that Gamma = F F^T.
    Matrix factor() const { return v * phi.cwiseSqrt().asDiagonal(); }

    Gaussian posterior(const Vector& mean) const { return Gaussian::factored(mean, factor()); }

    /// First k columns, as produced by a run with delay k.
    KrylovFactors prefix(Index k) const {
        require(k >= 0 && k <= rank(), "KrylovFactors::prefix: bad length");
        KrylovFactors out;
        out.m = m;
        out.v = v.leftCols(k);
        out.phi = phi.head(k);
        out.gram = gram.topLeftCorner(k, k);
        out.grade_reached = grade_reached && k == rank();
        return out;
    }
};

struct KrylovResult {
    Vector x;
    KrylovFactors factors;
    /// Iterations 1..m; the delay iterations are not recorded here.
    SolveTrace trace;
};

namespace detail {

inline void append_direction(KrylovFactors& f, const CgIteration::Step& s, Index n) {
    const Index k = f.phi.size();
    f.v.conservativeResize(n, k + 1);
    f.phi.conservativeResize(k + 1);
    const double scale = std::sqrt(s.eta);
    f.v.col(k) = s.v / scale;
    f.phi[k] = s.gamma * s.rr_prev;
}

inline void finish_gram(KrylovFactors& f, const SpdOperator& a) {
    if (f.v.cols() == 0) {
        f.v.resize(a.dim(), 0);
        f.gram.resize(0, 0);
        return;
    }
    f.gram = f.v.transpose() * a.apply(f.v);
    f.gram = 0.5 * (f.gram + f.gram.transpose()).eval();
}

}  // namespace detail

/// CG to convergence (cfg), then d more iterations whose directions and weights form
/// the rank-d posterior. The returned mean is bitwise the cg_solve iterate. d is clamped
/// to the number of iterations left before the grade.
inline KrylovResult bayescg_krylov_solve(const SpdOperator& a, const Vector& b, const Vector& x0, Index d,
                                         const CgConfig& cfg = {}) {
    cfg.validate();
    require(d >= 1, "bayescg_krylov_solve: delay must be at least 1");
    const Index n = a.dim();
    CgIteration it(a, b, x0, cfg.reorthogonalize);
    KrylovResult result;
    SolveTrace& trace = result.trace;
    trace.initial_residual_norm = it.residual_norm();
    if (cfg.store_iterates) trace.iterates.push_back(it.x());
    if (cfg.store_residuals) trace.residuals.push_back(it.r());
    const double target = cfg.rel_residual_tol * trace.initial_residual_norm;
    const Index max_iters = cfg.resolved_max_iters(n);

    while (true) {
        if (it.residual_norm() <= target) {
            trace.termination = Termination::Converged;
            break;
        }
        if (it.iteration() >= max_iters) {
            trace.termination = Termination::MaxIterations;
            break;
        }
        const auto& s = it.step();
        trace.records.push_back(make_record(s, it.residual_norm()));
        if (cfg.store_directions) trace.directions.push_back(s.v);
        if (cfg.store_iterates) trace.iterates.push_back(it.x());
        if (cfg.store_residuals) trace.residuals.push_back(it.r());
    }
    result.x = it.x();

    KrylovFactors& f = result.factors;
    f.m = it.iteration();
    f.v.resize(n, 0);
    const double grade_target = kGradeTol * trace.initial_residual_norm;
    for (Index j = 0; j < d; ++j) {
        if (it.at_grade() || it.residual_norm() <= grade_target || it.iteration() >= n) {
            f.grade_reached = true;
            break;
        }
        detail::append_direction(f, it.step(), n);
    }
    if (d == kFullRank) f.grade_reached = true;
    detail::finish_gram(f, a);
    return result;
}

/// Runs reorthogonalized CG from x0 until the grade and returns all K directions.
inline KrylovFactors full_krylov_factors(const SpdOperator& a, const Vector& b, const Vector& x0) {
    const Index n = a.dim();
    CgIteration it(a, b, x0, true);
    KrylovFactors f;
    f.v.resize(n, 0);
    const double grade_target = kGradeTol * it.residual_norm();
    while (!it.at_grade() && it.residual_norm() > grade_target && it.iteration() < n)
        detail::append_direction(f, it.step(), n);
    f.grade_reached = true;
    detail::finish_gram(f, a);
    return f;
}

/// Dense Gamma0 = V Phi V^T. Test scale.
inline Gaussian build_full_krylov_prior(const SpdOperator& a, const Vector& b, const Vector& x0) {
    require_dense_scale(a.dim(), "build_full_krylov_prior");
    const KrylovFactors f = full_krylov_factors(a, b, x0);
    Matrix cov = f.v * f.phi.asDiagonal() * f.v.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return Gaussian::dense(x0, std::move(cov));
}

/// (v_i^T r0)^2 for every stored direction. Matches phi_i only when the directions are
/// globally A-orthogonal, i.e. for reorthogonalized runs started at m = 0.
inline Vector phi_alternative(const KrylovFactors& f, const Vector& r0) {
    require_dims(r0.size() == f.dim(), "phi_alternative: dimension mismatch");
    return (f.v.transpose() * r0).array().square().matrix();
}

struct ApproxPriorReport {
    double max_direction_deviation = 0.0;  // max_i |s_i - v_i| / |v_i|
    double max_iterate_deviation = 0.0;    // max_i |x_i - z_i| / |z_i|
    double covariance_deviation = 0.0;     // |Sigma_m - V Phi V^T|_F / |Gamma0|_F
};

/// Runs BayesCG under Gamma0 = V_{1:m+d} Phi V_{1:m+d}^T (directions from reorthogonalized
/// CG) for m iterations and compares with the CG directions v_i and iterates z_i.
inline ApproxPriorReport approx_prior_equivalence_check(const SpdOperator& a, const Vector& b, const Vector& x0,
                                                        Index m, Index d) {
    require(m >= 1 && d >= 0, "approx_prior_equivalence_check: need m >= 1 and d >= 0");
    require_dense_scale(a.dim(), "approx_prior_equivalence_check");
    CgConfig cg_cfg;
    cg_cfg.reorthogonalize = true;
    cg_cfg.rel_residual_tol = std::numeric_limits<double>::min();
    cg_cfg.max_iters = m;
    cg_cfg.store_directions = true;
    cg_cfg.store_iterates = true;
    const KrylovResult cg = bayescg_krylov_solve(a, b, x0, std::max<Index>(d, 1), cg_cfg);
    require(cg.factors.m == m, "approx_prior_equivalence_check: CG stopped before m iterations");

    // Directions 1..m are in the trace (unnormalized); m+1..m+d in the factors.
    const Index total = m + (d == 0 ? 0 : cg.factors.rank());
    Matrix v_all(a.dim(), total);
    Vector phi_all(total);
    for (Index i = 0; i < m; ++i) {
        const auto& rec = cg.trace.records[static_cast<std::size_t>(i)];
        v_all.col(i) = cg.trace.directions[static_cast<std::size_t>(i)] / std::sqrt(rec.eta);
        phi_all[i] = rec.phi;
    }
    for (Index i = m; i < total; ++i) {
        v_all.col(i) = cg.factors.v.col(i - m);
        phi_all[i] = cg.factors.phi[i - m];
    }
    const Matrix f = v_all * phi_all.cwiseSqrt().asDiagonal();

    BayesCgConfig bcfg;
    bcfg.reorthogonalize = true;
    bcfg.rel_residual_tol = std::numeric_limits<double>::min();
    bcfg.max_iters = m;
    bcfg.store_directions = true;
    bcfg.store_iterates = true;
    const BayesCgResult bayes = bayescg_solve(a, b, Gaussian::factored(x0, f), bcfg);

    ApproxPriorReport report;
    for (Index i = 0; i < m; ++i) {
        const auto k = static_cast<std::size_t>(i);
        const Vector& vi = cg.trace.directions[k];
        report.max_direction_deviation =
            std::max(report.max_direction_deviation, (bayes.trace.directions[k] - vi).norm() / vi.norm());
        const Vector& zi = cg.trace.iterates[k + 1];
        report.max_iterate_deviation =
            std::max(report.max_iterate_deviation, (bayes.trace.iterates[k + 1] - zi).norm() / zi.norm());
    }
    const Matrix tail = v_all.rightCols(total - m) * phi_all.tail(total - m).asDiagonal() *
                        v_all.rightCols(total - m).transpose();
    const double scale = (f * f.transpose()).norm();
    report.covariance_deviation = (bayes.posterior.covariance() - tail).norm() / scale;
    return report;
}

/// Posterior data for iteration m of a single long CG run.
struct DelayWindow {
    Index m = 0;
    /// |x* - x_m|_A^2, NaN when no solution was supplied.
    double err_sq = 0.0;
    /// |r_m|_2
    double residual_norm = 0.0;
    KrylovFactors factors;
};

/// Runs one CG iteration sequence from x0 and reports, for m = 0 .. max_m, the rank-d
/// factors built from directions m+1 .. m+d. Each report equals what
/// bayescg_krylov_solve returns when stopped at iteration m. Once the Krylov space is
/// exhausted at iteration K, the windows of m > K - d are clamped to K - m columns and
/// m = K is not reported. Only the last d directions (with their A-images) are kept, so
/// memory stays O(n d). With d = kFullRank all directions up to the grade are kept.
inline void for_each_delay_window(const SpdOperator& a, const Vector& b, const Vector& x0, const Vector* x_star,
                                  Index max_m, Index d, bool reorthogonalize,
                                  const std::function<void(const DelayWindow&)>& fn) {
    const Index n = a.dim();
    require(d >= 1 && max_m >= 0, "for_each_delay_window: need d >= 1 and max_m >= 0");
    require_dims(!x_star || x_star->size() == n, "for_each_delay_window: dimension mismatch");
    CgIteration it(a, b, x0, reorthogonalize);
    const double grade_target = kGradeTol * it.residual_norm();
    std::vector<double> errs, res;
    auto record_state = [&] {
        errs.push_back(x_star ? a_norm_sq(a, *x_star - it.x()) : std::numeric_limits<double>::quiet_NaN());
        res.push_back(it.residual_norm());
    };
    record_state();

    struct Dir {
        Vector v, av;
        double phi;
    };
    std::deque<Dir> window;
    auto emit = [&](Index m, std::size_t count) {
        DelayWindow w;
        w.m = m;
        w.err_sq = errs[static_cast<std::size_t>(m)];
        w.residual_norm = res[static_cast<std::size_t>(m)];
        KrylovFactors& f = w.factors;
        f.m = m;
        const auto k = static_cast<Index>(count);
        f.v.resize(n, k);
        Matrix av(n, k);
        f.phi.resize(k);
        for (Index j = 0; j < k; ++j) {
            const Dir& dj = window[static_cast<std::size_t>(j)];
            f.v.col(j) = dj.v;
            av.col(j) = dj.av;
            f.phi[j] = dj.phi;
        }
        f.gram = f.v.transpose() * av;
        f.gram = 0.5 * (f.gram + f.gram.transpose()).eval();
        f.grade_reached = k < d;
        fn(w);
    };

    const bool full = d == kFullRank;
    Index next_m = 0;
    while (next_m <= max_m) {
        const bool exhausted = it.at_grade() || it.residual_norm() <= grade_target ||
                               (reorthogonalize && it.iteration() >= n);
        if (exhausted) {
            // Clamped windows up to the grade K = it.iteration().
            while (next_m <= max_m && next_m < it.iteration()) {
                emit(next_m, window.size());
                window.pop_front();
                ++next_m;
            }
            break;
        }
        const auto& s = it.step();
        const double scale = std::sqrt(s.eta);
        window.push_back({s.v / scale, s.av / scale, s.gamma * s.rr_prev});
        record_state();
        if (!full && static_cast<Index>(window.size()) == d) {
            emit(next_m, window.size());
            window.pop_front();
            ++next_m;
        }
    }
}

/// CSV layout: a header line "n,d,m", one line with those values, then d lines of phi,
/// then n*d lines with V in column-major order.
inline void write_factors_csv(std::ostream& out, const KrylovFactors& f) {
    out << "n,d,m\n" << f.dim() << ',' << f.rank() << ',' << f.m << '\n';
    for (Index i = 0; i < f.rank(); ++i) out << format_double(f.phi[i]) << '\n';
    for (Index j = 0; j < f.v.cols(); ++j)
        for (Index i = 0; i < f.v.rows(); ++i) out << format_double(f.v(i, j)) << '\n';
}

namespace detail {

inline double read_csv_double(std::istream& in, std::size_t& line_no) {
    std::string line;
    if (!std::getline(in, line)) throw ParseError("unexpected end of factor file", line_no + 1);
    ++line_no;
    std::istringstream ss(line);
    double x = 0.0;
    if (!(ss >> x)) throw ParseError("malformed number in factor file", line_no);
    return x;
}

}  // namespace detail

inline KrylovFactors read_factors_csv(std::istream& in, const SpdOperator* a = nullptr) {
    std::string line;
    std::size_t line_no = 0;
    if (!std::getline(in, line) || line != "n,d,m") throw ParseError("factor file must start with n,d,m", 1);
    ++line_no;
    if (!std::getline(in, line)) throw ParseError("missing size line", 2);
    ++line_no;
    long long n = -1, d = -1, m = -1;
    char c1 = 0, c2 = 0;
    std::istringstream ss(line);
    if (!(ss >> n >> c1 >> d >> c2 >> m) || c1 != ',' || c2 != ',' || n < 0 || d < 0 || m < 0)
        throw ParseError("malformed size line", line_no);
    KrylovFactors f;
    f.m = static_cast<Index>(m);
    f.phi.resize(static_cast<Index>(d));
    f.v.resize(static_cast<Index>(n), static_cast<Index>(d));
    for (Index i = 0; i < d; ++i) f.phi[i] = detail::read_csv_double(in, line_no);
    for (Index j = 0; j < d; ++j)
        for (Index i = 0; i < n; ++i) f.v(i, j) = detail::read_csv_double(in, line_no);
    if (a) detail::finish_gram(f, *a);
    return f;
}

/// Binary layout: 8-byte magic "BCGKF001", int64 n, d, m, then phi and column-major V
/// as little-endian IEEE doubles.
inline void write_factors_binary(std::ostream& out, const KrylovFactors& f) {
    out.write("BCGKF001", 8);
    const std::int64_t header[3] = {f.dim(), f.rank(), f.m};
    out.write(reinterpret_cast<const char*>(header), sizeof header);
    out.write(reinterpret_cast<const char*>(f.phi.data()), static_cast<std::streamsize>(sizeof(double) * f.phi.size()));
    out.write(reinterpret_cast<const char*>(f.v.data()), static_cast<std::streamsize>(sizeof(double) * f.v.size()));
}

inline KrylovFactors read_factors_binary(std::istream& in, const SpdOperator* a = nullptr) {
    char magic[8];
    if (!in.read(magic, 8) || std::memcmp(magic, "BCGKF001", 8) != 0) throw ParseError("bad factor file magic", 0);
    std::int64_t header[3];
    if (!in.read(reinterpret_cast<char*>(header), sizeof header) || header[0] < 0 || header[1] < 0 || header[2] < 0)
        throw ParseError("bad factor file header", 0);
    KrylovFactors f;
    f.m = static_cast<Index>(header[2]);
    f.phi.resize(static_cast<Index>(header[1]));
    f.v.resize(static_cast<Index>(header[0]), static_cast<Index>(header[1]));
    if (!in.read(reinterpret_cast<char*>(f.phi.data()), static_cast<std::streamsize>(sizeof(double) * f.phi.size())) ||
        !in.read(reinterpret_cast<char*>(f.v.data()), static_cast<std::streamsize>(sizeof(double) * f.v.size())))
        throw ParseError("truncated factor file", 0);
    if (a) detail::finish_gram(f, *a);
    return f;
}

}  // namespace bayescg
