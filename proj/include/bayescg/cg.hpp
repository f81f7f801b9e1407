#pragma once

// Hestenes-Stiefel conjugate gradients with optional reorthogonalization of the
// residuals (classical Gram-Schmidt applied twice against all previous residuals).

#include <cmath>
#include <optional>
#include <ostream>
#include <vector>

#include "bayescg/errors.hpp"
#include "bayescg/io.hpp"
#include "bayescg/linalg.hpp"

namespace bayescg {

/// Curvature terms at or below this value abort the iteration.
inline constexpr double kBreakdownTol = 1e-30;

struct CgConfig {
    /// 0 selects 10 n.
    Index max_iters = 0;
    double rel_residual_tol = 1e-8;
    bool reorthogonalize = false;
    bool store_directions = false;
    bool store_iterates = false;
    bool store_residuals = false;

    Index resolved_max_iters(Index n) const { return max_iters > 0 ? max_iters : 10 * std::max<Index>(n, 1); }

    void validate() const {
        require(max_iters >= 0, "CgConfig: max_iters must be non-negative");
        require(rel_residual_tol > 0.0, "CgConfig: rel_residual_tol must be positive");
    }
};

enum class Termination { Converged, MaxIterations, GradeReached };

inline const char* to_string(Termination t) {
    switch (t) {
        case Termination::Converged:
            return "converged";
        case Termination::MaxIterations:
            return "max-iterations";
        case Termination::GradeReached:
            return "grade-reached";
    }
    return "unknown";
}

/// Quantities of iteration m (1-based).
struct IterationRecord {
    Index m = 0;
    double residual_norm = 0.0;  // |r_m|_2
    double gamma = 0.0;          // step size
    double delta = 0.0;          // r_m^T r_m / r_{m-1}^T r_{m-1}
    double eta = 0.0;            // v_m^T A v_m
    double phi = 0.0;            // gamma_m |r_{m-1}|_2^2
};

struct SolveTrace {
    double initial_residual_norm = 0.0;
    std::vector<IterationRecord> records;
    std::vector<Vector> directions;  // v_1 .. v_m
    std::vector<Vector> iterates;    // x_0 .. x_m
    std::vector<Vector> residuals;   // r_0 .. r_m
    Termination termination = Termination::Converged;

    Index iterations() const { return static_cast<Index>(records.size()); }
};

/// CG state advanced one iteration at a time. Every solver in the library that
/// produces CG iterates goes through this class, so their iterates agree bitwise.
class CgIteration {
public:
    /// Data of the most recent iteration m.
    struct Step {
        Index m = 0;
        Vector v;   // v_m
        Vector av;  // A v_m
        double eta = 0.0;
        double gamma = 0.0;
        double rr_prev = 0.0;  // r_{m-1}^T r_{m-1}
        double delta = 0.0;
    };

    CgIteration(const SpdOperator& a, const Vector& b, const Vector& x0, bool reorthogonalize)
        : a_(&a), x_(x0), reorthogonalize_(reorthogonalize) {
        require_dims(b.size() == a.dim() && x0.size() == a.dim(), "CG: dimension mismatch");
        r_ = b - a.apply(x0);
        rr_ = r_.squaredNorm();
        v_ = r_;
        if (reorthogonalize_ && rr_ > 0.0) append_basis(r_ / std::sqrt(rr_));
    }

    Index iteration() const { return m_; }
    const Vector& x() const { return x_; }
    const Vector& r() const { return r_; }
    /// Next search direction v_{m+1}.
    const Vector& direction() const { return v_; }
    double residual_norm() const { return std::sqrt(rr_); }
    bool at_grade() const { return rr_ == 0.0; }
    const Step& last_step() const { return step_; }

    /// Performs iteration m+1.
    const Step& step() {
        if (at_grade()) throw BreakdownError("CG: residual is zero, the Krylov space is exhausted", m_ + 1);
        const Index m = m_ + 1;
        step_.m = m;
        step_.v = v_;
        step_.av = a_->apply(v_);
        step_.eta = v_.dot(step_.av);
        if (!std::isfinite(step_.eta) || step_.eta <= kBreakdownTol)
            throw BreakdownError("CG: curvature v^T A v is not positive", m);
        step_.rr_prev = rr_;
        step_.gamma = rr_ / step_.eta;
        if (!std::isfinite(step_.gamma)) throw BreakdownError("CG: step size is not finite", m);

        x_ += step_.gamma * v_;
        r_ -= step_.gamma * step_.av;
        if (reorthogonalize_) r_ = cgs2_orthonormalize(basis_.leftCols(basis_cols_), r_);
        const double rr_new = r_.squaredNorm();
        step_.delta = rr_new / rr_;
        if (reorthogonalize_ && rr_new > 0.0) append_basis(r_ / std::sqrt(rr_new));
        v_ = r_ + step_.delta * v_;
        rr_ = rr_new;
        m_ = m;
        return step_;
    }

private:
    void append_basis(const Vector& q) {
        const Index n = q.size();
        if (basis_cols_ == basis_.cols()) {
            const Index grown = std::min<Index>(n, std::max<Index>(16, 2 * basis_.cols()));
            if (grown == basis_.cols()) return;  // the basis already spans R^n
            basis_.conservativeResize(n, grown);
        }
        basis_.col(basis_cols_++) = q;
    }

    const SpdOperator* a_;
    Vector x_, r_, v_;
    double rr_ = 0.0;
    Index m_ = 0;
    bool reorthogonalize_;
    Matrix basis_;
    Index basis_cols_ = 0;
    Step step_;
};

struct CgResult {
    Vector x;
    SolveTrace trace;
};

inline IterationRecord make_record(const CgIteration::Step& s, double residual_norm) {
    return {s.m, residual_norm, s.gamma, s.delta, s.eta, s.gamma * s.rr_prev};
}

/// Runs CG until |b - A x_m| <= tol |b - A x_0| or max_iters. Throws BreakdownError when
/// a curvature term is not positive.
inline CgResult cg_solve(const SpdOperator& a, const Vector& b, const Vector& x0, const CgConfig& cfg = {}) {
    cfg.validate();
    CgIteration it(a, b, x0, cfg.reorthogonalize);
    CgResult result;
    SolveTrace& trace = result.trace;
    trace.initial_residual_norm = it.residual_norm();
    if (cfg.store_iterates) trace.iterates.push_back(it.x());
    if (cfg.store_residuals) trace.residuals.push_back(it.r());
    const double target = cfg.rel_residual_tol * trace.initial_residual_norm;
    const Index max_iters = cfg.resolved_max_iters(a.dim());

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
    return result;
}

/// Both sides of |x*-x_m|_A^2 - |x*-x_{m+d}|_A^2 = sum_{i=m+1}^{m+d} gamma_i |r_{i-1}|^2.
struct HsIdentity {
    double lhs = 0.0;
    double rhs = 0.0;
};

/// Needs a trace with stored iterates.
inline HsIdentity hs_error_identity_check(const SolveTrace& trace, const SpdOperator& a, const Vector& x_star,
                                          Index m, Index d) {
    require(m >= 0 && d >= 0, "hs_error_identity_check: indices must be non-negative");
    if (m + d > trace.iterations()) throw ConfigError("hs_error_identity_check: index beyond recorded iterations");
    if (static_cast<Index>(trace.iterates.size()) != trace.iterations() + 1)
        throw ConfigError("hs_error_identity_check: trace has no stored iterates");
    HsIdentity out;
    out.lhs = a_norm_sq(a, x_star - trace.iterates[static_cast<std::size_t>(m)]) -
              a_norm_sq(a, x_star - trace.iterates[static_cast<std::size_t>(m + d)]);
    for (Index i = m + 1; i <= m + d; ++i) out.rhs += trace.records[static_cast<std::size_t>(i - 1)].phi;
    return out;
}

/// CSV columns: iter, res_norm, gamma, delta, anorm_err_sq. The last column is written
/// when `truth` is given and the trace stores iterates.
inline void write_trace_csv(std::ostream& out, const SolveTrace& trace,
                            std::optional<std::pair<const SpdOperator*, const Vector*>> truth = std::nullopt) {
    const bool with_err = truth && static_cast<Index>(trace.iterates.size()) == trace.iterations() + 1;
    out << "iter,res_norm,gamma,delta" << (with_err ? ",anorm_err_sq" : "") << '\n';
    for (const auto& rec : trace.records) {
        out << rec.m << ',' << format_double(rec.residual_norm) << ',' << format_double(rec.gamma) << ','
            << format_double(rec.delta);
        if (with_err)
            out << ','
                << format_double(a_norm_sq(*truth->first,
                                           *truth->second - trace.iterates[static_cast<std::size_t>(rec.m)]));
        out << '\n';
    }
}

}  // namespace bayescg
