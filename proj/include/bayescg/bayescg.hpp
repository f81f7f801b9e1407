#pragma once

// BayesCG under symmetric positive semi-definite priors N(x0, Sigma0).
//
// Search directions s_j are A Sigma0 A-orthogonal and generated by the CG-like
// recurrence s_{j+1} = r_j + (r_j^T r_j / r_{j-1}^T r_{j-1}) s_j. The posterior is
// x_j = x_{j-1} + Sigma0 A s_j (s_j^T r_{j-1}) / eta_j,
// Sigma_j = Sigma_{j-1} - (Sigma0 A s_j)(Sigma0 A s_j)^T / eta_j,
// with eta_j = s_j^T A Sigma0 A s_j. Because s_j^T r_{j-1} = r_{j-1}^T r_{j-1}, the step
// size is alpha_j = r_{j-1}^T r_{j-1} / eta_j.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Cholesky>

#include "bayescg/cg.hpp"
#include "bayescg/errors.hpp"
#include "bayescg/gaussian.hpp"
#include "bayescg/linalg.hpp"

namespace bayescg {

enum class PriorKind { Inverse, Natural, Identity, Preconditioner, RankOne, ExplicitDense, ExplicitFactored };

struct PriorSpec {
    PriorKind kind = PriorKind::Inverse;
    /// Preconditioner prior: Sigma0 = (M^T M)^{-1}.
    std::optional<Matrix> preconditioner;
    /// Rank-one prior: Sigma0 = (x* - x0)(x* - x0)^T. Needs the solution, so it is
    /// refused unless allow_test_only is set.
    std::optional<Vector> solution;
    bool allow_test_only = false;
    std::optional<Matrix> covariance;
    std::optional<Matrix> factor;
};

/// Builds N(x0, Sigma0) for the requested prior. The inverse, natural, identity and
/// preconditioner priors are dense and limited to n <= kDenseLimit.
inline Gaussian make_prior(const PriorSpec& spec, const SpdOperator& a, const Vector& x0) {
    const Index n = a.dim();
    require_dims(x0.size() == n, "make_prior: dimension mismatch");
    switch (spec.kind) {
        case PriorKind::Inverse:
        case PriorKind::Natural: {
            const auto eig = symmetric_eigen(a.to_dense(), "make_prior");
            if (eig.eigenvalues().minCoeff() <= 0.0) throw ConfigError("make_prior: A is not positive definite");
            const double power = spec.kind == PriorKind::Inverse ? -1.0 : -2.0;
            const Vector scaled = eig.eigenvalues().array().pow(power).matrix();
            Matrix cov = eig.eigenvectors() * scaled.asDiagonal() * eig.eigenvectors().transpose();
            cov = 0.5 * (cov + cov.transpose()).eval();
            return Gaussian::dense(x0, std::move(cov));
        }
        case PriorKind::Identity:
            require_dense_scale(n, "make_prior");
            return Gaussian::dense(x0, Matrix::Identity(n, n));
        case PriorKind::Preconditioner: {
            if (!spec.preconditioner) throw ConfigError("make_prior: preconditioner prior needs M");
            const Matrix& m = *spec.preconditioner;
            require_dims(m.rows() == n && m.cols() == n, "make_prior: preconditioner shape mismatch");
            require_dense_scale(n, "make_prior");
            const Matrix mtm = m.transpose() * m;
            Eigen::LLT<Matrix> llt(mtm);
            if (llt.info() != Eigen::Success) throw ConfigError("make_prior: M^T M is not positive definite");
            Matrix cov = llt.solve(Matrix::Identity(n, n));
            cov = 0.5 * (cov + cov.transpose()).eval();
            return Gaussian::dense(x0, std::move(cov));
        }
        case PriorKind::RankOne: {
            if (!spec.allow_test_only) throw ConfigError("make_prior: the rank-one prior requires x* and is test-only");
            if (!spec.solution) throw ConfigError("make_prior: rank-one prior needs the solution");
            require_dims(spec.solution->size() == n, "make_prior: solution length mismatch");
            Matrix f = *spec.solution - x0;
            return Gaussian::factored(x0, std::move(f));
        }
        case PriorKind::ExplicitDense:
            if (!spec.covariance) throw ConfigError("make_prior: explicit dense prior needs a covariance");
            return Gaussian::dense(x0, *spec.covariance);
        case PriorKind::ExplicitFactored:
            if (!spec.factor) throw ConfigError("make_prior: explicit factored prior needs a factor");
            return Gaussian::factored(x0, *spec.factor);
    }
    throw ConfigError("make_prior: unknown prior kind");
}

enum class CovarianceMode {
    /// Running dense Sigma_m (n <= kDenseLimit).
    Dense,
    /// Only the list of rank-one downdates is kept.
    Downdates
};

/// Snapshot handed to the per-iteration observer.
struct BayesCgState {
    Index m = 0;
    const Vector* mean = nullptr;
    /// Null in Downdates mode.
    const Matrix* covariance = nullptr;
    double trace_a_sigma = 0.0;
};

struct BayesCgConfig {
    Index max_iters = 0;  // 0 selects 10 n
    double rel_residual_tol = 1e-8;
    bool reorthogonalize = false;
    CovarianceMode covariance = CovarianceMode::Dense;
    bool store_directions = false;
    bool store_iterates = false;
    bool store_residuals = false;
    /// Called for m = 0 (the prior) and after every iteration.
    std::function<void(const BayesCgState&)> observer;
};

/// Sigma_m = Sigma_0 - sum_j u_j u_j^T / eta_j with u_j = Sigma0 A s_j.
struct Downdate {
    Vector u;
    double eta = 0.0;
};

struct BayesCgPosterior {
    Gaussian prior;
    Vector mean;
    std::optional<Matrix> dense_covariance;
    std::vector<Downdate> downdates;
    /// trace(A Sigma_m), updated by the downdates.
    double trace_a_sigma = 0.0;

    Vector apply_covariance(const Vector& x) const {
        if (dense_covariance) return *dense_covariance * x;
        Vector y = prior.apply_covariance(x);
        for (const auto& d : downdates) y -= d.u * (d.u.dot(x) / d.eta);
        return y;
    }

    /// Materialized Sigma_m. Test scale only.
    Matrix covariance() const {
        if (dense_covariance) return *dense_covariance;
        Matrix cov = prior.covariance();
        for (const auto& d : downdates) cov -= (d.u * d.u.transpose()) / d.eta;
        return cov;
    }

    Gaussian distribution() const { return Gaussian::dense(mean, covariance()); }
};

/// In the trace, IterationRecord fields hold the BayesCG analogues: gamma is the step
/// size alpha_m, eta is s_m^T A Sigma0 A s_m, delta is beta_m, and directions are s_m.
struct BayesCgResult {
    BayesCgPosterior posterior;
    SolveTrace trace;
};

/// BayesCG. The caller guarantees x* - x0 in range(Sigma0); a violation typically
/// surfaces as a BreakdownError when eta_m vanishes.
inline BayesCgResult bayescg_solve(const SpdOperator& a, const Vector& b, const Gaussian& prior,
                                   const BayesCgConfig& cfg = {}) {
    const Index n = a.dim();
    require_dims(b.size() == n && prior.dim() == n, "bayescg_solve: dimension mismatch");
    require(cfg.rel_residual_tol > 0.0, "bayescg_solve: rel_residual_tol must be positive");
    const bool dense = cfg.covariance == CovarianceMode::Dense;
    if (dense) require_dense_scale(n, "bayescg_solve (dense covariance)");

    BayesCgResult result;
    BayesCgPosterior& post = result.posterior;
    SolveTrace& trace = result.trace;
    post.prior = prior;
    post.mean = prior.mean();
    if (dense) post.dense_covariance = prior.covariance();
    post.trace_a_sigma = trace_quadratic(a, prior);

    Vector r = b - a.apply(post.mean);
    double rr = r.squaredNorm();
    Vector s = r;
    Matrix basis;
    Index basis_cols = 0;
    auto append_basis = [&](const Vector& q) {
        if (basis_cols == basis.cols()) {
            const Index grown = std::min<Index>(n, std::max<Index>(16, 2 * basis.cols()));
            if (grown == basis.cols()) return;
            basis.conservativeResize(n, grown);
        }
        basis.col(basis_cols++) = q;
    };
    if (cfg.reorthogonalize && rr > 0.0) append_basis(r / std::sqrt(rr));

    trace.initial_residual_norm = std::sqrt(rr);
    if (cfg.store_iterates) trace.iterates.push_back(post.mean);
    if (cfg.store_residuals) trace.residuals.push_back(r);
    auto notify = [&](Index m) {
        if (cfg.observer)
            cfg.observer({m, &post.mean, dense ? &*post.dense_covariance : nullptr, post.trace_a_sigma});
    };
    notify(0);

    const double target = cfg.rel_residual_tol * trace.initial_residual_norm;
    const Index max_iters = cfg.max_iters > 0 ? cfg.max_iters : 10 * n;
    Index m = 0;
    while (true) {
        if (std::sqrt(rr) <= target) {
            trace.termination = Termination::Converged;
            break;
        }
        if (m >= max_iters) {
            trace.termination = Termination::MaxIterations;
            break;
        }
        ++m;
        const Vector as = a.apply(s);
        Vector u = prior.apply_covariance(as);  // Sigma0 A s_m
        const double eta = as.dot(u);
        if (!std::isfinite(eta) || eta <= kBreakdownTol)
            throw BreakdownError("BayesCG: s^T A Sigma0 A s is not positive", m);
        const double alpha = rr / eta;
        const Vector au = a.apply(u);

        post.mean += alpha * u;
        r -= alpha * au;
        if (cfg.reorthogonalize) r = cgs2_orthonormalize(basis.leftCols(basis_cols), r);
        if (dense) *post.dense_covariance -= (u * u.transpose()) / eta;
        post.trace_a_sigma -= u.dot(au) / eta;

        const double rr_new = r.squaredNorm();
        const double beta = rr_new / rr;
        if (cfg.reorthogonalize && rr_new > 0.0) append_basis(r / std::sqrt(rr_new));

        trace.records.push_back({m, std::sqrt(rr_new), alpha, beta, eta, alpha * rr});
        if (cfg.store_directions) trace.directions.push_back(s);
        if (cfg.store_iterates) trace.iterates.push_back(post.mean);
        if (cfg.store_residuals) trace.residuals.push_back(r);
        if (!dense) post.downdates.push_back({std::move(u), eta});

        s = r + beta * s;
        rr = rr_new;
        notify(m);
    }
    return result;
}

/// Search directions of a trace as matrix columns.
inline Matrix directions_matrix(const SolveTrace& trace, Index count) {
    require(count <= static_cast<Index>(trace.directions.size()), "directions_matrix: not enough stored directions");
    const Index n = count > 0 ? trace.directions.front().size() : 0;
    Matrix s(n, count);
    for (Index j = 0; j < count; ++j) s.col(j) = trace.directions[static_cast<std::size_t>(j)];
    return s;
}

/// P_m = Sigma0 A S (S^T A Sigma0 A S)^{-1} S^T A Sigma0 Sigma0^+. Dense, test scale.
inline Matrix posterior_projector(const Matrix& sigma0, const SpdOperator& a, const Matrix& s) {
    const Index n = sigma0.rows();
    require_dims(sigma0.cols() == n && a.dim() == n && (s.cols() == 0 || s.rows() == n),
                 "posterior_projector: dimension mismatch");
    if (s.cols() == 0) return Matrix::Zero(n, n);
    const Matrix as = a.apply(s);
    const Matrix k = sigma0 * as;  // Sigma0 A S
    Matrix lambda = as.transpose() * k;
    lambda = 0.5 * (lambda + lambda.transpose()).eval();
    const auto eig = symmetric_eigen(lambda, "posterior_projector");
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (top == 0.0 || eig.eigenvalues().cwiseAbs().minCoeff() <= 1e-14 * top)
        throw BreakdownError("posterior_projector: S^T A Sigma0 A S is singular", s.cols());
    const Matrix lambda_inv_kt =
        eig.eigenvectors() * eig.eigenvalues().cwiseInverse().asDiagonal() * eig.eigenvectors().transpose() *
        k.transpose();
    return k * lambda_inv_kt * pseudo_inverse(sigma0);
}

struct OptimalityReport {
    double solver_value = 0.0;
    double oracle_value = 0.0;
};

/// Compares (x* - x_m)^T Sigma0^+ (x* - x_m) with the minimum of the same objective over
/// x0 + range(Sigma0 A S), obtained from the normal equations of the constrained least
/// squares problem. x* is computed by a dense solve with A.
inline OptimalityReport optimality_check(const Matrix& sigma0, const SpdOperator& a, const Vector& b,
                                         const Vector& x0, const Vector& x_m, const Matrix& s) {
    const Index n = sigma0.rows();
    require_dims(a.dim() == n && b.size() == n && x0.size() == n && x_m.size() == n,
                 "optimality_check: dimension mismatch");
    const Matrix a_dense = a.to_dense();
    const Vector x_star = a_dense.ldlt().solve(b);
    const Matrix sigma_pinv = pseudo_inverse(sigma0);
    auto objective = [&](const Vector& x) { return (x_star - x).dot(sigma_pinv * (x_star - x)); };

    OptimalityReport report;
    report.solver_value = objective(x_m);
    const Vector e0 = x_star - x0;
    if (s.cols() == 0) {
        report.oracle_value = objective(x0);
        return report;
    }
    const Matrix k = sigma0 * (a_dense * s);
    if (numerical_rank(k) < k.cols()) throw ConfigError("optimality_check: Krylov basis is rank deficient");
    const Matrix gram = k.transpose() * sigma_pinv * k;
    const Vector rhs = k.transpose() * (sigma_pinv * e0);
    const Vector coeffs = gram.completeOrthogonalDecomposition().solve(rhs);
    report.oracle_value = objective(x0 + k * coeffs);
    return report;
}

}  // namespace bayescg
