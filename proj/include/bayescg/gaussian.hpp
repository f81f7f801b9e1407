#pragma once

// Gaussian distributions N(mean, Sigma) with the covariance held either densely or as a
// factor F with Sigma = F F^T. Dense covariances are a test-scale representation.

#include <cmath>
#include <utility>
#include <variant>

#include "bayescg/errors.hpp"
#include "bayescg/linalg.hpp"
#include "bayescg/random.hpp"

namespace bayescg {

/// Outcome of the positive semi-definiteness check of a dense covariance.
struct PsdReport {
    double min_eigenvalue = 0.0;
    double max_eigenvalue = 0.0;
    bool psd = true;
};

class Gaussian {
public:
    Gaussian() = default;

    /// Dense covariance; must be symmetric to 1e-12 relative. Indefinite covariances are
    /// accepted (they arise from BayesCG without reorthogonalization) and reported by
    /// check_psd().
    static Gaussian dense(Vector mean, Matrix cov) {
        require_dims(cov.rows() == cov.cols() && cov.rows() == mean.size(), "Gaussian: covariance shape mismatch");
        require_dense_scale(mean.size(), "Gaussian::dense");
        if (cov.size() > 0 && symmetry_defect(cov) > 1e-12) throw ConfigError("Gaussian: covariance is not symmetric");
        Gaussian g;
        g.mean_ = std::move(mean);
        g.cov_ = std::move(cov);
        return g;
    }

    /// Sigma = F F^T, PSD by construction. F may have zero columns.
    static Gaussian factored(Vector mean, Matrix factor) {
        require_dims(factor.cols() == 0 || factor.rows() == mean.size(), "Gaussian: factor shape mismatch");
        if (factor.cols() == 0) factor.resize(mean.size(), 0);
        Gaussian g;
        g.mean_ = std::move(mean);
        g.cov_ = Factor{std::move(factor)};
        return g;
    }

    Index dim() const { return mean_.size(); }
    const Vector& mean() const { return mean_; }
    bool is_factored() const { return std::holds_alternative<Factor>(cov_); }

    const Matrix& factor() const {
        if (!is_factored()) throw ConfigError("Gaussian: covariance is not factored");
        return std::get<Factor>(cov_).f;
    }

    const Matrix& dense_covariance() const {
        if (is_factored()) throw ConfigError("Gaussian: covariance is not dense");
        return std::get<Matrix>(cov_);
    }

    /// Materialized covariance. Test scale only for factored storage.
    Matrix covariance() const {
        if (!is_factored()) return std::get<Matrix>(cov_);
        require_dense_scale(dim(), "Gaussian::covariance");
        const Matrix& f = factor();
        return f * f.transpose();
    }

    /// Sigma x without materializing a factored covariance.
    Vector apply_covariance(const Vector& x) const {
        require_dims(x.size() == dim(), "Gaussian::apply_covariance: dimension mismatch");
        if (is_factored()) {
            const Matrix& f = factor();
            return f * (f.transpose() * x);
        }
        return std::get<Matrix>(cov_) * x;
    }

    /// F with F F^T = Sigma for factored storage, or F F^T = |Sigma| (matrix absolute
    /// value, eigenvalues below 1e-14 lambda_max dropped) for dense storage.
    Matrix sampling_factor() const {
        if (is_factored()) return factor();
        return sqrt_abs_factor(std::get<Matrix>(cov_));
    }

    PsdReport check_psd(double rel_tol = 1e-10) const {
        PsdReport report;
        if (is_factored() || dim() == 0) return report;
        const auto eig = symmetric_eigen(std::get<Matrix>(cov_), "Gaussian::check_psd");
        report.min_eigenvalue = eig.eigenvalues().minCoeff();
        report.max_eigenvalue = eig.eigenvalues().maxCoeff();
        report.psd = report.min_eigenvalue >= -rel_tol * std::max(std::abs(report.max_eigenvalue), 0.0);
        return report;
    }

private:
    struct Factor {
        Matrix f;
    };

    Vector mean_;
    std::variant<Matrix, Factor> cov_;
};

/// `count` independent draws mean + F z, z ~ N(0, I), returned as columns.
inline Matrix sample(const Gaussian& g, Index count, Rng& rng) {
    require(count >= 0, "sample: count must be non-negative");
    const Matrix f = g.sampling_factor();
    Matrix draws(g.dim(), count);
    for (Index k = 0; k < count; ++k) {
        draws.col(k) = g.mean();
        if (f.cols() > 0) draws.col(k) += f * rng.normal_vector(f.cols());
    }
    return draws;
}

/// Conditions N(x0, Sigma0) on M X = y using the pseudo-inverse of M Sigma0 M^T:
/// mean x0 + Sigma0 M^T (M Sigma0 M^T)^+ (y - M x0),
/// covariance Sigma0 - Sigma0 M^T (M Sigma0 M^T)^+ M Sigma0. Dense, test scale.
inline Gaussian condition_on_linear(const Gaussian& prior, const Matrix& m, const Vector& y) {
    const Index n = prior.dim();
    require_dims(m.rows() == y.size() && (m.rows() == 0 || m.cols() == n), "condition_on_linear: dimension mismatch");
    Matrix sigma0 = prior.covariance();
    if (m.rows() == 0) return Gaussian::dense(prior.mean(), std::move(sigma0));
    const Matrix cross = sigma0 * m.transpose();  // Cov(X, M X)
    Matrix obs = m * cross;                        // Cov(M X, M X)
    obs = 0.5 * (obs + obs.transpose()).eval();
    const Matrix gain = cross * pseudo_inverse(obs);
    Vector mean = prior.mean() + gain * (y - m * prior.mean());
    Matrix cov = sigma0 - gain * cross.transpose();
    cov = 0.5 * (cov + cov.transpose()).eval();
    return Gaussian::dense(std::move(mean), std::move(cov));
}

/// trace(A Sigma) = E |X - mean|_A^2. Factored covariances use sum_j f_j^T A f_j.
inline double trace_quadratic(const SpdOperator& a, const Gaussian& g) {
    require_dims(a.dim() == g.dim(), "trace_quadratic: dimension mismatch");
    if (g.is_factored()) {
        const Matrix& f = g.factor();
        double sum = 0.0;
        for (Index j = 0; j < f.cols(); ++j) sum += a_norm_sq(a, f.col(j));
        return sum;
    }
    const Matrix& s = g.dense_covariance();
    double sum = 0.0;
    Vector e = Vector::Zero(g.dim());
    for (Index j = 0; j < g.dim(); ++j) {
        // (A Sigma)_{jj} = e_j^T A Sigma e_j = (A e_j)^T Sigma e_j
        e[j] = 1.0;
        sum += a.apply(e).dot(s.col(j));
        e[j] = 0.0;
    }
    return sum;
}

/// Var |X - mean|_A^2 = 2 trace((A Sigma)^2); factored form 2 |F^T A F|_F^2.
inline double variance_quadratic(const SpdOperator& a, const Gaussian& g) {
    require_dims(a.dim() == g.dim(), "variance_quadratic: dimension mismatch");
    if (g.is_factored()) {
        const Matrix& f = g.factor();
        if (f.cols() == 0) return 0.0;
        const Matrix gram = f.transpose() * a.apply(f);
        return 2.0 * gram.squaredNorm();
    }
    const Matrix as = a.apply(g.dense_covariance());
    return 2.0 * (as * as).trace();
}

}  // namespace bayescg
