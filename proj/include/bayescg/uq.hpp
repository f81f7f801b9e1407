#pragma once

// Error estimates from rank-d Krylov posteriors. The statistic S = |X - x_m|_A^2 with
// X ~ N(x_m, Gamma_m) has mean mu = sum phi_i and, with V^T A V = I, variance
// sigma^2 = 2 sum phi_i^2. Its exact law is a generalized chi-squared; the credible bound
// S(alpha) = mu + h(alpha) sigma uses the Gaussian approximation N(mu, sigma^2).

#include <cmath>
#include <vector>

#include "bayescg/errors.hpp"
#include "bayescg/gaussian.hpp"
#include "bayescg/krylov.hpp"
#include "bayescg/linalg.hpp"
#include "bayescg/random.hpp"

namespace bayescg {

/// Inverse error function on (-1, 1): rational initial guess refined by Newton steps on
/// std::erf. |erf(erf_inverse(p)) - p| <= 1e-15 in practice.
inline double erf_inverse(double p) {
    if (!(p > -1.0 && p < 1.0)) throw ConfigError("erf_inverse: argument must lie in (-1, 1)");
    if (p == 0.0) return 0.0;
    if (p < 0.0) return -erf_inverse(-p);
    // Winitzki's approximation, relative error about 2e-3.
    const double pi = 3.14159265358979323846;
    const double a = 0.147;
    const double ln = std::log1p(-p * p);
    const double t = 2.0 / (pi * a) + 0.5 * ln;
    double x = std::sqrt(std::sqrt(t * t - ln / a) - t);
    const double two_over_sqrt_pi = 1.12837916709551257390;
    for (int k = 0; k < 50; ++k) {
        const double deriv = two_over_sqrt_pi * std::exp(-x * x);
        if (deriv == 0.0) break;
        const double step = (std::erf(x) - p) / deriv;
        x -= step;
        if (std::abs(step) <= 1e-17 * std::max(1.0, std::abs(x))) break;
    }
    return x;
}

/// h(alpha) = sqrt(2) erf^{-1}(alpha / 100), alpha in percent.
inline double credible_multiplier(double alpha) {
    if (!(alpha > 0.0 && alpha < 100.0)) throw ConfigError("credibility level must lie in (0, 100)");
    return std::sqrt(2.0) * erf_inverse(alpha / 100.0);
}

struct ErrorEstimate {
    double mu = 0.0;
    double sigma_sq = 0.0;
    double alpha = 95.0;
    double s_alpha = 0.0;
    Index m = 0;
    Index d = 0;
    /// S(alpha) rests on a Gaussian approximation of a generalized chi-squared law.
    bool approximate = true;
};

inline ErrorEstimate credible_interval(const KrylovFactors& f, double alpha = 95.0) {
    const double h = credible_multiplier(alpha);
    ErrorEstimate e;
    e.alpha = alpha;
    e.m = f.m;
    e.d = f.rank();
    e.mu = f.trace();
    double sq = 0.0;
    for (Index i = 0; i < f.phi.size(); ++i) sq += f.phi[i] * f.phi[i];
    e.sigma_sq = 2.0 * sq;
    e.s_alpha = e.mu + h * std::sqrt(e.sigma_sq);
    return e;
}

struct EmpiricalEstimate {
    std::vector<double> samples;
    double mu_hat = 0.0;
    /// Unbiased (N - 1) sample variance.
    double var_hat = 0.0;
    double alpha = 95.0;
    double s_hat = 0.0;
};

namespace detail {

/// Samples z^T W^T G W z with z ~ N(0, I_k), where G = F^T A F has been formed already.
inline EmpiricalEstimate quadratic_samples(const Matrix& gram, Index count, Rng& rng, double alpha) {
    if (count < 2) throw ConfigError("S-statistic sampling needs at least two samples");
    const double h = credible_multiplier(alpha);
    EmpiricalEstimate e;
    e.alpha = alpha;
    e.samples.reserve(static_cast<std::size_t>(count));
    const Index k = gram.rows();
    for (Index s = 0; s < count; ++s) {
        if (k == 0) {
            e.samples.push_back(0.0);
            continue;
        }
        const Vector z = rng.normal_vector(k);
        e.samples.push_back(std::max(0.0, z.dot(gram * z)));
    }
    double sum = 0.0;
    for (double x : e.samples) sum += x;
    e.mu_hat = sum / static_cast<double>(count);
    double ss = 0.0;
    for (double x : e.samples) ss += (x - e.mu_hat) * (x - e.mu_hat);
    e.var_hat = ss / static_cast<double>(count - 1);
    e.s_hat = e.mu_hat + h * std::sqrt(e.var_hat);
    return e;
}

}  // namespace detail

/// N draws of |X - x_m|_A^2 with X ~ N(x_m, V Phi V^T), evaluated through the d x d
/// Gram matrix V^T A V.
inline EmpiricalEstimate s_statistic_samples(const KrylovFactors& f, Index count, Rng& rng, double alpha = 95.0) {
    require_dims(f.gram.rows() == f.rank() && f.gram.cols() == f.rank(),
                 "s_statistic_samples: factors have no Gram matrix");
    const Vector root = f.phi.cwiseSqrt();
    const Matrix weighted = root.asDiagonal() * f.gram * root.asDiagonal();
    return detail::quadratic_samples(weighted, count, rng, alpha);
}

/// N draws of |X - mean|_A^2 for X ~ g.
inline EmpiricalEstimate s_statistic_samples(const SpdOperator& a, const Gaussian& g, Index count, Rng& rng,
                                             double alpha = 95.0) {
    require_dims(a.dim() == g.dim(), "s_statistic_samples: dimension mismatch");
    const Matrix f = g.sampling_factor();
    Matrix gram = f.cols() > 0 ? Matrix(f.transpose() * a.apply(f)) : Matrix(0, 0);
    if (gram.size() > 0) gram = 0.5 * (gram + gram.transpose()).eval();
    return detail::quadratic_samples(gram, count, rng, alpha);
}

/// rho(E) = |E - err| / min(E, err).
inline double relative_accuracy(double estimate, double true_err_sq) {
    if (!(estimate > 0.0) || !(true_err_sq > 0.0)) throw ConfigError("relative_accuracy: inputs must be positive");
    return std::abs(estimate - true_err_sq) / std::min(estimate, true_err_sq);
}

}  // namespace bayescg
