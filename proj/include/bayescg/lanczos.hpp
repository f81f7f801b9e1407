#pragma once

// Lanczos with full reorthogonalization, used to estimate extremal eigenvalues and the
// condition number of an operator.

#include <algorithm>
#include <cmath>

#include "bayescg/errors.hpp"
#include "bayescg/linalg.hpp"
#include "bayescg/random.hpp"

namespace bayescg {

struct RitzEstimate {
    Index steps = 0;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double kappa() const { return lambda_max / lambda_min; }
};

/// k steps (capped at n) from a seeded Gaussian start vector.
inline RitzEstimate lanczos_extremal(const SpdOperator& a, Index k, std::uint64_t seed = 7) {
    const Index n = a.dim();
    require(n >= 1 && k >= 1, "lanczos_extremal: need n >= 1 and k >= 1");
    k = std::min(k, n);
    Rng rng(seed);
    Matrix q(n, k);
    Vector alpha(k), beta(k);
    Vector w = rng.normal_vector(n);
    w.normalize();
    Index steps = 0;
    for (Index j = 0; j < k; ++j) {
        q.col(j) = w;
        Vector u = a.apply(w);
        alpha[j] = w.dot(u);
        u -= alpha[j] * w;
        if (j > 0) u -= beta[j - 1] * q.col(j - 1);
        u = cgs2_orthonormalize(q.leftCols(j + 1), u);
        ++steps;
        beta[j] = u.norm();
        if (beta[j] == 0.0) break;
        w = u / beta[j];
    }
    Matrix t = Matrix::Zero(steps, steps);
    for (Index j = 0; j < steps; ++j) {
        t(j, j) = alpha[j];
        if (j + 1 < steps) t(j, j + 1) = t(j + 1, j) = beta[j];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(t, Eigen::EigenvaluesOnly);
    RitzEstimate r;
    r.steps = steps;
    r.lambda_min = eig.eigenvalues().minCoeff();
    r.lambda_max = eig.eigenvalues().maxCoeff();
    return r;
}

}  // namespace bayescg
