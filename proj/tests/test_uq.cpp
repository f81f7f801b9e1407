#include <gtest/gtest.h>

#include "bayescg/uq.hpp"
#include "test_util.hpp"

using namespace bayescg;

TEST(ErfInverse, Zero) { EXPECT_EQ(erf_inverse(0.0), 0.0); }

TEST(ErfInverse, NinetyFivePercent) {
    EXPECT_NEAR(erf_inverse(0.95), 1.38590, 1e-4);
    EXPECT_NEAR(std::sqrt(2.0) * erf_inverse(0.95), 1.9600, 1e-3);
}

TEST(ErfInverse, Odd) {
    for (double p : {0.1, 0.5, 0.9, 0.999})
        EXPECT_NEAR(erf_inverse(-p), -erf_inverse(p), 1e-12);
}

TEST(ErfInverse, RoundTrip) {
    for (double p = -0.999; p < 0.9995; p += 0.0111) EXPECT_NEAR(std::erf(erf_inverse(p)), p, 1e-10);
    for (double p : {1e-10, 0.999999, -0.9999999}) EXPECT_NEAR(std::erf(erf_inverse(p)), p, 1e-10);
}

TEST(ErfInverse, Domain) {
    EXPECT_THROW(erf_inverse(1.0), ConfigError);
    EXPECT_THROW(erf_inverse(-1.5), ConfigError);
    EXPECT_THROW(erf_inverse(std::nan("")), ConfigError);
}

TEST(CredibleInterval, MultiplierAt95) { EXPECT_NEAR(credible_multiplier(95.0), 1.9600, 1e-3); }

TEST(CredibleInterval, SingleWeight) {
    KrylovFactors f;
    f.v = Matrix::Identity(1, 1);
    f.phi = Vector::Constant(1, 4.0);
    f.gram = Matrix::Identity(1, 1);
    const ErrorEstimate e = credible_interval(f, 95.0);
    EXPECT_EQ(e.mu, 4.0);
    EXPECT_EQ(e.sigma_sq, 32.0);
    EXPECT_NEAR(e.s_alpha, 4.0 + 1.96 * std::sqrt(32.0), 1e-3 * std::sqrt(32.0));
    EXPECT_TRUE(e.approximate);
}

TEST(CredibleInterval, MonotoneInAlpha) {
    const Problem p = testutil::eigs_problem();
    CgConfig c;
    c.reorthogonalize = true;
    c.rel_residual_tol = 1e-2;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 5, c);
    double prev = -1.0;
    for (double alpha : {50.0, 80.0, 90.0, 95.0, 99.0}) {
        const ErrorEstimate e = credible_interval(r.factors, alpha);
        EXPECT_GT(e.s_alpha, prev);
        EXPECT_GE(e.s_alpha, e.mu);
        prev = e.s_alpha;
    }
    EXPECT_THROW(credible_interval(r.factors, 100.0), ConfigError);
    EXPECT_THROW(credible_interval(r.factors, 0.0), ConfigError);
}

TEST(CredibleInterval, MeanMatchesTraceOfPosterior) {
    const Problem p = testutil::eigs_problem();
    CgConfig c;
    c.reorthogonalize = true;
    c.rel_residual_tol = 1e-4;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 5, c);
    const ErrorEstimate e = credible_interval(r.factors);
    EXPECT_NEAR(e.mu, trace_quadratic(p.a, r.factors.posterior(r.x)), 1e-10 * e.mu);
    EXPECT_NEAR(e.sigma_sq, variance_quadratic(p.a, r.factors.posterior(r.x)), 1e-6 * e.sigma_sq);
}

TEST(RelativeAccuracy, Cases) {
    EXPECT_EQ(relative_accuracy(3.0, 3.0), 0.0);
    EXPECT_EQ(relative_accuracy(2.0, 1.0), 1.0);
    EXPECT_EQ(relative_accuracy(1.0, 2.0), 1.0);
    EXPECT_THROW(relative_accuracy(0.0, 1.0), ConfigError);
    EXPECT_THROW(relative_accuracy(1.0, -1.0), ConfigError);
}

TEST(SStatistic, EmptyFactorsGiveZero) {
    KrylovFactors f;
    f.v.resize(5, 0);
    Rng rng(1);
    const EmpiricalEstimate e = s_statistic_samples(f, 10, rng);
    for (double s : e.samples) EXPECT_EQ(s, 0.0);
    EXPECT_EQ(e.mu_hat, 0.0);
}

TEST(SStatistic, NeedsTwoSamples) {
    KrylovFactors f;
    f.v.resize(5, 0);
    Rng rng(1);
    EXPECT_THROW(s_statistic_samples(f, 1, rng), ConfigError);
}

TEST(SStatistic, ChiSquaredOneDegree) {
    KrylovFactors f;
    f.v = Matrix::Identity(3, 1);
    f.phi = Vector::Constant(1, 2.5);
    f.gram = Matrix::Identity(1, 1);
    Rng rng(2);
    const Index n = 20000;
    const EmpiricalEstimate e = s_statistic_samples(f, n, rng);
    EXPECT_NEAR(e.mu_hat, 2.5, 4.0 * 2.5 * std::sqrt(2.0) / std::sqrt(static_cast<double>(n)));
    for (double s : e.samples) EXPECT_GE(s, 0.0);
}

TEST(SStatistic, MonteCarloMoments) {
    const Problem p = testutil::eigs_problem();
    CgConfig c;
    c.reorthogonalize = true;
    c.rel_residual_tol = 1e-2;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 10, c);
    for (Index d : {Index(1), Index(3), Index(10)}) {
        const KrylovFactors f = r.factors.prefix(d);
        const ErrorEstimate est = credible_interval(f);
        Rng rng(static_cast<std::uint64_t>(d));
        const Index n = 100000;
        const EmpiricalEstimate emp = s_statistic_samples(f, n, rng);
        EXPECT_NEAR(emp.mu_hat, est.mu, 4.0 * std::sqrt(est.sigma_sq / static_cast<double>(n)));
        EXPECT_NEAR(emp.var_hat, est.sigma_sq, 0.1 * est.sigma_sq);
    }
}

TEST(SStatistic, GaussianOverloadMatchesFactors) {
    const Problem p = testutil::eigs_problem();
    CgConfig c;
    c.reorthogonalize = true;
    c.rel_residual_tol = 1e-2;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 3, c);
    Rng r1(5), r2(5);
    const EmpiricalEstimate a = s_statistic_samples(r.factors, 50, r1);
    const EmpiricalEstimate b = s_statistic_samples(p.a, r.factors.posterior(r.x), 50, r2);
    for (std::size_t k = 0; k < 50; ++k) EXPECT_NEAR(a.samples[k], b.samples[k], 1e-10 * a.samples[k]);
}

TEST(SStatistic, SamplesTrackErrorDuringFastConvergence) {
    const Problem p = testutil::eigs_problem();
    std::vector<DelayWindow> windows;
    for_each_delay_window(p.a, p.b, Vector::Zero(100), &p.x_star, 60, 5, true,
                          [&](const DelayWindow& w) { windows.push_back(w); });
    const Rng root(3);
    for (const auto& w : windows) {
        if (w.err_sq < 1e-10 * windows.front().err_sq) break;
        Rng rng = root.split(static_cast<std::uint64_t>(w.m));
        const EmpiricalEstimate e = s_statistic_samples(w.factors, 10, rng);
        for (double s : e.samples) {
            EXPECT_GE(s, 0.01 * w.err_sq) << "m = " << w.m;
            EXPECT_LE(s, 100.0 * w.err_sq) << "m = " << w.m;
        }
    }
}

TEST(SStatistic, EmpiricalAndAnalyticBoundsAgree) {
    const Problem p = testutil::eigs_problem();
    const Rng root(4);
    int checked = 0;
    for_each_delay_window(p.a, p.b, Vector::Zero(100), &p.x_star, 70, 5, true, [&](const DelayWindow& w) {
        Rng rng = root.split(static_cast<std::uint64_t>(w.m));
        const EmpiricalEstimate e = s_statistic_samples(w.factors, 10, rng);
        const ErrorEstimate est = credible_interval(w.factors);
        EXPECT_LE(e.s_hat, 3.0 * est.s_alpha) << "m = " << w.m;
        EXPECT_GE(e.s_hat, est.s_alpha / 3.0) << "m = " << w.m;
        ++checked;
    });
    EXPECT_EQ(checked, 71);
}
