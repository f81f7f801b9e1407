#include <gtest/gtest.h>

#include <iostream>
#include <sstream>

#include "bayescg/krylov.hpp"
#include "test_util.hpp"

using namespace bayescg;

namespace {

CgConfig reorth() {
    CgConfig c;
    c.reorthogonalize = true;
    return c;
}

/// A random n x n system with x* ~ N(0, I).
struct SmallSystem {
    SpdOperator a;
    Vector x_star, b, x0;
};

SmallSystem small_system(Index n, std::uint64_t seed) {
    Rng rng(seed + 500);
    SmallSystem s;
    s.a = SpdOperator::dense(testutil::random_spd(n, 100.0, seed));
    s.x_star = rng.normal_vector(n);
    s.b = s.a.apply(s.x_star);
    s.x0 = Vector::Zero(n);
    return s;
}

}  // namespace

TEST(KrylovSolve, IdentityHasNoDelayDirections) {
    const auto a = SpdOperator::dense(Matrix::Identity(5, 5));
    const KrylovResult r = bayescg_krylov_solve(a, Vector::Ones(5), Vector::Zero(5), 3);
    EXPECT_EQ(r.factors.m, 1);
    EXPECT_EQ(r.factors.rank(), 0);
    EXPECT_TRUE(r.factors.grade_reached);
    EXPECT_EQ(r.factors.trace(), 0.0);
}

TEST(KrylovSolve, MeanIsBitwiseCg) {
    const Problem p = testutil::eigs_problem();
    for (bool re : {false, true}) {
        CgConfig c;
        c.reorthogonalize = re;
        const CgResult cg = cg_solve(p.a, p.b, Vector::Zero(100), c);
        const KrylovResult kr = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 5, c);
        EXPECT_EQ(kr.x, cg.x);
        EXPECT_EQ(kr.trace.iterations(), cg.trace.iterations());
    }
}

TEST(KrylovSolve, DelayFiveUnderestimatesError) {
    const Problem p = testutil::eigs_problem();
    CgConfig c = reorth();
    c.rel_residual_tol = 1e-3;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 5, c);
    ASSERT_EQ(r.factors.rank(), 5);
    const double err = a_norm_sq(p.a, p.x_star - r.x);
    EXPECT_LE(r.factors.trace(), err);
    // trace(A Gamma) from the factors equals the sum of the weights.
    const Gaussian post = r.factors.posterior(r.x);
    EXPECT_NEAR(trace_quadratic(p.a, post), r.factors.trace(), 1e-10 * r.factors.trace());
    for (Index i = 0; i < 5; ++i) EXPECT_GT(r.factors.phi[i], 0.0);
}

TEST(KrylovSolve, AOrthonormalDirections) {
    const Problem p = testutil::eigs_problem();
    CgConfig c = reorth();
    c.rel_residual_tol = 1e-2;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), 20, c);
    EXPECT_LE((r.factors.gram - Matrix::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(KrylovSolve, FullRankTraceEqualsError) {
    const Problem p = testutil::eigs_problem();
    const double e0 = a_norm_sq(p.a, p.x_star);
    for (double tol : {1e-1, 1e-3, 1e-5}) {
        CgConfig c = reorth();
        c.rel_residual_tol = tol;
        const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(100), kFullRank, c);
        const double err = a_norm_sq(p.a, p.x_star - r.x);
        EXPECT_NEAR(r.factors.trace(), err, 1e-6 * e0);
        EXPECT_NEAR(r.factors.trace(), err, 1e-6 * err);
    }
}

TEST(KrylovSolve, NestedPrefixes) {
    const Problem p = testutil::strakos_problem();
    CgConfig c = reorth();
    c.rel_residual_tol = 1e-2;
    const KrylovResult r4 = bayescg_krylov_solve(p.a, p.b, Vector::Zero(48), 4, c);
    const KrylovResult r5 = bayescg_krylov_solve(p.a, p.b, Vector::Zero(48), 5, c);
    EXPECT_EQ(r5.factors.prefix(4).v, r4.factors.v);
    EXPECT_EQ(r5.factors.prefix(4).phi, r4.factors.phi);
}

TEST(KrylovSolve, DelayClampedAtGrade) {
    Vector eigs(8);
    eigs << 1, 1, 2, 2, 4, 4, 8, 8;
    const auto a = SpdOperator::dense(testutil::spd_with_spectrum(eigs, 2));
    CgConfig c = reorth();
    c.max_iters = 2;
    c.rel_residual_tol = 1e-300;
    const KrylovResult r = bayescg_krylov_solve(a, Vector::Ones(8), Vector::Zero(8), 10, c);
    EXPECT_EQ(r.factors.m, 2);
    EXPECT_EQ(r.factors.rank(), 2);
    EXPECT_TRUE(r.factors.grade_reached);
}

TEST(KrylovSolve, InvalidDelay) {
    const auto a = SpdOperator::dense(Matrix::Identity(2, 2));
    EXPECT_THROW(bayescg_krylov_solve(a, Vector::Ones(2), Vector::Zero(2), 0), ConfigError);
}

TEST(FullKrylovPrior, OneDimensional) {
    const auto a = SpdOperator::dense(Matrix::Constant(1, 1, 3.0));
    const Vector b = Vector::Constant(1, 6.0);
    const Vector x0 = Vector::Constant(1, 0.5);
    const Gaussian g = build_full_krylov_prior(a, b, x0);
    const double e = 2.0 - 0.5;
    // phi_1 v v^T with v = 1/sqrt(3) and phi_1 = |x* - x0|_A^2 = 3 e^2.
    EXPECT_NEAR(g.covariance()(0, 0), e * e, 1e-14);
    const KrylovFactors f = full_krylov_factors(a, b, x0);
    EXPECT_NEAR(f.phi[0], 3.0 * e * e, 1e-13);
}

TEST(FullKrylovPrior, EigenIdentityAndRank) {
    const SmallSystem s = small_system(10, 4);
    const KrylovFactors f = full_krylov_factors(s.a, s.b, s.x0);
    const Gaussian g = build_full_krylov_prior(s.a, s.b, s.x0);
    EXPECT_EQ(numerical_rank(g.covariance()), f.rank());
    const Matrix am = s.a.to_dense();
    for (Index i = 0; i < f.rank(); ++i) {
        const Vector vi = f.v.col(i);
        const Vector lhs = g.covariance() * (am * vi);
        EXPECT_LE((lhs - f.phi[i] * vi).norm(), 1e-8 * f.phi[i] * vi.norm());
    }
}

TEST(FullKrylovPrior, SolutionInRange) {
    const SmallSystem s = small_system(10, 5);
    const Gaussian g = build_full_krylov_prior(s.a, s.b, s.x0);
    const Matrix cov = g.covariance();
    const Vector e = s.x_star - s.x0;
    const Vector proj = cov * pseudo_inverse(cov) * e;
    EXPECT_LE((proj - e).norm(), 1e-8 * e.norm());
}

TEST(FullKrylovPrior, KrylovSpacesCoincide) {
    const SmallSystem s = small_system(10, 6);
    const Gaussian g = build_full_krylov_prior(s.a, s.b, s.x0);
    const Matrix am = s.a.to_dense();
    const Matrix b = am * g.covariance() * am;
    const Vector r0 = s.b - am * s.x0;
    const KrylovFactors f = full_krylov_factors(s.a, s.b, s.x0);
    // Compare orthonormal bases built by Arnoldi-style Gram-Schmidt in both spaces.
    Matrix qa(10, 0), qb(10, 0);
    Vector wa = r0 / r0.norm(), wb = wa;
    for (Index m = 1; m <= f.rank(); ++m) {
        qa.conservativeResize(10, m);
        qb.conservativeResize(10, m);
        qa.col(m - 1) = wa;
        qb.col(m - 1) = wb;
        EXPECT_LE(testutil::subspace_distance(qa, qb), 1e-6) << "m = " << m;
        wa = cgs2_orthonormalize(qa, am * wa);
        wb = cgs2_orthonormalize(qb, b * wb);
        if (wa.norm() == 0.0 || wb.norm() == 0.0) break;
        wa.normalize();
        wb.normalize();
    }
}

TEST(PosteriorFactorization, DenseBayesCgUnderFullPrior) {
    const SmallSystem s = small_system(40, 7);
    const KrylovFactors f = full_krylov_factors(s.a, s.b, s.x0);
    const Gaussian prior = build_full_krylov_prior(s.a, s.b, s.x0);
    CgConfig cc = reorth();
    cc.store_iterates = true;
    cc.rel_residual_tol = 1e-300;
    cc.max_iters = f.rank();
    const CgResult cg = cg_solve(s.a, s.b, s.x0, cc);
    BayesCgConfig bc;
    bc.reorthogonalize = true;
    bc.rel_residual_tol = 1e-300;
    const double scale = prior.covariance().norm();
    for (Index m : {Index(1), Index(5), Index(15), Index(30)}) {
        bc.max_iters = m;
        const BayesCgResult r = bayescg_solve(s.a, s.b, prior, bc);
        const Matrix tail = f.v.rightCols(f.rank() - m) * f.phi.tail(f.rank() - m).asDiagonal() *
                            f.v.rightCols(f.rank() - m).transpose();
        EXPECT_LE((r.posterior.covariance() - tail).norm(), 1e-8 * scale) << "m = " << m;
        const Vector& xm = cg.trace.iterates[static_cast<std::size_t>(m)];
        EXPECT_LE((r.posterior.mean - xm).norm(), 1e-8 * xm.norm()) << "m = " << m;
    }
}

TEST(PhiAlternative, FirstIndexIdentity) {
    const SmallSystem s = small_system(20, 8);
    const KrylovFactors f = full_krylov_factors(s.a, s.b, s.x0);
    const Vector r0 = s.b - s.a.apply(s.x0);
    const Vector alt = phi_alternative(f, r0);
    EXPECT_NEAR(alt[0], f.phi[0], 1e-13 * f.phi[0]);
}

TEST(PhiAlternative, ReorthogonalizedRunMatches) {
    const SmallSystem s = small_system(20, 9);
    const KrylovFactors f = full_krylov_factors(s.a, s.b, s.x0);
    const Vector alt = phi_alternative(f, s.b - s.a.apply(s.x0));
    for (Index i = 0; i < f.rank(); ++i) EXPECT_NEAR(alt[i], f.phi[i], 1e-6 * f.phi[i]) << "i = " << i;
}

TEST(PhiAlternative, WithoutReorthogonalizationDiagnostic) {
    // Recorded, not asserted: loss of global orthogonality breaks the formula.
    const Problem p = testutil::strakos_problem();
    CgConfig c;
    c.rel_residual_tol = 1e-300;
    c.max_iters = 1;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(48), 47, c);
    KrylovFactors all = r.factors;
    const Vector alt = phi_alternative(all, p.b);
    double worst = 0.0;
    for (Index i = 0; i < all.rank(); ++i) worst = std::max(worst, std::abs(alt[i] - all.phi[i]) / all.phi[i]);
    std::cout << "max relative deviation without reorthogonalization: " << worst << '\n';
    SUCCEED();
}

TEST(ApproxPrior, FirstDirectionIsResidual) {
    const SmallSystem s = small_system(12, 10);
    const ApproxPriorReport rep = approx_prior_equivalence_check(s.a, s.b, s.x0, 1, 3);
    EXPECT_LE(rep.max_direction_deviation, 1e-15);
}

TEST(ApproxPrior, FourStepsDelayTwo) {
    const SmallSystem s = small_system(12, 11);
    const ApproxPriorReport rep = approx_prior_equivalence_check(s.a, s.b, s.x0, 4, 2);
    EXPECT_LE(rep.max_direction_deviation, 1e-8);
    EXPECT_LE(rep.max_iterate_deviation, 1e-8);
    EXPECT_LE(rep.covariance_deviation, 1e-8);
}

TEST(DelayWindows, MatchSingleSolves) {
    const Problem p = testutil::strakos_problem();
    std::vector<DelayWindow> windows;
    for_each_delay_window(p.a, p.b, Vector::Zero(48), &p.x_star, 10, 4, true,
                          [&](const DelayWindow& w) { windows.push_back(w); });
    ASSERT_EQ(windows.size(), 11u);
    for (Index m : {Index(1), Index(3), Index(10)}) {
        CgConfig c = reorth();
        c.rel_residual_tol = 1e-300;
        c.max_iters = m;
        const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(48), 4, c);
        const DelayWindow& w = windows[static_cast<std::size_t>(m)];
        EXPECT_EQ(w.factors.phi, r.factors.phi);
        EXPECT_EQ(w.factors.v, r.factors.v);
        EXPECT_EQ(w.err_sq, a_norm_sq(p.a, p.x_star - r.x));
    }
}

TEST(DelayWindows, ClampedNearGrade) {
    const auto a = SpdOperator::dense(Eigen::Vector4d(1, 2, 3, 4).asDiagonal().toDenseMatrix());
    std::vector<DelayWindow> windows;
    for_each_delay_window(a, Vector::Ones(4), Vector::Zero(4), nullptr, 100, 3, true,
                          [&](const DelayWindow& w) { windows.push_back(w); });
    ASSERT_EQ(windows.size(), 4u);
    EXPECT_EQ(windows[0].factors.rank(), 3);
    EXPECT_EQ(windows[2].factors.rank(), 2);
    EXPECT_EQ(windows[3].factors.rank(), 1);
    EXPECT_TRUE(std::isnan(windows[0].err_sq));
}

TEST(FactorSerialization, CsvAndBinaryRoundTrip) {
    const Problem p = testutil::strakos_problem();
    CgConfig c = reorth();
    c.rel_residual_tol = 1e-3;
    const KrylovResult r = bayescg_krylov_solve(p.a, p.b, Vector::Zero(48), 4, c);
    std::stringstream csv;
    write_factors_csv(csv, r.factors);
    const KrylovFactors back = read_factors_csv(csv, &p.a);
    EXPECT_EQ(back.v, r.factors.v);
    EXPECT_EQ(back.phi, r.factors.phi);
    EXPECT_EQ(back.m, r.factors.m);
    EXPECT_EQ(back.gram, r.factors.gram);
    std::stringstream bin;
    write_factors_binary(bin, r.factors);
    const KrylovFactors back2 = read_factors_binary(bin);
    EXPECT_EQ(back2.v, r.factors.v);
    EXPECT_EQ(back2.phi, r.factors.phi);
    std::stringstream bad("n,d,m\n3,1\n");
    EXPECT_THROW(read_factors_csv(bad), ParseError);
}
