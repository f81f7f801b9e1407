#include <gtest/gtest.h>

#include "bayescg/linalg.hpp"
#include "bayescg/problem.hpp"
#include "bayescg/random.hpp"
#include "test_util.hpp"

using namespace bayescg;
using bayescg::testutil::random_spd;

TEST(ANormSq, IdentityOperator) {
    const auto a = SpdOperator::dense(Matrix::Identity(3, 3));
    EXPECT_DOUBLE_EQ(a_norm_sq(a, Eigen::Vector3d(1, 2, 2)), 9.0);
}

TEST(ANormSq, Diagonal) {
    const auto a = SpdOperator::dense(Eigen::Vector2d(2.0, 0.5).asDiagonal().toDenseMatrix());
    EXPECT_DOUBLE_EQ(a_norm_sq(a, Eigen::Vector2d(1, 2)), 4.0);
}

TEST(ANormSq, LargestEigenvectorOfGeometricSpectrum) {
    const Problem p = testutil::eigs_problem();
    const Vector x = p.eigenvectors->col(99);
    EXPECT_NEAR(a_norm_sq(p.a, x), 1000.0, 1e-9);
}

TEST(ANormSq, DimensionMismatchThrows) {
    const auto a = SpdOperator::dense(Matrix::Identity(3, 3));
    EXPECT_THROW(a_norm_sq(a, Vector::Ones(2)), DimensionError);
}

TEST(Cgs2, RemovesBasisComponent) {
    Matrix basis = Matrix::Zero(3, 1);
    basis(0, 0) = 1.0;
    const Vector w = cgs2_orthonormalize(basis, Eigen::Vector3d(1, 1, 0));
    EXPECT_LE((w - Eigen::Vector3d(0, 1, 0)).norm(), 1e-15);
}

TEST(Cgs2, EmptyBasisLeavesVector) {
    const Vector v = Eigen::Vector3d(3, 0, 0);
    EXPECT_EQ(cgs2_orthonormalize(Matrix(3, 0), v), v);
}

TEST(Cgs2, HaarBasisOrthogonality) {
    const Matrix q = haar_orthogonal(50, 11).leftCols(10);
    Rng rng(5);
    const Vector v = rng.normal_vector(50);
    const Vector w = cgs2_orthonormalize(q, v);
    EXPECT_LE((q.transpose() * w).cwiseAbs().maxCoeff(), 1e-12 * v.norm());
}

TEST(Cgs2, Idempotent) {
    const Matrix q = haar_orthogonal(40, 3).leftCols(15);
    Rng rng(8);
    const Vector v = rng.normal_vector(40);
    const Vector w1 = cgs2_orthonormalize(q, v);
    const Vector w2 = cgs2_orthonormalize(q, w1);
    EXPECT_LE((w2 - w1).norm(), 1e-14 * v.norm());
}

TEST(Cgs2, DependentVectorGivesZero) {
    const Matrix q = haar_orthogonal(20, 4).leftCols(5);
    const Vector v = q * Vector::LinSpaced(5, 1.0, 5.0);
    EXPECT_EQ(cgs2_orthonormalize(q, v).norm(), 0.0);
}

TEST(Cgs2, WeightedInnerProduct) {
    const auto a = SpdOperator::dense(random_spd(12, 50.0, 9));
    Rng rng(2);
    // A-orthonormal basis from three random vectors.
    Matrix basis(12, 0);
    for (int k = 0; k < 3; ++k) {
        Vector w = cgs2_orthonormalize(basis, rng.normal_vector(12), InnerProduct::weighted(a));
        w /= std::sqrt(a_norm_sq(a, w));
        basis.conservativeResize(12, basis.cols() + 1);
        basis.col(basis.cols() - 1) = w;
    }
    const Vector v = rng.normal_vector(12);
    const Vector w = cgs2_orthonormalize(basis, v, InnerProduct::weighted(a));
    const Vector aw = a.apply(w);
    EXPECT_LE((basis.transpose() * aw).cwiseAbs().maxCoeff(), 1e-12 * std::sqrt(a_norm_sq(a, v)));
}

TEST(PseudoInverse, SingularDiagonal) {
    Matrix s = Matrix::Zero(2, 2);
    s(0, 0) = 2.0;
    const Vector y = pseudo_inverse_apply(s, Eigen::Vector2d(4, 5));
    EXPECT_NEAR(y[0], 2.0, 1e-15);
    EXPECT_NEAR(y[1], 0.0, 1e-15);
}

TEST(PseudoInverse, Identity) {
    const Vector x = Eigen::Vector3d(1, -2, 7);
    EXPECT_LE((pseudo_inverse_apply(Matrix::Identity(3, 3), x) - x).norm(), 1e-14);
}

TEST(PseudoInverse, RankOne) {
    const Vector v = Eigen::Vector2d(1, 1);
    const Vector y = pseudo_inverse_apply(v * v.transpose(), Eigen::Vector2d(1, 0));
    EXPECT_NEAR(y[0], 0.25, 1e-15);
    EXPECT_NEAR(y[1], 0.25, 1e-15);
}

TEST(PseudoInverse, MoorePenroseIdentities) {
    Rng rng(17);
    const Matrix f = rng.normal_matrix(9, 4);
    const Matrix s = f * f.transpose();
    const Matrix p = pseudo_inverse(s);
    const double scale = s.norm();
    EXPECT_LE((s * p * s - s).norm(), 1e-10 * scale);
    EXPECT_LE((p * s * p - p).norm(), 1e-10 * p.norm());
    EXPECT_LE(symmetry_defect(s * p), 1e-10);
    EXPECT_LE(symmetry_defect(p * s), 1e-10);
}

TEST(PseudoInverse, NonSymmetricThrows) {
    Matrix s(2, 2);
    s << 1, 2, 0, 1;
    EXPECT_THROW(pseudo_inverse(s), ConfigError);
}

TEST(SqrtAbsFactor, ReproducesAbsoluteValue) {
    Matrix s(2, 2);
    s << 1, 2, 2, 1;  // eigenvalues 3 and -1
    const Matrix f = sqrt_abs_factor(s);
    Matrix abs_s(2, 2);
    abs_s << 2, 1, 1, 2;
    EXPECT_LE((f * f.transpose() - abs_s).norm(), 1e-14);
}

namespace {

SparseMatrix tridiagonal(Index n, double diag, double off) {
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < n; ++i) {
        t.emplace_back(i, i, diag + static_cast<double>(i));
        if (i + 1 < n) {
            t.emplace_back(i, i + 1, off);
            t.emplace_back(i + 1, i, off);
        }
    }
    SparseMatrix m(n, n);
    m.setFromTriplets(t.begin(), t.end());
    return m;
}

std::vector<SpdOperator> operator_forms() {
    const SparseMatrix b = tridiagonal(30, 4.0, -1.0);
    TriangularFactor::Storage l(30, 30);
    std::vector<Eigen::Triplet<double>> t;
    for (Index i = 0; i < 30; ++i) {
        t.emplace_back(i, i, 1.0 + 0.1 * static_cast<double>(i));
        if (i + 1 < 30) t.emplace_back(i + 1, i, 0.3);
    }
    l.setFromTriplets(t.begin(), t.end());
    return {SpdOperator::dense(random_spd(30, 100.0, 1)), SpdOperator::sparse(b),
            SpdOperator::preconditioned(b, TriangularFactor(l))};
}

}  // namespace

TEST(SpdOperator, LinearSymmetricAndPsd) {
    Rng rng(3);
    for (const auto& a : operator_forms()) {
        const Vector x = rng.normal_vector(30), y = rng.normal_vector(30);
        const double alpha = 0.7, beta = -1.3;
        const Vector lhs = a.apply(Vector(alpha * x + beta * y));
        const Vector rhs = alpha * a.apply(x) + beta * a.apply(y);
        EXPECT_LE((lhs - rhs).norm(), 1e-12 * rhs.norm());
        EXPECT_NEAR(y.dot(a.apply(x)), x.dot(a.apply(y)), 1e-12 * std::abs(x.dot(a.apply(y))) + 1e-12);
        EXPECT_GE(x.dot(a.apply(x)), -1e-12 * x.squaredNorm());
    }
}

TEST(SpdOperator, DenseMaterializationMatchesApply) {
    Rng rng(4);
    for (const auto& a : operator_forms()) {
        const Matrix d = a.to_dense();
        const Vector x = rng.normal_vector(30);
        EXPECT_LE((d * x - a.apply(x)).cwiseAbs().maxCoeff(), 1e-12 * (d * x).cwiseAbs().maxCoeff());
    }
}

TEST(SpdOperator, DenseLimitEnforced) {
    const auto a = SpdOperator::sparse(tridiagonal(600, 4.0, -1.0));
    EXPECT_THROW(a.to_dense(), ConfigError);
}

TEST(TriangularFactor, SolvesAreExact) {
    TriangularFactor::Storage l(4, 4);
    std::vector<Eigen::Triplet<double>> t = {{0, 0, 2.0}, {1, 1, 3.0}, {2, 2, 1.5}, {3, 3, 4.0},
                                             {1, 0, 1.0}, {3, 1, -2.0}, {3, 2, 0.5}};
    l.setFromTriplets(t.begin(), t.end());
    const TriangularFactor f(l);
    const Matrix ld = f.to_dense();
    const Vector x = Vector::LinSpaced(4, -1.0, 2.0);
    EXPECT_LE((ld * f.solve_lower(x) - x).norm(), 1e-14);
    EXPECT_LE((ld.transpose() * f.solve_upper(x) - x).norm(), 1e-14);
    EXPECT_EQ(f.off_diagonal_nnz(), 3);
}

TEST(TriangularFactor, RejectsUpperEntries) {
    TriangularFactor::Storage l(2, 2);
    std::vector<Eigen::Triplet<double>> t = {{0, 0, 1.0}, {1, 1, 1.0}, {0, 1, 1.0}};
    l.setFromTriplets(t.begin(), t.end());
    EXPECT_THROW(TriangularFactor{l}, ConfigError);
}

TEST(Rng, DeterministicPerSeedAndStream) {
    Rng a(42), b(42), c(43);
    const Vector za = a.normal_vector(8), zb = b.normal_vector(8), zc = c.normal_vector(8);
    EXPECT_EQ(za, zb);
    EXPECT_NE(za, zc);
    const Rng root(9);
    EXPECT_EQ(root.split(1).split(0).uniform(), root.split(1).split(0).uniform());
    Rng s0 = root.split(0), s1 = root.split(1);
    EXPECT_NE(s0.uniform(), s1.uniform());
}
