#pragma once

// Linear algebra substrate: symmetric operators (dense, sparse, or a two-sided
// triangular preconditioning L^{-1} B L^{-T}), triangular factors, A-norms,
// twice-iterated classical Gram-Schmidt, and eigendecomposition helpers that are
// restricted to test-scale dense matrices.

#include <algorithm>
#include <cmath>
#include <memory>
#include <variant>

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include "bayescg/errors.hpp"

namespace bayescg {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// Largest dimension for which dense eigendecompositions and dense covariances are allowed.
inline constexpr Index kDenseLimit = 512;

inline void require_dense_scale(Index n, const char* what) {
    if (n > kDenseLimit)
        throw ConfigError(std::string(what) + ": dense path limited to n <= " + std::to_string(kDenseLimit));
}

/// Lower-triangular factor L, stored column-compressed.
class TriangularFactor {
public:
    using Storage = Eigen::SparseMatrix<double, Eigen::ColMajor>;

    TriangularFactor() = default;

    explicit TriangularFactor(Storage lower, bool unit_diagonal = false)
        : lower_(std::move(lower)), unit_diagonal_(unit_diagonal) {
        require_dims(lower_.rows() == lower_.cols(), "triangular factor must be square");
        lower_.makeCompressed();
        for (Index j = 0; j < lower_.outerSize(); ++j)
            for (Storage::InnerIterator it(lower_, j); it; ++it)
                if (it.row() < j) throw ConfigError("triangular factor has entries above the diagonal");
    }

    Index dim() const { return lower_.rows(); }
    bool unit_diagonal() const { return unit_diagonal_; }
    const Storage& lower() const { return lower_; }

    Index off_diagonal_nnz() const {
        Index count = 0;
        for (Index j = 0; j < lower_.outerSize(); ++j)
            for (Storage::InnerIterator it(lower_, j); it; ++it)
                if (it.row() != j && it.value() != 0.0) ++count;
        return count;
    }

    /// Solves L y = x.
    Vector solve_lower(const Vector& x) const {
        require_dims(x.size() == dim(), "triangular solve: dimension mismatch");
        Vector y = x;
        if (unit_diagonal_)
            lower_.triangularView<Eigen::UnitLower>().solveInPlace(y);
        else
            lower_.triangularView<Eigen::Lower>().solveInPlace(y);
        return y;
    }

    /// Solves L^T y = x.
    Vector solve_upper(const Vector& x) const {
        require_dims(x.size() == dim(), "triangular solve: dimension mismatch");
        Vector y = x;
        if (unit_diagonal_)
            lower_.transpose().triangularView<Eigen::UnitUpper>().solveInPlace(y);
        else
            lower_.transpose().triangularView<Eigen::Upper>().solveInPlace(y);
        return y;
    }

    Matrix to_dense() const {
        Matrix dense = Matrix(lower_);
        if (unit_diagonal_) dense.diagonal().setOnes();
        return dense;
    }

private:
    Storage lower_;
    bool unit_diagonal_ = false;
};

/// Symmetric positive (semi-)definite matrix used only through its action.
///
/// Copies share the underlying storage; the operator is immutable after construction.
class SpdOperator {
public:
    SpdOperator() = default;

    static SpdOperator dense(Matrix a) {
        require_dims(a.rows() == a.cols(), "operator must be square");
        SpdOperator op;
        op.storage_ = std::make_shared<const Matrix>(std::move(a));
        return op;
    }

    static SpdOperator sparse(SparseMatrix a) {
        require_dims(a.rows() == a.cols(), "operator must be square");
        a.makeCompressed();
        SpdOperator op;
        op.storage_ = std::make_shared<const SparseMatrix>(std::move(a));
        return op;
    }

    /// The operator x -> L^{-1} B L^{-T} x, applied as two triangular solves around one
    /// sparse product. Never materialized.
    static SpdOperator preconditioned(SparseMatrix b, TriangularFactor l) {
        require_dims(b.rows() == b.cols() && b.rows() == l.dim(), "preconditioned operator: dimension mismatch");
        b.makeCompressed();
        SpdOperator op;
        op.storage_ = Composed{std::make_shared<const SparseMatrix>(std::move(b)),
                               std::make_shared<const TriangularFactor>(std::move(l))};
        return op;
    }

    Index dim() const {
        return std::visit(
            [](const auto& s) -> Index {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, std::monostate>)
                    return 0;
                else if constexpr (std::is_same_v<T, Composed>)
                    return s.b->rows();
                else
                    return s->rows();
            },
            storage_);
    }

    /// Number of stored entries (n^2 for dense, nnz(B) + nnz(L) for the composed form).
    Index nnz() const {
        return std::visit(
            [](const auto& s) -> Index {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, std::monostate>)
                    return 0;
                else if constexpr (std::is_same_v<T, std::shared_ptr<const Matrix>>)
                    return s->size();
                else if constexpr (std::is_same_v<T, std::shared_ptr<const SparseMatrix>>)
                    return s->nonZeros();
                else
                    return s.b->nonZeros() + s.l->lower().nonZeros();
            },
            storage_);
    }

    Vector apply(const Vector& x) const {
        require_dims(x.size() == dim(), "operator apply: dimension mismatch");
        return std::visit(
            [&](const auto& s) -> Vector {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, std::monostate>)
                    return Vector();
                else if constexpr (std::is_same_v<T, Composed>)
                    return s.l->solve_lower(*s.b * s.l->solve_upper(x));
                else
                    return *s * x;
            },
            storage_);
    }

    /// Applies the operator to every column of `x`.
    Matrix apply(const Matrix& x) const {
        require_dims(x.rows() == dim(), "operator apply: dimension mismatch");
        if (auto d = dense_matrix()) return *d * x;
        Matrix y(x.rows(), x.cols());
        for (Index j = 0; j < x.cols(); ++j) y.col(j) = apply(Vector(x.col(j)));
        return y;
    }

    bool is_dense() const { return std::holds_alternative<std::shared_ptr<const Matrix>>(storage_); }

    /// Dense storage if this operator was built from a dense matrix, else nullptr.
    const Matrix* dense_matrix() const {
        auto p = std::get_if<std::shared_ptr<const Matrix>>(&storage_);
        return p ? p->get() : nullptr;
    }

    /// Sparse storage if this operator was built from a sparse matrix, else nullptr.
    const SparseMatrix* sparse_matrix() const {
        auto p = std::get_if<std::shared_ptr<const SparseMatrix>>(&storage_);
        return p ? p->get() : nullptr;
    }

    /// Materializes the operator column by column. Test scale only.
    Matrix to_dense() const {
        const Index n = dim();
        require_dense_scale(n, "SpdOperator::to_dense");
        if (auto d = dense_matrix()) return *d;
        Matrix out(n, n);
        Vector e = Vector::Zero(n);
        for (Index j = 0; j < n; ++j) {
            e[j] = 1.0;
            out.col(j) = apply(e);
            e[j] = 0.0;
        }
        return out;
    }

private:
    struct Composed {
        std::shared_ptr<const SparseMatrix> b;
        std::shared_ptr<const TriangularFactor> l;
    };

    std::variant<std::monostate, std::shared_ptr<const Matrix>, std::shared_ptr<const SparseMatrix>, Composed>
        storage_;
};

/// x^T A x.
inline double a_norm_sq(const SpdOperator& a, const Vector& x) {
    require_dims(x.size() == a.dim(), "a_norm_sq: dimension mismatch");
    return x.dot(a.apply(x));
}

/// Inner product used by Gram-Schmidt: Euclidean, or weighted by an SPD operator.
class InnerProduct {
public:
    static InnerProduct euclidean() { return InnerProduct(nullptr); }
    static InnerProduct weighted(const SpdOperator& a) { return InnerProduct(&a); }

    const SpdOperator* weight() const { return weight_; }

    /// Weight applied to x (x itself for the Euclidean product).
    Vector apply_weight(const Vector& x) const { return weight_ ? weight_->apply(x) : x; }

    double dot(const Vector& x, const Vector& y) const { return x.dot(apply_weight(y)); }

private:
    explicit InnerProduct(const SpdOperator* w) : weight_(w) {}
    const SpdOperator* weight_;
};

/// Relative size below which a Gram-Schmidt remainder counts as linearly dependent.
inline constexpr double kDependenceTol = 1e-13;

/// Removes from `v` its components along the columns of `basis` with classical
/// Gram-Schmidt applied twice. The basis columns must be orthonormal in `inner`.
///
/// The remainder is not normalized. A remainder whose norm is below
/// kDependenceTol * |v| is returned as the zero vector.
inline Vector cgs2_orthonormalize(const Eigen::Ref<const Matrix>& basis, const Vector& v,
                                  const InnerProduct& inner = InnerProduct::euclidean()) {
    require_dims(basis.cols() == 0 || basis.rows() == v.size(), "cgs2: dimension mismatch");
    if (basis.cols() == 0) return v;
    const double norm_in = std::sqrt(std::max(inner.dot(v, v), 0.0));
    if (norm_in == 0.0) return v;
    Vector w = v;
    for (int pass = 0; pass < 2; ++pass) {
        const Vector coeffs = basis.transpose() * inner.apply_weight(w);
        w.noalias() -= basis * coeffs;
    }
    const double norm_out = std::sqrt(std::max(inner.dot(w, w), 0.0));
    if (norm_out <= kDependenceTol * norm_in) return Vector::Zero(v.size());
    return w;
}

inline double symmetry_defect(const Matrix& s) {
    const double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-300);
    return (s - s.transpose()).cwiseAbs().maxCoeff() / scale;
}

/// Symmetric eigendecomposition with a symmetry check. Test-scale only.
inline Eigen::SelfAdjointEigenSolver<Matrix> symmetric_eigen(const Matrix& s, const char* what) {
    require_dims(s.rows() == s.cols(), "symmetric matrix must be square");
    require_dense_scale(s.rows(), what);
    if (s.size() > 0 && symmetry_defect(s) > 1e-10)
        throw ConfigError(std::string(what) + ": matrix is not symmetric");
    return Eigen::SelfAdjointEigenSolver<Matrix>(s);
}

/// Default eigenvalue cutoff, relative to the largest eigenvalue, for pseudo-inverses.
inline constexpr double kPseudoInverseRankTol = 1e-12;

/// Moore-Penrose inverse of a symmetric PSD matrix; eigenvalues below
/// rank_tol * lambda_max are treated as zero.
inline Matrix pseudo_inverse(const Matrix& s, double rank_tol = kPseudoInverseRankTol) {
    if (s.size() == 0) return s;
    const auto eig = symmetric_eigen(s, "pseudo_inverse");
    const Vector& lambda = eig.eigenvalues();
    const double cutoff = rank_tol * std::max(lambda.cwiseAbs().maxCoeff(), 0.0);
    Vector inv = Vector::Zero(lambda.size());
    for (Index i = 0; i < lambda.size(); ++i)
        if (std::abs(lambda[i]) > cutoff && lambda[i] != 0.0) inv[i] = 1.0 / lambda[i];
    return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

inline Vector pseudo_inverse_apply(const Matrix& s, const Vector& x, double rank_tol = kPseudoInverseRankTol) {
    require_dims(s.rows() == x.size(), "pseudo_inverse_apply: dimension mismatch");
    return pseudo_inverse(s, rank_tol) * x;
}

/// Factor F (n x r) with F F^T = |S|, the matrix absolute value of a symmetric S.
/// Eigenvalues with |lambda| <= rel_tol * max|lambda| are dropped.
inline Matrix sqrt_abs_factor(const Matrix& s, double rel_tol = 1e-14) {
    const Index n = s.rows();
    if (n == 0) return Matrix(0, 0);
    const auto eig = symmetric_eigen(s, "sqrt_abs_factor");
    const Vector& lambda = eig.eigenvalues();
    const double cutoff = rel_tol * lambda.cwiseAbs().maxCoeff();
    Index rank = 0;
    for (Index i = 0; i < n; ++i)
        if (std::abs(lambda[i]) > cutoff) ++rank;
    Matrix f(n, rank);
    Index col = 0;
    for (Index i = 0; i < n; ++i)
        if (std::abs(lambda[i]) > cutoff) f.col(col++) = eig.eigenvectors().col(i) * std::sqrt(std::abs(lambda[i]));
    return f;
}

/// Numerical rank of a dense matrix via its singular values.
inline Index numerical_rank(const Matrix& m, double rel_tol = 1e-10) {
    if (m.size() == 0) return 0;
    Eigen::JacobiSVD<Matrix> svd(m);
    const Vector& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] == 0.0) return 0;
    Index rank = 0;
    for (Index i = 0; i < sv.size(); ++i)
        if (sv[i] > rel_tol * sv[0]) ++rank;
    return rank;
}

}  // namespace bayescg
