#pragma once

// Test problem construction: prescribed-spectrum matrices A = Q D Q^T with Haar Q,
// Matrix Market systems preconditioned by a threshold incomplete Cholesky factor of a
// diagonally shifted copy, and the right-hand side b = A x*.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/QR>

#include "bayescg/errors.hpp"
#include "bayescg/io.hpp"
#include "bayescg/linalg.hpp"
#include "bayescg/random.hpp"

namespace bayescg {

/// Haar-distributed orthogonal matrix: QR of a standard Gaussian matrix with the
/// signs of R's diagonal moved into Q.
inline Matrix haar_orthogonal(Index n, Rng& rng) {
    require(n >= 1, "haar_orthogonal: n must be positive");
    const Matrix g = rng.normal_matrix(n, n);
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ() * Matrix::Identity(n, n);
    const Matrix& r = qr.matrixQR();
    for (Index j = 0; j < n; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

inline Matrix haar_orthogonal(Index n, std::uint64_t seed) {
    Rng rng(seed);
    return haar_orthogonal(n, rng);
}

/// d_i = kappa^{(i-1)/(n-1)}, i = 1..n.
inline Vector spectrum_geometric(Index n, double kappa) {
    require(n >= 2, "spectrum_geometric: n must be at least 2");
    require(kappa > 0.0, "spectrum_geometric: kappa must be positive");
    Vector d(n);
    for (Index i = 0; i < n; ++i) d[i] = std::pow(kappa, static_cast<double>(i) / static_cast<double>(n - 1));
    return d;
}

/// d_i = lam_min + (i-1)/(n-1) (lam_max - lam_min) rho^{n-i}, i = 1..n.
/// Small rho clusters eigenvalues at the lower end, which stresses CG's rounding behavior.
inline Vector spectrum_strakos(Index n, double lam_min, double lam_max, double rho) {
    require(n >= 2, "spectrum_strakos: n must be at least 2");
    require(rho > 0.0 && rho <= 1.0, "spectrum_strakos: rho must lie in (0, 1]");
    require(lam_min > 0.0 && lam_min < lam_max, "spectrum_strakos: need 0 < lam_min < lam_max");
    Vector d(n);
    for (Index i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / static_cast<double>(n - 1);
        d[i] = lam_min + t * (lam_max - lam_min) * std::pow(rho, static_cast<double>(n - 1 - i));
    }
    return d;
}

enum class ProblemKind { Prescribed, MatrixMarketPreconditioned, Explicit };
enum class SpectrumKind { Geometric, Strakos };
enum class SolutionMode { Gaussian, Ones, File };

/// Everything needed to rebuild a linear system deterministically.
struct ProblemSpec {
    ProblemKind kind = ProblemKind::Prescribed;
    Index n = 100;
    SpectrumKind spectrum = SpectrumKind::Geometric;
    double kappa = 1e3;
    double lam_min = 0.1;
    double lam_max = 1e4;
    double rho = 0.9;
    std::uint64_t seed = 1;
    SolutionMode solution = SolutionMode::Gaussian;
    std::string solution_path;
    std::string matrix_path;
    double drop_tol = 1e-6;
};

/// A x* = b together with construction metadata.
struct Problem {
    SpdOperator a;
    Vector x_star;
    Vector b;
    /// Prescribed eigenvalues and eigenvectors (prescribed-spectrum problems only).
    std::optional<Vector> eigenvalues;
    std::optional<Matrix> eigenvectors;
    /// Matrix Market problems: shift constant and off-diagonal fill of L.
    std::optional<double> shift_constant;
    std::optional<Index> factor_offdiag_nnz;
};

/// max_i { sum_{j != i} |b_ij| - b_ii }.
inline double dominance_shift_constant(const SparseMatrix& b) {
    require_dims(b.rows() == b.cols(), "dominance_shift_constant: matrix must be square");
    double worst = -std::numeric_limits<double>::infinity();
    for (Index i = 0; i < b.outerSize(); ++i) {
        double diag = 0.0, off = 0.0;
        for (SparseMatrix::InnerIterator it(b, i); it; ++it) {
            if (it.col() == i)
                diag = it.value();
            else
                off += std::abs(it.value());
        }
        worst = std::max(worst, off - diag);
    }
    return worst;
}

/// B + c diag(B).
inline SparseMatrix diagonal_shift(const SparseMatrix& b, double c) {
    require_dims(b.rows() == b.cols(), "diagonal_shift: matrix must be square");
    SparseMatrix out = b;
    for (Index i = 0; i < out.rows(); ++i) {
        const double d = b.coeff(i, i);
        if (d == 0.0) throw BreakdownError("diagonal_shift: zero diagonal entry", i);
        out.coeffRef(i, i) = d + c * d;
    }
    out.makeCompressed();
    return out;
}

/// Row-wise weak diagonal dominance: |b_ii| >= sum_{j != i} |b_ij| (relative slack 1e-12).
inline bool is_diagonally_dominant(const SparseMatrix& b) {
    for (Index i = 0; i < b.outerSize(); ++i) {
        double diag = 0.0, off = 0.0;
        for (SparseMatrix::InnerIterator it(b, i); it; ++it) {
            if (it.col() == i)
                diag = std::abs(it.value());
            else
                off += std::abs(it.value());
        }
        if (diag < off * (1.0 - 1e-12)) return false;
    }
    return true;
}

/// Threshold incomplete Cholesky, left-looking by columns.
///
/// Column j is formed from B(j:n, j) minus the contributions of retained columns
/// k < j with L(j, k) != 0. Off-diagonal entries with |l_ij| < drop_tol * |B(:, j)|_2
/// are dropped; drop_tol = 0 yields the complete factor.
inline TriangularFactor incomplete_cholesky_threshold(const SparseMatrix& b, double drop_tol) {
    require_dims(b.rows() == b.cols(), "incomplete_cholesky_threshold: matrix must be square");
    require(drop_tol >= 0.0, "incomplete_cholesky_threshold: drop tolerance must be non-negative");
    const Index n = b.rows();

    struct Entry {
        Index index;
        double value;
    };
    std::vector<std::vector<Entry>> columns(static_cast<std::size_t>(n));  // rows >= j, sorted
    std::vector<std::vector<Entry>> rows(static_cast<std::size_t>(n));     // (k, L(i,k)) for k < i
    Vector work = Vector::Zero(n);
    std::vector<char> marked(static_cast<std::size_t>(n), 0);
    std::vector<Index> pattern;

    auto touch = [&](Index i) {
        if (!marked[static_cast<std::size_t>(i)]) {
            marked[static_cast<std::size_t>(i)] = 1;
            pattern.push_back(i);
        }
    };

    for (Index j = 0; j < n; ++j) {
        pattern.clear();
        double col_norm_sq = 0.0;
        // B is symmetric, so row j supplies column j.
        for (SparseMatrix::InnerIterator it(b, j); it; ++it) {
            col_norm_sq += it.value() * it.value();
            if (it.col() >= j) {
                work[it.col()] += it.value();
                touch(it.col());
            }
        }
        touch(j);
        for (const Entry& ljk : rows[static_cast<std::size_t>(j)]) {
            const auto& col_k = columns[static_cast<std::size_t>(ljk.index)];
            auto start = std::lower_bound(col_k.begin(), col_k.end(), j,
                                          [](const Entry& e, Index row) { return e.index < row; });
            for (auto it = start; it != col_k.end(); ++it) {
                work[it->index] -= it->value * ljk.value;
                touch(it->index);
            }
        }

        const double pivot = work[j];
        if (!(pivot > 0.0)) throw BreakdownError("incomplete Cholesky: non-positive pivot", j);
        const double diag = std::sqrt(pivot);
        const double threshold = drop_tol * std::sqrt(col_norm_sq);

        std::sort(pattern.begin(), pattern.end());
        auto& col_j = columns[static_cast<std::size_t>(j)];
        col_j.push_back({j, diag});
        for (Index i : pattern) {
            if (i > j) {
                const double value = work[i] / diag;
                if (value != 0.0 && std::abs(value) >= threshold) {
                    col_j.push_back({i, value});
                    rows[static_cast<std::size_t>(i)].push_back({j, value});
                }
            }
            work[i] = 0.0;
            marked[static_cast<std::size_t>(i)] = 0;
        }
    }

    std::vector<Eigen::Triplet<double>> triplets;
    for (Index j = 0; j < n; ++j)
        for (const Entry& e : columns[static_cast<std::size_t>(j)]) triplets.emplace_back(e.index, j, e.value);
    TriangularFactor::Storage l(n, n);
    l.setFromTriplets(triplets.begin(), triplets.end());
    return TriangularFactor(std::move(l));
}

namespace detail {

inline Vector solution_for(const ProblemSpec& spec, Index n, Rng& rng, const Matrix* q, const Vector* d) {
    switch (spec.solution) {
        case SolutionMode::Ones:
            return Vector::Ones(n);
        case SolutionMode::File: {
            Vector x = load_vector(spec.solution_path);
            require_dims(x.size() == n, "solution file length does not match the matrix dimension");
            return x;
        }
        case SolutionMode::Gaussian: {
            if (!q || !d) throw ConfigError("Gaussian solutions require a prescribed-spectrum problem");
            // x* ~ N(0, A^{-1}) with A^{-1} = (Q D^{-1/2})(Q D^{-1/2})^T.
            const Vector z = rng.normal_vector(n);
            return *q * (d->cwiseSqrt().cwiseInverse().asDiagonal() * z);
        }
    }
    throw ConfigError("unknown solution mode");
}

}  // namespace detail

/// A = Q D Q^T with Haar Q drawn from spec.seed.
inline Problem assemble_prescribed(const ProblemSpec& spec) {
    require(spec.kind == ProblemKind::Prescribed, "assemble_prescribed: wrong problem kind");
    const Vector d = spec.spectrum == SpectrumKind::Geometric
                         ? spectrum_geometric(spec.n, spec.kappa)
                         : spectrum_strakos(spec.n, spec.lam_min, spec.lam_max, spec.rho);
    Rng root(spec.seed);
    Rng q_stream = root.split(0);
    Rng x_stream = root.split(1);
    Matrix q = haar_orthogonal(spec.n, q_stream);
    Matrix a = q * d.asDiagonal() * q.transpose();
    a = 0.5 * (a + a.transpose()).eval();

    Problem p;
    p.x_star = detail::solution_for(spec, spec.n, x_stream, &q, &d);
    p.a = SpdOperator::dense(std::move(a));
    p.b = p.a.apply(p.x_star);
    p.eigenvalues = d;
    p.eigenvectors = std::move(q);
    return p;
}

/// A = L^{-1} B L^{-T} where L is the threshold incomplete Cholesky factor of
/// B + c diag(B), c = dominance_shift_constant(B).
inline Problem assemble_preconditioned(SparseMatrix b, const ProblemSpec& spec) {
    double c = dominance_shift_constant(b);
    SparseMatrix shifted = diagonal_shift(b, c);
    if (!is_diagonally_dominant(shifted)) {
        // The additive constant is not scale-invariant; fall back to the smallest
        // multiplicative shift that makes every row dominant.
        double ratio = 0.0;
        for (Index i = 0; i < b.outerSize(); ++i) {
            double diag = 0.0, off = 0.0;
            for (SparseMatrix::InnerIterator it(b, i); it; ++it) {
                if (it.col() == i)
                    diag = it.value();
                else
                    off += std::abs(it.value());
            }
            if (diag <= 0.0) throw BreakdownError("preconditioning: non-positive diagonal entry", i);
            ratio = std::max(ratio, off / diag - 1.0);
        }
        c = ratio;
        shifted = diagonal_shift(b, c);
    }
    TriangularFactor l = incomplete_cholesky_threshold(shifted, spec.drop_tol);

    Problem p;
    p.shift_constant = c;
    p.factor_offdiag_nnz = l.off_diagonal_nnz();
    const Index n = b.rows();
    p.a = SpdOperator::preconditioned(std::move(b), std::move(l));
    Rng rng(spec.seed);
    p.x_star = detail::solution_for(spec, n, rng, nullptr, nullptr);
    p.b = p.a.apply(p.x_star);
    return p;
}

inline Problem build_problem(const ProblemSpec& spec) {
    switch (spec.kind) {
        case ProblemKind::Prescribed:
            return assemble_prescribed(spec);
        case ProblemKind::MatrixMarketPreconditioned:
            return assemble_preconditioned(load_matrix_market(spec.matrix_path), spec);
        case ProblemKind::Explicit: {
            SparseMatrix m = load_matrix_market(spec.matrix_path);
            Problem p;
            const Index n = m.rows();
            p.a = SpdOperator::sparse(std::move(m));
            Rng rng(spec.seed);
            p.x_star = detail::solution_for(spec, n, rng, nullptr, nullptr);
            p.b = p.a.apply(p.x_star);
            return p;
        }
    }
    throw ConfigError("unknown problem kind");
}

}  // namespace bayescg
