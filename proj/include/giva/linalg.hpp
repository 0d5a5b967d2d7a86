#pragma once

#include <cstdint>
#include <vector>

#include "giva/matrix.hpp"

namespace giva::linalg {

/// Thin SVD: M = U * diag(S) * V^T with U (m x k), V (d x k), k = min(m, d)
/// unless truncated. Singular values are sorted descending and non-negative.
struct SvdFactors {
    Matrix U;
    std::vector<double> S;
    Matrix V;

    index_t rank_k() const { return S.size(); }
};

/// Exact thin SVD via one-sided Jacobi rotations. Deterministic.
/// Designed for desk-scale matrices (hundreds of rows/columns).
SvdFactors svd_full(const Matrix& m);

/// Randomized truncated SVD with Gaussian sketching and power iteration.
/// Deterministic for a fixed seed. Returns exactly r factors.
SvdFactors svd_lowrank(const Matrix& m, index_t r, index_t oversample = 8,
                       index_t power_iters = 4, std::uint64_t seed = 0);

/// Orthonormalizes the columns of x (modified Gram-Schmidt, two passes).
/// Throws DegeneracyError naming the first column that is numerically
/// dependent on its predecessors.
Matrix qr_orthonormal(const Matrix& x);

double frobenius_norm(const Matrix& m);

/// Keeps the r leading factors. r must be in [1, rank_k()].
SvdFactors truncate_rank(const SvdFactors& f, index_t r);

/// U * diag(S) * V^T.
Matrix reconstruct(const SvdFactors& f);

} // namespace giva::linalg

namespace giva::linalg::detail {

/// Gram-Schmidt that replaces degenerate columns with random directions
/// instead of throwing; always returns a full orthonormal basis. Internal
/// building block for the randomized SVD range finder.
Matrix orthonormal_or_completed(const Matrix& x, std::uint64_t seed);

} // namespace giva::linalg::detail
