#include "giva/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "giva/error.hpp"
#include "giva/rng.hpp"

namespace giva::linalg {

namespace {

constexpr double kJacobiTol = 1e-13;
constexpr int kMaxSweeps = 60;

void require_nonempty(const char* op, const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw DimensionError(std::string(op) + ": empty matrix");
    }
    if (!m.all_finite()) {
        throw NumericalError(std::string(op) + ": non-finite entry");
    }
}

double col_dot(const Matrix& a, index_t p, index_t q) {
    double s = 0.0;
    for (index_t i = 0; i < a.rows(); ++i) {
        s += a(i, p) * a(i, q);
    }
    return s;
}

// One-sided Jacobi on the columns of `a` (rows >= cols). Accumulates the
// right rotations into `v`, which must start as the identity. On return the
// columns of `a` are mutually orthogonal and a = U * diag(S) * V^T up to
// column normalization.
void jacobi_orthogonalize(Matrix& a, Matrix& v) {
    const index_t n = a.cols();
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (index_t p = 0; p + 1 < n; ++p) {
            for (index_t q = p + 1; q < n; ++q) {
                const double alpha = col_dot(a, p, p);
                const double beta = col_dot(a, q, q);
                const double gamma = col_dot(a, p, q);
                if (alpha == 0.0 || beta == 0.0) {
                    continue;
                }
                if (std::abs(gamma) <= kJacobiTol * std::sqrt(alpha * beta)) {
                    continue;
                }
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t =
                    (zeta >= 0.0 ? 1.0 : -1.0) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::hypot(1.0, t);
                const double s = c * t;
                for (index_t i = 0; i < a.rows(); ++i) {
                    const double ap = a(i, p);
                    const double aq = a(i, q);
                    a(i, p) = c * ap - s * aq;
                    a(i, q) = s * ap + c * aq;
                }
                for (index_t i = 0; i < v.rows(); ++i) {
                    const double vp = v(i, p);
                    const double vq = v(i, q);
                    v(i, p) = c * vp - s * vq;
                    v(i, q) = s * vp + c * vq;
                }
                rotated = true;
            }
        }
        if (!rotated) {
            return;
        }
    }
    throw NumericalError("svd_full: Jacobi iteration did not converge in " +
                         std::to_string(kMaxSweeps) + " sweeps");
}

// Fills U columns whose singular value is (numerically) zero with unit
// vectors orthogonal to the columns already present. Zero singular values
// sort last, so every column left of an unfilled one is already populated.
void complete_null_columns(Matrix& u, const std::vector<bool>& filled) {
    const index_t m = u.rows();
    const index_t k = u.cols();
    index_t candidate = 0;
    for (index_t j = 0; j < k; ++j) {
        if (filled[j]) {
            continue;
        }
        for (; candidate <= m; ++candidate) {
            if (candidate == m) {
                throw NumericalError("svd_full: failed to complete orthonormal basis");
            }
            std::vector<double> w(m, 0.0);
            w[candidate] = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                for (index_t c = 0; c < j; ++c) {
                    double dot = 0.0;
                    for (index_t i = 0; i < m; ++i) {
                        dot += w[i] * u(i, c);
                    }
                    for (index_t i = 0; i < m; ++i) {
                        w[i] -= dot * u(i, c);
                    }
                }
            }
            double norm = 0.0;
            for (double x : w) {
                norm += x * x;
            }
            norm = std::sqrt(norm);
            if (norm > 0.5) {
                for (index_t i = 0; i < m; ++i) {
                    u(i, j) = w[i] / norm;
                }
                ++candidate;
                break;
            }
        }
    }
}

SvdFactors svd_tall(const Matrix& m) {
    Matrix a = m;
    Matrix v = Matrix::identity(m.cols());
    jacobi_orthogonalize(a, v);

    const index_t k = a.cols();
    std::vector<double> norms(k);
    for (index_t j = 0; j < k; ++j) {
        norms[j] = std::sqrt(col_dot(a, j, j));
    }
    std::vector<index_t> order(k);
    std::iota(order.begin(), order.end(), index_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](index_t i, index_t j) { return norms[i] > norms[j]; });

    SvdFactors f;
    f.U = Matrix(m.rows(), k);
    f.V = Matrix(m.cols(), k);
    f.S.resize(k);
    std::vector<bool> filled(k, false);
    for (index_t out = 0; out < k; ++out) {
        const index_t src = order[out];
        f.S[out] = norms[src];
        for (index_t i = 0; i < m.cols(); ++i) {
            f.V(i, out) = v(i, src);
        }
        if (norms[src] > 0.0) {
            for (index_t i = 0; i < m.rows(); ++i) {
                f.U(i, out) = a(i, src) / norms[src];
            }
            filled[out] = true;
        }
    }
    complete_null_columns(f.U, filled);

    // Sign convention: the largest-magnitude entry of each left singular
    // vector is non-negative, which makes factorizations reproducible.
    for (index_t j = 0; j < k; ++j) {
        index_t arg = 0;
        for (index_t i = 1; i < m.rows(); ++i) {
            if (std::abs(f.U(i, j)) > std::abs(f.U(arg, j))) {
                arg = i;
            }
        }
        if (f.U(arg, j) < 0.0) {
            for (index_t i = 0; i < m.rows(); ++i) {
                f.U(i, j) = -f.U(i, j);
            }
            for (index_t i = 0; i < m.cols(); ++i) {
                f.V(i, j) = -f.V(i, j);
            }
        }
    }
    return f;
}

} // namespace

SvdFactors svd_full(const Matrix& m) {
    require_nonempty("svd_full", m);
    if (m.rows() >= m.cols()) {
        return svd_tall(m);
    }
    SvdFactors f = svd_tall(transpose(m));
    std::swap(f.U, f.V);
    return f;
}

Matrix qr_orthonormal(const Matrix& x) {
    require_nonempty("qr_orthonormal", x);
    if (x.cols() > x.rows()) {
        throw DimensionError("qr_orthonormal: more columns (" + std::to_string(x.cols()) +
                             ") than rows (" + std::to_string(x.rows()) + ")");
    }
    Matrix q = x;
    const index_t m = q.rows();
    for (index_t j = 0; j < q.cols(); ++j) {
        double pre = std::sqrt(col_dot(q, j, j));
        for (int pass = 0; pass < 2; ++pass) {
            for (index_t c = 0; c < j; ++c) {
                const double dot = col_dot(q, j, c);
                for (index_t i = 0; i < m; ++i) {
                    q(i, j) -= dot * q(i, c);
                }
            }
        }
        const double post = std::sqrt(col_dot(q, j, j));
        if (pre == 0.0 || post <= 1e-10 * pre) {
            throw DegeneracyError("qr_orthonormal: column " + std::to_string(j) +
                                  " is numerically dependent on earlier columns");
        }
        for (index_t i = 0; i < m; ++i) {
            q(i, j) /= post;
        }
    }
    return q;
}

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) {
        s += v * v;
    }
    return std::sqrt(s);
}

SvdFactors truncate_rank(const SvdFactors& f, index_t r) {
    if (r < 1 || r > f.rank_k()) {
        throw RankError("truncate_rank: r=" + std::to_string(r) + " outside [1, " +
                        std::to_string(f.rank_k()) + "]");
    }
    SvdFactors out;
    out.S.assign(f.S.begin(), f.S.begin() + static_cast<std::ptrdiff_t>(r));
    out.U = Matrix(f.U.rows(), r);
    out.V = Matrix(f.V.rows(), r);
    for (index_t i = 0; i < f.U.rows(); ++i) {
        for (index_t j = 0; j < r; ++j) {
            out.U(i, j) = f.U(i, j);
        }
    }
    for (index_t i = 0; i < f.V.rows(); ++i) {
        for (index_t j = 0; j < r; ++j) {
            out.V(i, j) = f.V(i, j);
        }
    }
    return out;
}

Matrix reconstruct(const SvdFactors& f) {
    return matmul(scale_cols(f.U, f.S), transpose(f.V));
}

namespace detail {

Matrix orthonormal_or_completed(const Matrix& x, std::uint64_t seed) {
    Matrix q = x;
    const index_t m = q.rows();
    std::uint64_t draw = 0;
    for (index_t j = 0; j < q.cols(); ++j) {
        for (int attempt = 0;; ++attempt) {
            for (int pass = 0; pass < 2; ++pass) {
                for (index_t c = 0; c < j; ++c) {
                    const double dot = col_dot(q, j, c);
                    for (index_t i = 0; i < m; ++i) {
                        q(i, j) -= dot * q(i, c);
                    }
                }
            }
            const double norm = std::sqrt(col_dot(q, j, j));
            if (norm > 1e-12) {
                for (index_t i = 0; i < m; ++i) {
                    q(i, j) /= norm;
                }
                break;
            }
            if (attempt >= 8) {
                throw NumericalError("orthonormal_or_completed: cannot extend basis");
            }
            Matrix fresh = gaussian_matrix(m, 1, mix_seed(seed, 0xc0de + draw++));
            for (index_t i = 0; i < m; ++i) {
                q(i, j) = fresh(i, 0);
            }
        }
    }
    return q;
}

} // namespace detail

SvdFactors svd_lowrank(const Matrix& m, index_t r, index_t oversample, index_t power_iters,
                       std::uint64_t seed) {
    require_nonempty("svd_lowrank", m);
    const index_t kmax = std::min(m.rows(), m.cols());
    if (r < 1 || r > kmax) {
        throw RankError("svd_lowrank: r=" + std::to_string(r) + " outside [1, " +
                        std::to_string(kmax) + "]");
    }
    const index_t l = std::min(r + oversample, kmax);

    Matrix omega = gaussian_matrix(m.cols(), l, mix_seed(seed, 1));
    Matrix q = detail::orthonormal_or_completed(matmul(m, omega), mix_seed(seed, 2));
    const Matrix mt = transpose(m);
    for (index_t it = 0; it < power_iters; ++it) {
        Matrix z = detail::orthonormal_or_completed(matmul(mt, q), mix_seed(seed, 3 + 2 * it));
        q = detail::orthonormal_or_completed(matmul(m, z), mix_seed(seed, 4 + 2 * it));
    }

    SvdFactors small = svd_full(matmul(transpose(q), m));
    SvdFactors f;
    f.U = matmul(q, small.U);
    f.S = std::move(small.S);
    f.V = std::move(small.V);
    return truncate_rank(f, r);
}

} // namespace giva::linalg
