#include "giva/matrix.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace giva {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const char* op, const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a) + " vs " +
                             shape_str(b));
    }
}

} // namespace

Matrix::Matrix(index_t rows, index_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {
    if (!std::isfinite(fill)) {
        throw NumericalError("Matrix: non-finite fill value");
    }
}

Matrix Matrix::from_data(index_t rows, index_t cols, std::vector<double> data) {
    if (data.size() != rows * cols) {
        throw DimensionError("Matrix::from_data: got " + std::to_string(data.size()) +
                             " values for shape " + std::to_string(rows) + "x" +
                             std::to_string(cols));
    }
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    m.data_ = std::move(data);
    if (!m.all_finite()) {
        throw NumericalError("Matrix::from_data: non-finite entry");
    }
    return m;
}

Matrix Matrix::identity(index_t n) {
    Matrix m(n, n);
    for (index_t i = 0; i < n; ++i) {
        m(i, i) = 1.0;
    }
    return m;
}

bool Matrix::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    return true;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: inner dimensions " + shape_str(a) + " * " + shape_str(b));
    }
    Matrix out(a.rows(), b.cols());
    // i-k-j loop order keeps the inner loop contiguous in both b and out.
    for (index_t i = 0; i < a.rows(); ++i) {
        for (index_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) {
                continue;
            }
            for (index_t j = 0; j < b.cols(); ++j) {
                out(i, j) += aik * b(k, j);
            }
        }
    }
    return out;
}

Matrix transpose(const Matrix& m) {
    Matrix out(m.cols(), m.rows());
    for (index_t i = 0; i < m.rows(); ++i) {
        for (index_t j = 0; j < m.cols(); ++j) {
            out(j, i) = m(i, j);
        }
    }
    return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
    require_same_shape("add", a, b);
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (index_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
    return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
    require_same_shape("sub", a, b);
    Matrix out = a;
    auto dst = out.data();
    auto src = b.data();
    for (index_t i = 0; i < dst.size(); ++i) {
        dst[i] -= src[i];
    }
    return out;
}

Matrix scaled(const Matrix& m, double s) {
    Matrix out = m;
    for (double& v : out.data()) {
        v *= s;
    }
    return out;
}

Matrix scale_rows(std::span<const double> s, const Matrix& m) {
    if (s.size() != m.rows()) {
        throw DimensionError("scale_rows: " + std::to_string(s.size()) + " scales for " +
                             std::to_string(m.rows()) + " rows");
    }
    Matrix out = m;
    for (index_t i = 0; i < m.rows(); ++i) {
        for (index_t j = 0; j < m.cols(); ++j) {
            out(i, j) *= s[i];
        }
    }
    return out;
}

Matrix scale_cols(const Matrix& m, std::span<const double> s) {
    if (s.size() != m.cols()) {
        throw DimensionError("scale_cols: " + std::to_string(s.size()) + " scales for " +
                             std::to_string(m.cols()) + " columns");
    }
    Matrix out = m;
    for (index_t i = 0; i < m.rows(); ++i) {
        for (index_t j = 0; j < m.cols(); ++j) {
            out(i, j) *= s[j];
        }
    }
    return out;
}

double max_abs(const Matrix& m) {
    double best = 0.0;
    for (double v : m.data()) {
        best = std::max(best, std::abs(v));
    }
    return best;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
    require_same_shape("max_abs_diff", a, b);
    double best = 0.0;
    auto pa = a.data();
    auto pb = b.data();
    for (index_t i = 0; i < pa.size(); ++i) {
        best = std::max(best, std::abs(pa[i] - pb[i]));
    }
    return best;
}

} // namespace giva
