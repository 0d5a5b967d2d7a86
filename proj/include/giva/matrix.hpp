#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "giva/error.hpp"

namespace giva {

using index_t = std::size_t;

/// Dense row-major matrix of doubles. The only tensor type in the library;
/// vectors are std::vector<double> or 1-column matrices depending on context.
class Matrix {
public:
    Matrix() = default;
    Matrix(index_t rows, index_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}
    Matrix(index_t rows, index_t cols, double fill);

    /// Takes ownership of `data` (row-major, rows*cols entries). Rejects
    /// non-finite entries and size mismatches.
    static Matrix from_data(index_t rows, index_t cols, std::vector<double> data);
    static Matrix identity(index_t n);

    index_t rows() const { return rows_; }
    index_t cols() const { return cols_; }
    index_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double& operator()(index_t i, index_t j) { return data_[i * cols_ + j]; }
    double operator()(index_t i, index_t j) const { return data_[i * cols_ + j]; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool all_finite() const;

private:
    index_t rows_ = 0;
    index_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& m);
Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& m, double s);

/// diag(s) * m, i.e. row i scaled by s[i].
Matrix scale_rows(std::span<const double> s, const Matrix& m);
/// m * diag(s), i.e. column j scaled by s[j].
Matrix scale_cols(const Matrix& m, std::span<const double> s);

double max_abs(const Matrix& m);
double max_abs_diff(const Matrix& a, const Matrix& b);

} // namespace giva
