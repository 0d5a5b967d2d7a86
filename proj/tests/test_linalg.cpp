#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "giva/linalg.hpp"
#include "giva/rng.hpp"

using giva::Matrix;
namespace linalg = giva::linalg;

namespace {

Matrix diag3(double a, double b, double c) {
    Matrix m(3, 3);
    m(0, 0) = a;
    m(1, 1) = b;
    m(2, 2) = c;
    return m;
}

double gram_residual(const Matrix& q) {
    Matrix g = matmul(transpose(q), q);
    double worst = 0.0;
    for (giva::index_t i = 0; i < g.rows(); ++i) {
        for (giva::index_t j = 0; j < g.cols(); ++j) {
            worst = std::max(worst, std::abs(g(i, j) - (i == j ? 1.0 : 0.0)));
        }
    }
    return worst;
}

} // namespace

TEST_SUITE("linalg") {

TEST_CASE("svd_full of a diagonal matrix reads off the diagonal") {
    auto f = linalg::svd_full(diag3(3, 2, 1));
    REQUIRE(f.S.size() == 3);
    CHECK(f.S[0] == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(f.S[1] == doctest::Approx(2.0).epsilon(1e-13));
    CHECK(f.S[2] == doctest::Approx(1.0).epsilon(1e-13));
    // U and V are the identity up to column sign; the sign convention pins
    // the largest entry of each U column to be non-negative.
    CHECK(giva::max_abs_diff(f.U, Matrix::identity(3)) < 1e-12);
    CHECK(giva::max_abs_diff(f.V, Matrix::identity(3)) < 1e-12);
}

TEST_CASE("svd_full of the zero matrix") {
    auto f = linalg::svd_full(Matrix(4, 3));
    REQUIRE(f.S.size() == 3);
    for (double s : f.S) CHECK(s == 0.0);
    CHECK(f.U.rows() == 4);
    CHECK(f.V.rows() == 3);
    CHECK(gram_residual(f.U) < 1e-12);
    CHECK(gram_residual(f.V) < 1e-12);
}

TEST_CASE("svd_full reconstructs a random rectangular matrix") {
    for (auto [m, d] : {std::pair<giva::index_t, giva::index_t>{16, 12}, {12, 16}, {9, 9}}) {
        Matrix x = giva::gaussian_matrix(m, d, giva::mix_seed(41, m * 100 + d));
        auto f = linalg::svd_full(x);
        REQUIRE(f.S.size() == std::min(m, d));
        CHECK(giva::max_abs_diff(linalg::reconstruct(f), x) < 1e-9);
        CHECK(gram_residual(f.U) < 1e-10);
        CHECK(gram_residual(f.V) < 1e-10);
        for (std::size_t i = 0; i + 1 < f.S.size(); ++i) {
            CHECK(f.S[i] >= f.S[i + 1]);
            CHECK(f.S[i + 1] >= 0.0);
        }
    }
}

TEST_CASE("svd_full rejects empty input") {
    CHECK_THROWS_AS(linalg::svd_full(Matrix()), giva::DimensionError);
}

TEST_CASE("svd_lowrank recovers a known spectrum") {
    Matrix m(4, 4);
    m(0, 0) = 10;
    m(1, 1) = 5;
    m(2, 2) = 1;
    m(3, 3) = 0.1;
    auto f = linalg::svd_lowrank(m, 2);
    REQUIRE(f.S.size() == 2);
    CHECK(std::abs(f.S[0] - 10.0) / 10.0 < 1e-6);
    CHECK(std::abs(f.S[1] - 5.0) / 5.0 < 1e-6);
}

TEST_CASE("svd_lowrank nails an exactly rank-3 product") {
    Matrix x = giva::gaussian_matrix(32, 3, 7001);
    Matrix y = giva::gaussian_matrix(24, 3, 7002);
    Matrix m = matmul(x, transpose(y));
    auto f = linalg::svd_lowrank(m, 3);
    CHECK(linalg::frobenius_norm(sub(m, linalg::reconstruct(f))) < 1e-8);
    CHECK(gram_residual(f.U) < 1e-10);
    CHECK(gram_residual(f.V) < 1e-10);
}

TEST_CASE("svd_lowrank is bitwise deterministic for a fixed seed") {
    Matrix m = giva::gaussian_matrix(20, 14, 555);
    auto a = linalg::svd_lowrank(m, 4, 8, 4, 99);
    auto b = linalg::svd_lowrank(m, 4, 8, 4, 99);
    CHECK(std::memcmp(a.U.data().data(), b.U.data().data(), a.U.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(a.V.data().data(), b.V.data().data(), a.V.size() * sizeof(double)) == 0);
    CHECK(a.S == b.S);
}

TEST_CASE("svd_lowrank range checks r") {
    Matrix m = giva::gaussian_matrix(6, 4, 1);
    CHECK_THROWS_AS(linalg::svd_lowrank(m, 0), giva::RankError);
    CHECK_THROWS_AS(linalg::svd_lowrank(m, 5), giva::RankError);
}

TEST_CASE("qr_orthonormal basics") {
    CHECK(giva::max_abs_diff(linalg::qr_orthonormal(Matrix::identity(3)),
                             Matrix::identity(3)) < 1e-14);

    Matrix x = Matrix::from_data(3, 2, {1, 0, 1, 0, 0, 1});
    Matrix q = linalg::qr_orthonormal(x);
    CHECK(gram_residual(q) < 1e-10);

    // Idempotence up to signs: re-orthonormalizing changes nothing measurable.
    Matrix q2 = linalg::qr_orthonormal(q);
    CHECK(giva::max_abs_diff(matmul(transpose(q2), q2), matmul(transpose(q), q)) < 1e-12);
}

TEST_CASE("qr_orthonormal rejects duplicated columns") {
    Matrix x = Matrix::from_data(3, 2, {1, 1, 2, 2, 3, 3});
    CHECK_THROWS_AS(linalg::qr_orthonormal(x), giva::DegeneracyError);
}

TEST_CASE("frobenius_norm") {
    CHECK(linalg::frobenius_norm(Matrix::from_data(1, 2, {3, 4})) == doctest::Approx(5.0));
    CHECK(linalg::frobenius_norm(Matrix(3, 2)) == 0.0);

    Matrix m = giva::gaussian_matrix(8, 8, 17);
    Matrix g = matmul(transpose(m), m);
    double tr = 0.0;
    for (giva::index_t i = 0; i < 8; ++i) tr += g(i, i);
    CHECK(std::abs(linalg::frobenius_norm(m) - std::sqrt(tr)) < 1e-12);
}

TEST_CASE("truncate_rank") {
    auto f = linalg::svd_full(diag3(3, 2, 1));
    auto t1 = linalg::truncate_rank(f, 1);
    CHECK(giva::max_abs_diff(linalg::reconstruct(t1), diag3(3, 0, 0)) < 1e-12);

    auto t3 = linalg::truncate_rank(f, 3);
    CHECK(giva::max_abs_diff(linalg::reconstruct(t3), diag3(3, 2, 1)) < 1e-9);

    auto t2 = linalg::truncate_rank(f, 2);
    CHECK(linalg::frobenius_norm(sub(linalg::reconstruct(t2), diag3(3, 2, 1))) ==
          doctest::Approx(1.0).epsilon(1e-12));

    CHECK_THROWS_AS(linalg::truncate_rank(f, 4), giva::RankError);
    CHECK_THROWS_AS(linalg::truncate_rank(f, 0), giva::RankError);
}

TEST_CASE("eckart-young identity holds for a random matrix") {
    Matrix m = giva::gaussian_matrix(14, 10, 2024);
    auto f = linalg::svd_full(m);
    for (giva::index_t r : {1, 3, 7}) {
        double tail = 0.0;
        for (std::size_t i = r; i < f.S.size(); ++i) tail += f.S[i] * f.S[i];
        double err = linalg::frobenius_norm(sub(m, linalg::reconstruct(linalg::truncate_rank(f, r))));
        CHECK(std::abs(err - std::sqrt(tail)) <= 1e-9 * std::max(1.0, std::sqrt(tail)));
    }
}

TEST_CASE("orthonormal_or_completed fills degenerate directions") {
    Matrix x = Matrix::from_data(4, 3, {1, 1, 0, 1, 1, 0, 0, 0, 1, 0, 0, 0});
    Matrix q = linalg::detail::orthonormal_or_completed(x, 12345);
    CHECK(q.cols() == 3);
    CHECK(gram_residual(q) < 1e-10);
}

} // TEST_SUITE
