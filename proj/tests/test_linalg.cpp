// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include <doctest.h>

#include "ckpd/errors.hpp"
#include "ckpd/linalg.hpp"
#include "ckpd/matrix.hpp"
#include "oracles.hpp"

using namespace ckpd;

namespace {

double orthonormality_error(const Matrix& q, bool columns) {
    const Matrix g = columns ? matmul(transpose(q), q) : matmul(q, transpose(q));
    return max_abs_difference(g, Matrix::identity(g.rows()));
}

Matrix reconstruct(const SvdResult& f) {
    Matrix us = f.u;
    for (std::size_t i = 0; i < us.rows(); ++i)
        for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= f.s[j];
    return matmul(us, f.vt);
}

void check_svd_invariants(const Matrix& m) {
    const SvdResult f = svd(m);
    const std::size_t r = std::min(m.rows(), m.cols());
    REQUIRE(f.u.rows() == m.rows());
    REQUIRE(f.u.cols() == r);
    REQUIRE(f.vt.rows() == r);
    REQUIRE(f.vt.cols() == m.cols());
    for (std::size_t i = 0; i + 1 < r; ++i) CHECK(f.s[i] >= f.s[i + 1]);
    CHECK(f.s.back() >= 0.0);
    CHECK(orthonormality_error(f.u, true) <= 1e-10);
    CHECK(orthonormality_error(f.vt, false) <= 1e-10);
    CHECK(oracle::frob(subtract(reconstruct(f), m)) / std::max(oracle::frob(m), 1e-30) <= 1e-10);
    for (std::size_t j = 0; j < r; ++j) {
        for (std::size_t i = 0; i < f.u.rows(); ++i) {
            if (std::abs(f.u(i, j)) > 1e-12) {
                CHECK(f.u(i, j) > 0.0);
                break;
            }
        }
    }
}

}  // namespace

TEST_CASE("matrix construction rejects bad data") {
    CHECK_THROWS_AS(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
    CHECK_THROWS_AS(Matrix(1, 2, {1.0, std::numeric_limits<double>::quiet_NaN()}), NumericalFailure);
    CHECK_THROWS_AS(Matrix(1, 1, {std::numeric_limits<double>::infinity()}), NumericalFailure);
    CHECK_THROWS_AS(Matrix::from_rows({{1.0, 2.0}, {3.0}}), ShapeError);
}

TEST_CASE("identity times A is A") {
    const Matrix a = Matrix::from_rows({{1, 2, 3}, {4, 5, 6}});
    CHECK(matmul(Matrix::identity(2), a) == a);
}

TEST_CASE("frobenius norm of diag(3,4)") {
    const Vector d{3.0, 4.0};
    CHECK(frobenius_norm(Matrix::diagonal(d)) == doctest::Approx(5.0).epsilon(1e-15));
}

TEST_CASE("transpose of a product") {
    std::mt19937_64 rng(3);
    const Matrix a = oracle::random_matrix(3, 4, rng);
    const Matrix b = oracle::random_matrix(4, 2, rng);
    const Matrix lhs = transpose(matmul(a, b));
    const Matrix rhs = matmul(transpose(b), transpose(a));
    CHECK(oracle::max_abs(lhs, rhs) <= 1e-14);
    CHECK(oracle::max_abs(matmul(a, b), oracle::naive_matmul(a, b)) <= 1e-14);
}

TEST_CASE("kernel shape errors") {
    const Matrix a(2, 3), b(2, 3);
    CHECK_THROWS_AS(matmul(a, b), ShapeError);
    CHECK_THROWS_AS(add(a, Matrix(3, 2)), ShapeError);
    CHECK_THROWS_AS(matvec(a, Vector(2)), ShapeError);
    CHECK_THROWS_AS(matvec_transposed(a, Vector(3)), ShapeError);
    CHECK_THROWS_AS(add_scaled_identity(a, 1.0), ShapeError);
    CHECK_THROWS_AS(dot(Vector(2), Vector(3)), ShapeError);
}

TEST_CASE("matvec_transposed agrees with explicit transpose") {
    std::mt19937_64 rng(5);
    const Matrix a = oracle::random_matrix(5, 3, rng);
    const Vector x = oracle::random_vector(5, rng);
    const Vector lhs = matvec_transposed(a, x);
    const Vector rhs = matvec(transpose(a), x);
    for (std::size_t i = 0; i < lhs.size(); ++i) CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-14));
}

TEST_CASE("norm2 does not overflow on huge entries") {
    const Vector v{1e300, 1e300};
    CHECK(norm2(v) == doctest::Approx(std::sqrt(2.0) * 1e300));
}

TEST_CASE("matrix text format round-trips exactly") {
    std::mt19937_64 rng(11);
    const Matrix m = oracle::random_matrix(4, 3, rng, 1e5);
    std::stringstream ss;
    write_matrix(ss, m);
    CHECK(read_matrix(ss) == m);
}

TEST_CASE("matrix reader rejects malformed input") {
    {
        std::stringstream ss("NOPE v1 1 1\n1\n");
        CHECK_THROWS_AS(read_matrix(ss), FormatError);
    }
    {
        std::stringstream ss("CKPD-MAT v1 2 2\n1 2\n3\n");
        CHECK_THROWS_AS(read_matrix(ss), FormatError);
    }
    {
        std::stringstream ss("CKPD-MAT v1 1 1\n1\n2\n");
        CHECK_THROWS_AS(read_matrix(ss), FormatError);
    }
    {
        std::stringstream ss("CKPD-MAT v1 1 1\nnan\n");
        CHECK_THROWS(read_matrix(ss));
    }
    CHECK_THROWS_AS(load_matrix("/nonexistent/path.mat"), FormatError);
}

TEST_CASE("svd of a diagonal matrix") {
    const Vector d{3.0, 2.0, 1.0};
    const SvdResult f = svd(Matrix::diagonal(d));
    CHECK(f.s == Vector{3.0, 2.0, 1.0});
    CHECK(oracle::max_abs(f.u, Matrix::identity(3)) == 0.0);
    CHECK(oracle::max_abs(f.vt, Matrix::identity(3)) == 0.0);
}

TEST_CASE("svd of the zero matrix") {
    const SvdResult f = svd(Matrix(2, 2));
    CHECK(f.s == Vector{0.0, 0.0});
    CHECK(orthonormality_error(f.u, true) <= 1e-12);
    CHECK(orthonormality_error(f.vt, false) <= 1e-12);
}

TEST_CASE("svd of a seeded 4x6 matrix against the eigen oracle") {
    std::mt19937_64 rng(7);
    const Matrix m = oracle::random_matrix(4, 6, rng);
    check_svd_invariants(m);
    const Vector expected = oracle::singular_values(m);
    const SvdResult f = svd(m);
    for (std::size_t i = 0; i < 4; ++i) CHECK(f.s[i] == doctest::Approx(expected[i]).epsilon(1e-12));
}

TEST_CASE("svd invariants over random shapes") {
    std::mt19937_64 rng(2026);
    std::uniform_int_distribution<std::size_t> dim(1, 24);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t r = dim(rng), c = dim(rng);
        Matrix m = oracle::random_matrix(r, c, rng);
        if (trial % 3 == 0 && r > 1 && c > 1) {
            // rank-deficient: duplicate the first row
            for (std::size_t j = 0; j < c; ++j) m(r - 1, j) = m(0, j);
        }
        CAPTURE(r);
        CAPTURE(c);
        check_svd_invariants(m);
    }
}

TEST_CASE("svd handles a 64x64 matrix with a tiny singular value") {
    std::mt19937_64 rng(9);
    Matrix m = oracle::random_matrix(64, 64, rng);
    for (std::size_t j = 0; j < 64; ++j) m(63, j) = m(62, j) + 1e-13 * m(0, j);
    check_svd_invariants(m);
}

TEST_CASE("svd is bit-deterministic") {
    std::mt19937_64 rng(13);
    const Matrix m = oracle::random_matrix(10, 7, rng);
    const SvdResult a = svd(m), b = svd(m);
    CHECK(a.u == b.u);
    CHECK(a.s == b.s);
    CHECK(a.vt == b.vt);
}

TEST_CASE("spectral norm") {
    const Vector d{3.0, 2.0};
    CHECK(spectral_norm(Matrix::diagonal(d)) == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(spectral_norm(Matrix::identity(3)) == doctest::Approx(1.0).epsilon(1e-15));
    std::mt19937_64 rng(17);
    const Matrix m = oracle::random_matrix(5, 5, rng);
    CHECK(spectral_norm(m) == svd(m).s[0]);
    CHECK(spectral_norm(m) == doctest::Approx(oracle::singular_values(m)[0]).epsilon(1e-9));
}

TEST_CASE("plain inverse of 2I") {
    const RegularizedInverse r = regularized_inverse(scaled(Matrix::identity(2), 2.0));
    CHECK(oracle::max_abs(r.inverse, scaled(Matrix::identity(2), 0.5)) <= 1e-15);
    CHECK(r.lambda_final == 0.0);
    CHECK(r.doublings == 0);
}

TEST_CASE("singular covariance follows the doubling schedule") {
    const Matrix sigma = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}});
    const RegularizationConfig cfg{1e-6, 1e-3, 40};
    const RegularizedInverse r = regularized_inverse(sigma, cfg);

    // Independent replay: Σ̃ is diagonal so its inverse is exact up to one
    // rounding per entry; accept the first λ whose residual passes.
    double expected = -1.0;
    for (int d = 0; d <= 40; ++d) {
        const double lambda = cfg.lambda0 * std::ldexp(1.0, d);
        const double a = 1.0 + 0.5 * lambda, b = 0.5 * lambda;
        const double res = std::max(std::abs(a * (1.0 / a) - 1.0), std::abs(b * (1.0 / b) - 1.0));
        if (res <= cfg.threshold) {
            expected = lambda;
            break;
        }
    }
    CHECK(r.lambda_final == expected);
    CHECK(r.lambda_final == cfg.lambda0 * std::ldexp(1.0, static_cast<int>(r.doublings)));
    CHECK(r.sigma_tilde(0, 0) == doctest::Approx(1.0 + 0.5 * expected).epsilon(1e-15));
    CHECK(r.sigma_tilde(1, 1) == doctest::Approx(0.5 * expected).epsilon(1e-15));
}

TEST_CASE("rank-one covariance is regularized until the check passes") {
    const double h = 1.0 / std::sqrt(2.0);
    const Matrix sigma = Matrix::from_rows({{h * h, h * h}, {h * h, h * h}});
    const RegularizedInverse r = regularized_inverse(sigma);
    CHECK(r.lambda_final > 0.0);
    CHECK(inverse_residual(r.sigma_tilde, r.inverse) <= 1e-3);
}

TEST_CASE("regularized inverse error paths") {
    CHECK_THROWS_AS(regularized_inverse(Matrix::from_rows({{1.0, 2.0}, {0.0, 1.0}})), NotSymmetric);
    CHECK_THROWS_AS(regularized_inverse(Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(regularized_inverse(Matrix(2, 2)), DegenerateCovariance);
    // λ so small that every inverse overflows within the doubling budget
    const Matrix sigma = Matrix::from_rows({{1.0, 0.0}, {0.0, 0.0}});
    CHECK_THROWS_AS(regularized_inverse(sigma, 1e-320, 1e-3, 3), RegularizationFailure);
}

TEST_CASE("regularized inverse postcondition over random PSD matrices") {
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<std::size_t> dim(2, 32);
    int regularized = 0;
    for (int trial = 0; trial < 80; ++trial) {
        const std::size_t n = dim(rng);
        const std::size_t m = trial % 2 == 0 ? n + 5 : std::max<std::size_t>(1, n / 3);
        const Matrix f = oracle::random_matrix(n, m, rng);
        const Matrix sigma = oracle::outer_product_covariance(f);
        const RegularizedInverse r = regularized_inverse(sigma);
        CHECK(inverse_residual(r.sigma_tilde, r.inverse) <= 1e-3);
        if (r.lambda_final > 0.0) {
            ++regularized;
            CHECK(r.lambda_final == 1e-6 * std::ldexp(1.0, static_cast<int>(r.doublings)));
        } else {
            CHECK(r.sigma_tilde == sigma);
        }
    }
    CHECK(regularized >= 30);
}
