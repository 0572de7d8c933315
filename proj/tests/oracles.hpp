// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

// Reference implementations used only by the tests. Nothing here calls the
// library's numerical kernels beyond the Matrix container itself.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <random>
#include <utility>
#include <vector>

#include "ckpd/matrix.hpp"

namespace oracle {

using ckpd::Matrix;
using ckpd::Vector;

inline Matrix naive_matmul(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < b.cols(); ++j) {
            long double acc = 0.0L;
            for (std::size_t k = 0; k < a.cols(); ++k) acc += static_cast<long double>(a(i, k)) * b(k, j);
            out(i, j) = static_cast<double>(acc);
        }
    return out;
}

inline Matrix naive_transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

inline double frob(const Matrix& a) {
    long double acc = 0.0L;
    for (double v : a.data()) acc += static_cast<long double>(v) * v;
    return static_cast<double>(std::sqrt(acc));
}

inline double max_abs(const Matrix& a, const Matrix& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

/// Classical cyclic Jacobi eigensolver for symmetric matrices. Returns the
/// eigenvalues in descending order and the eigenvectors as columns.
struct Eigen {
    Vector values;
    Matrix vectors;
};

inline Eigen jacobi_eigen(Matrix a) {
    const std::size_t n = a.rows();
    Matrix v = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a(i, j) * a(i, j);
        if (off <= 1e-30 * std::max(diag, 1e-300)) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (a(p, q) == 0.0) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) > a(y, y); });
    Eigen out{Vector(n), Matrix(n, n)};
    for (std::size_t j = 0; j < n; ++j) {
        out.values[j] = a(order[j], order[j]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, j) = v(i, order[j]);
    }
    return out;
}

/// Singular values of m from the eigenvalues of the smaller Gram matrix.
inline Vector singular_values(const Matrix& m) {
    const Matrix g = m.rows() <= m.cols() ? naive_matmul(m, naive_transpose(m)) : naive_matmul(naive_transpose(m), m);
    Vector ev = jacobi_eigen(g).values;
    for (double& x : ev) x = std::sqrt(std::max(x, 0.0));
    return ev;
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Matrix m(rows, cols);
    for (double& x : m.data()) x = d(rng);
    return m;
}

inline Vector random_vector(std::size_t n, std::mt19937_64& rng, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Vector v(n);
    for (double& x : v) x = d(rng);
    return v;
}

/// (1/M)·F·Fᵀ accumulated as a sum of per-column outer products.
inline Matrix outer_product_covariance(const Matrix& f) {
    Matrix out(f.rows(), f.rows());
    for (std::size_t k = 0; k < f.cols(); ++k)
        for (std::size_t i = 0; i < f.rows(); ++i)
            for (std::size_t j = 0; j < f.rows(); ++j) out(i, j) += f(i, k) * f(j, k);
    for (double& x : out.data()) x /= static_cast<double>(f.cols());
    return out;
}

/// Central difference of f around *param.
inline double central_difference(double* param, double h, const std::function<double()>& f) {
    const double saved = *param;
    *param = saved + h;
    const double up = f();
    *param = saved - h;
    const double down = f();
    *param = saved;
    return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
    return std::abs(analytic - numeric) / std::max(std::abs(analytic), 1e-8);
}

/// Share of the spectrum held by its last r entries, summed directly.
inline double direct_asr(const Vector& s, std::size_t r) {
    double bottom = 0.0, total = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        total += s[i];
        if (i >= s.size() - r) bottom += s[i];
    }
    return bottom / total;
}

/// Repeatedly extracts the minimum score, lowest id first on ties.
inline std::vector<std::size_t> brute_force_ranking(const std::vector<std::pair<std::size_t, double>>& scores) {
    std::vector<std::pair<std::size_t, double>> left = scores;
    std::vector<std::size_t> picked;
    while (!left.empty()) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < left.size(); ++i) {
            if (left[i].second < left[best].second ||
                (left[i].second == left[best].second && left[i].first < left[best].first)) {
                best = i;
            }
        }
        picked.push_back(left[best].first);
        left.erase(left.begin() + static_cast<std::ptrdiff_t>(best));
    }
    return picked;
}

/// Random descending spectrum with exponential entries.
inline Vector random_spectrum(std::size_t n, std::mt19937_64& rng) {
    std::exponential_distribution<double> d(1.0);
    Vector s(n);
    for (double& x : s) x = d(rng);
    std::sort(s.begin(), s.end(), std::greater<>());
    return s;
}

}  // namespace oracle
