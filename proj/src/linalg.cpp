// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <fmt/format.h>

#include "ckpd/errors.hpp"

namespace ckpd {

namespace {

constexpr int kMaxSweeps = 80;
constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kSignTolerance = 1e-12;

// Columns of the working matrix are stored as contiguous rows of `cols`
// (cols[j] is column j of the tall matrix being orthogonalised).
struct JacobiOutput {
    std::vector<Vector> cols;  // n vectors of length m
    std::vector<Vector> v;     // n vectors of length n (columns of V)
};

JacobiOutput one_sided_jacobi(const Matrix& tall) {
    const std::size_t m = tall.rows();
    const std::size_t n = tall.cols();
    JacobiOutput out;
    out.cols.assign(n, Vector(m));
    out.v.assign(n, Vector(n, 0.0));
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < m; ++i) out.cols[j][i] = tall(i, j);
        out.v[j][j] = 1.0;
    }

    const double tol = kEps * static_cast<double>(std::max<std::size_t>(m, 1));
    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                Vector& ap = out.cols[p];
                Vector& aq = out.cols[q];
                double alpha = 0.0, beta = 0.0, gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += ap[i] * ap[i];
                    beta += aq[i] * aq[i];
                    gamma += ap[i] * aq[i];
                }
                if (gamma == 0.0 || alpha == 0.0 || beta == 0.0) continue;
                if (std::abs(gamma) <= tol * std::sqrt(alpha) * std::sqrt(beta)) continue;
                rotated = true;
                const double zeta = (beta - alpha) / (2.0 * gamma);
                const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::hypot(1.0, zeta));
                const double c = 1.0 / std::sqrt(1.0 + t * t);
                const double s = c * t;
                for (std::size_t i = 0; i < m; ++i) {
                    const double x = ap[i];
                    const double y = aq[i];
                    ap[i] = c * x - s * y;
                    aq[i] = s * x + c * y;
                }
                Vector& vp = out.v[p];
                Vector& vq = out.v[q];
                for (std::size_t i = 0; i < n; ++i) {
                    const double x = vp[i];
                    const double y = vq[i];
                    vp[i] = c * x - s * y;
                    vq[i] = s * x + c * y;
                }
            }
        }
        if (!rotated) return out;
    }
    throw NumericalFailure(
        fmt::format("svd: Jacobi sweeps did not converge for {}x{} matrix", tall.rows(), tall.cols()));
}

// Fills the entries of `basis` flagged in `missing` with unit vectors
// orthogonal to every other entry, drawing candidates from the standard basis.
void complete_orthonormal(std::vector<Vector>& basis, const std::vector<bool>& missing) {
    const std::size_t dim = basis.empty() ? 0 : basis.front().size();
    std::vector<std::size_t> accepted;
    for (std::size_t j = 0; j < basis.size(); ++j)
        if (!missing[j]) accepted.push_back(j);

    std::size_t next_candidate = 0;
    for (std::size_t j = 0; j < basis.size(); ++j) {
        if (!missing[j]) continue;
        bool placed = false;
        while (!placed && next_candidate < dim) {
            Vector cand(dim, 0.0);
            cand[next_candidate++] = 1.0;
            // Two rounds of modified Gram-Schmidt.
            for (int round = 0; round < 2; ++round) {
                for (std::size_t k : accepted) {
                    const double proj = dot(cand, basis[k]);
                    for (std::size_t i = 0; i < dim; ++i) cand[i] -= proj * basis[k][i];
                }
            }
            const double nrm = norm2(cand);
            if (nrm > 0.5) {
                for (double& x : cand) x /= nrm;
                basis[j] = std::move(cand);
                accepted.push_back(j);
                placed = true;
            }
        }
        if (!placed) throw NumericalFailure("svd: could not complete orthonormal basis");
    }
}

}  // namespace

SvdResult svd(const Matrix& m) {
    if (m.rows() == 0 || m.cols() == 0) {
        throw ShapeError(fmt::format("svd: empty matrix {}", m.shape_string()));
    }
    if (!m.all_finite()) {
        throw NumericalFailure(fmt::format("svd: non-finite input {}", m.shape_string()));
    }
    const bool wide = m.rows() < m.cols();
    const Matrix tall = wide ? transpose(m) : m;
    const std::size_t rank = tall.cols();

    JacobiOutput jac = one_sided_jacobi(tall);

    Vector norms(rank);
    for (std::size_t j = 0; j < rank; ++j) norms[j] = norm2(jac.cols[j]);
    std::vector<std::size_t> order(rank);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return norms[a] > norms[b]; });

    const double smax = norms[order.front()];
    const double negligible = smax * kEps * static_cast<double>(tall.rows());

    // left: unit columns of the orthogonalised tall matrix; right: V.
    std::vector<Vector> left(rank), right(rank);
    std::vector<bool> missing(rank, false);
    Vector s(rank);
    for (std::size_t k = 0; k < rank; ++k) {
        const std::size_t j = order[k];
        s[k] = norms[j];
        right[k] = jac.v[j];
        if (norms[j] <= negligible || norms[j] == 0.0) {
            missing[k] = true;
            left[k] = Vector(tall.rows(), 0.0);
        } else {
            left[k] = jac.cols[j];
            for (double& x : left[k]) x /= norms[j];
        }
    }
    complete_orthonormal(left, missing);

    // For a wide input the roles swap: m = right·S·leftᵀ.
    std::vector<Vector>& ucols = wide ? right : left;
    std::vector<Vector>& vcols = wide ? left : right;

    for (std::size_t k = 0; k < rank; ++k) {
        const auto lead = std::find_if(ucols[k].begin(), ucols[k].end(),
                                       [](double x) { return std::abs(x) > kSignTolerance; });
        if (lead != ucols[k].end() && *lead < 0.0) {
            for (double& x : ucols[k]) x = -x;
            for (double& x : vcols[k]) x = -x;
        }
    }

    SvdResult out;
    out.s = std::move(s);
    out.u = Matrix::from_columns(ucols);
    out.vt = transpose(Matrix::from_columns(vcols));
    return out;
}

double spectral_norm(const Matrix& m) {
    if (m.empty()) return 0.0;
    return svd(m).s.front();
}

std::optional<Matrix> try_invert(const Matrix& m) {
    if (m.rows() != m.cols()) {
        throw ShapeError(fmt::format("invert: {} is not square", m.shape_string()));
    }
    const std::size_t n = m.rows();
    Matrix a = m;
    Matrix inv = Matrix::identity(n);
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(a(r, col)) > std::abs(a(pivot, col))) pivot = r;
        const double p = a(pivot, col);
        if (p == 0.0 || !std::isfinite(p)) return std::nullopt;
        if (pivot != col) {
            std::swap_ranges(a.row(col).begin(), a.row(col).end(), a.row(pivot).begin());
            std::swap_ranges(inv.row(col).begin(), inv.row(col).end(), inv.row(pivot).begin());
        }
        const double scale = 1.0 / p;
        for (double& x : a.row(col)) x *= scale;
        for (double& x : inv.row(col)) x *= scale;
        for (std::size_t r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = a(r, col);
            if (f == 0.0) continue;
            auto ar = a.row(r);
            auto ac = a.row(col);
            auto ir = inv.row(r);
            auto ic = inv.row(col);
            for (std::size_t j = 0; j < n; ++j) {
                ar[j] -= f * ac[j];
                ir[j] -= f * ic[j];
            }
        }
    }
    if (!inv.all_finite()) return std::nullopt;
    return inv;
}

double inverse_residual(const Matrix& m, const Matrix& inverse) {
    Matrix prod = matmul(m, inverse);
    for (std::size_t i = 0; i < prod.rows(); ++i) prod(i, i) -= 1.0;
    if (!prod.all_finite()) return std::numeric_limits<double>::infinity();
    return spectral_norm(prod);
}

RegularizedInverse regularized_inverse(const Matrix& sigma, double lambda0, double threshold,
                                       std::size_t max_doublings) {
    return regularized_inverse(sigma, RegularizationConfig{lambda0, threshold, max_doublings});
}

RegularizedInverse regularized_inverse(const Matrix& sigma, const RegularizationConfig& cfg) {
    if (sigma.rows() != sigma.cols()) {
        throw ShapeError(fmt::format("regularized_inverse: {} is not square", sigma.shape_string()));
    }
    const std::size_t n = sigma.rows();
    double scale = 1.0;
    for (double x : sigma.data()) scale = std::max(scale, std::abs(x));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            if (std::abs(sigma(i, j) - sigma(j, i)) > 1e-10 * scale) {
                throw NotSymmetric(fmt::format("regularized_inverse: entry ({},{}) differs from ({},{})",
                                               i, j, j, i));
            }
        }
    }

    auto accept = [&](const Matrix& candidate) -> std::optional<Matrix> {
        auto inv = try_invert(candidate);
        if (!inv) return std::nullopt;
        if (inverse_residual(candidate, *inv) > cfg.threshold) return std::nullopt;
        return inv;
    };

    if (auto inv = accept(sigma)) return {sigma, std::move(*inv), 0.0, 0};

    double mean_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_diag += sigma(i, i);
    mean_diag /= static_cast<double>(n);
    if (mean_diag == 0.0) {
        throw DegenerateCovariance(
            fmt::format("regularized_inverse: {} covariance has zero mean diagonal", sigma.shape_string()));
    }

    double lambda = cfg.lambda0;
    for (std::size_t d = 0; d <= cfg.max_doublings; ++d, lambda *= 2.0) {
        Matrix tilde = add_scaled_identity(sigma, lambda * mean_diag);
        if (auto inv = accept(tilde)) return {std::move(tilde), std::move(*inv), lambda, d};
    }
    throw RegularizationFailure(fmt::format(
        "regularized_inverse: {} still ill-conditioned after {} doublings (lambda {})",
        sigma.shape_string(), cfg.max_doublings, lambda / 2.0));
}

}  // namespace ckpd
