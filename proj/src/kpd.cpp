// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/kpd.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "ckpd/errors.hpp"

namespace ckpd {

std::string to_string(AdapterSplit s) { return s == AdapterSplit::Balanced ? "balanced" : "sqrt_singular"; }

AdapterSplit adapter_split_from_string(const std::string& s) {
    if (s == "balanced") return AdapterSplit::Balanced;
    if (s == "sqrt_singular") return AdapterSplit::SqrtSingular;
    throw ConfigError("unknown adapter split '" + s + "'");
}

void KpdConfig::validate() const {
    if (rank_r < 1) throw ConfigError("kpd: rank_r must be >= 1");
    if (!(lambda0 > 0.0)) throw ConfigError("kpd: lambda0 must be > 0");
    if (!(inverse_threshold > 0.0)) throw ConfigError("kpd: inverse_threshold must be > 0");
}

DecomposedLayer decompose(const Matrix& w, const Matrix& sigma_in, const KpdConfig& cfg,
                          std::size_t layer_id) {
    if (cfg.rank_r < 1) throw InvalidRank("decompose: rank_r must be >= 1");
    if (sigma_in.rows() != w.cols() || sigma_in.cols() != w.cols()) {
        throw ShapeError(fmt::format("decompose: weight {} needs {}x{} covariance, got {}",
                                     w.shape_string(), w.cols(), w.cols(), sigma_in.shape_string()));
    }
    const std::size_t full_rank = std::min(w.rows(), w.cols());
    if (cfg.rank_r >= full_rank) {
        throw RankTooLarge(fmt::format("decompose: rank {} must be below min dim {} of {}", cfg.rank_r,
                                       full_rank, w.shape_string()));
    }

    const RegularizedInverse reg = regularized_inverse(sigma_in, cfg.regularization());
    const SvdResult f = svd(matmul(w, reg.sigma_tilde));
    // Rows of Vᵀ·Σ̃⁻¹ are the covariance-adjusted input directions v̂ᵢᵀ.
    const Matrix adjusted = matmul(f.vt, reg.inverse);

    const std::size_t r = cfg.rank_r;
    const std::size_t first = full_rank - r;
    DecomposedLayer out;
    out.b = Matrix(w.rows(), r);
    out.a = Matrix(r, w.cols());
    for (std::size_t j = 0; j < r; ++j) {
        const double root = std::sqrt(f.s[first + j]);
        for (std::size_t i = 0; i < w.rows(); ++i) out.b(i, j) = f.u(i, first + j) * root;
        for (std::size_t i = 0; i < w.cols(); ++i) out.a(j, i) = root * adjusted(first + j, i);
    }
    if (cfg.split == AdapterSplit::Balanced) {
        // Σ̃⁻¹ leaves ‖A_j‖ ≫ ‖B_j‖ when Σ̃ is ill-conditioned; equalise.
        for (std::size_t j = 0; j < r; ++j) {
            const double nb = norm2(out.b.column(j));
            const double na = norm2(out.a.row(j));
            if (nb == 0.0 || na == 0.0) continue;
            const double c = std::sqrt(na / nb);
            for (std::size_t i = 0; i < w.rows(); ++i) out.b(i, j) *= c;
            for (double& v : out.a.row(j)) v /= c;
        }
    }
    if (!out.b.all_finite() || !out.a.all_finite()) {
        throw NumericalFailure(fmt::format("decompose: non-finite adapter for {}", w.shape_string()));
    }
    out.w_frozen = subtract(w, matmul(out.b, out.a));
    out.singular_values = f.s;
    out.rank_r = r;
    out.layer_id = layer_id;
    out.lambda_final = reg.lambda_final;
    return out;
}

Vector adapter_output(const DecomposedLayer& layer, std::span<const double> x) {
    if (x.size() != layer.d_in()) {
        throw ShapeError(fmt::format("adapter: input length {} for layer {} expecting {}", x.size(),
                                     layer.layer_id, layer.d_in()));
    }
    return matvec(layer.b, matvec(layer.a, x));
}

Vector forward_decomposed(const DecomposedLayer& layer, std::span<const double> x) {
    Vector out = matvec(layer.w_frozen, x);
    const Vector delta = adapter_output(layer, x);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += delta[i];
    return out;
}

Matrix merge(const DecomposedLayer& layer) { return add(layer.w_frozen, matmul(layer.b, layer.a)); }

}  // namespace ckpd
