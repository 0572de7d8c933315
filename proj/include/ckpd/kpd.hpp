// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>

#include "ckpd/linalg.hpp"
#include "ckpd/matrix.hpp"

namespace ckpd {

/// How the bottom-r block s_i·u_i·v̂_iᵀ is split between B and A.
enum class AdapterSplit {
    /// B = U_r·√S_r, A = √S_r·(Vᵀ·Σ̃⁻¹)_r.
    SqrtSingular,
    /// Same product, but column j of B and row j of A get equal norms
    /// √(s_j·‖v̂_j‖). Identical to SqrtSingular when Σ̃ = I.
    Balanced,
};

std::string to_string(AdapterSplit s);
AdapterSplit adapter_split_from_string(const std::string& s);

struct KpdConfig {
    std::size_t rank_r = 4;
    double lambda0 = 1e-6;
    double inverse_threshold = 1e-3;
    std::size_t max_doublings = 40;
    AdapterSplit split = AdapterSplit::Balanced;

    /// Throws ConfigError when a field is out of range.
    void validate() const;
    RegularizationConfig regularization() const {
        return {lambda0, inverse_threshold, max_doublings};
    }
};

/// A linear layer split as w_frozen + b·a.
///
/// `singular_values` holds the full descending spectrum of W·Σ̃ so layer
/// ranking can reuse it without a second SVD.
struct DecomposedLayer {
    Matrix w_frozen;  // d_out × d_in
    Matrix b;         // d_out × r
    Matrix a;         // r × d_in
    Vector singular_values;
    std::size_t rank_r = 0;
    std::size_t layer_id = 0;
    double lambda_final = 0.0;

    std::size_t d_out() const { return w_frozen.rows(); }
    std::size_t d_in() const { return w_frozen.cols(); }
};

/// Covariance-guided decomposition of `w` (d_out × d_in) given the input
/// covariance `sigma_in` (d_in × d_in).
///
/// The bottom-r singular triplets of W·Σ̃ become the adapter, split
/// symmetrically: B = U_r·√S_r and A = √S_r·(Vᵀ·Σ̃⁻¹)_r, then optionally
/// rebalanced per component (see AdapterSplit). The frozen part is
/// the exact residual W − B·A, so merge() returns W up to one rounding per
/// entry no matter how well Σ̃ was inverted.
DecomposedLayer decompose(const Matrix& w, const Matrix& sigma_in, const KpdConfig& cfg,
                          std::size_t layer_id = 0);

/// w_frozen·x + b·(a·x).
Vector forward_decomposed(const DecomposedLayer& layer, std::span<const double> x);

/// Adapter contribution b·(a·x) alone.
Vector adapter_output(const DecomposedLayer& layer, std::span<const double> x);

/// w_frozen + b·a.
Matrix merge(const DecomposedLayer& layer);

}  // namespace ckpd
