// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>

#include "ckpd/matrix.hpp"

namespace ckpd {

/// Thin SVD m = u·diag(s)·vt with R = min(rows, cols).
///
/// Singular values are sorted in descending order. For every pair the first
/// component of u_i whose magnitude exceeds 1e-12 is non-negative; u_i and
/// the matching row of vt are flipped together to enforce this.
struct SvdResult {
    Matrix u;   // rows × R
    Vector s;   // R
    Matrix vt;  // R × cols
};

/// One-sided (Hestenes) Jacobi SVD. Throws NumericalFailure if the sweep
/// cap is hit before the columns are mutually orthogonal.
SvdResult svd(const Matrix& m);

/// Largest singular value.
double spectral_norm(const Matrix& m);

/// Gauss-Jordan inverse with partial pivoting. Empty when a pivot is exactly
/// zero or the result is not finite.
std::optional<Matrix> try_invert(const Matrix& m);

struct RegularizedInverse {
    Matrix sigma_tilde;
    Matrix inverse;
    double lambda_final = 0.0;
    std::size_t doublings = 0;
};

struct RegularizationConfig {
    double lambda0 = 1e-6;
    double threshold = 1e-3;
    std::size_t max_doublings = 40;
};

/// Inverts a symmetric matrix, adding λ·mean(diag)·I only when the plain
/// inverse fails the check ‖Σ̃Σ̃⁻¹ − I‖₂ ≤ threshold. λ starts at lambda0 and
/// doubles per retry; lambda_final = lambda0·2^doublings.
RegularizedInverse regularized_inverse(const Matrix& sigma, const RegularizationConfig& cfg = {});
RegularizedInverse regularized_inverse(const Matrix& sigma, double lambda0, double threshold,
                                       std::size_t max_doublings);

/// ‖m·inverse − I‖₂.
double inverse_residual(const Matrix& m, const Matrix& inverse);

}  // namespace ckpd
