// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "ckpd/matrix.hpp"
#include "ckpd/net.hpp"

namespace ckpd {

struct ClassExemplar {
    ClassId class_id = 0;
    Vector input;
};

/// One stored input per seen class. Grows monotonically; existing exemplars
/// are never replaced.
class CovarianceBuffer {
public:
    explicit CovarianceBuffer(std::uint64_t rng_seed = 0);

    const std::vector<ClassExemplar>& exemplars() const noexcept { return exemplars_; }
    std::size_t size() const noexcept { return exemplars_.size(); }
    bool empty() const noexcept { return exemplars_.empty(); }
    bool contains(ClassId id) const;
    std::uint64_t rng_seed() const noexcept { return seed_; }

    /// Used when restoring a persisted buffer.
    void append(ClassExemplar exemplar);

    /// Draws a uniformly random element index in [0, n) from the buffer's generator.
    std::size_t draw_index(std::size_t n);

private:
    std::uint64_t seed_;
    std::mt19937_64 rng_;
    std::vector<ClassExemplar> exemplars_;
};

using ClassSamples = std::pair<ClassId, std::vector<Vector>>;

/// Returns a copy of `buffer` with one uniformly chosen sample per new class
/// appended, in the order the classes are given.
CovarianceBuffer update_buffer(CovarianceBuffer buffer, const std::vector<ClassSamples>& new_classes);

struct ActivationCapture {
    std::size_t layer_id = 0;
    Matrix features;  // d_in × (exemplars · tokens)
};

/// (1/M)·F·Fᵀ for F of shape d_in × M. No mean subtraction.
Matrix compute_input_covariance(const ActivationCapture& capture);
Matrix compute_input_covariance(const Matrix& features);

/// Forwards every exemplar and records, per layer, the exact vectors each
/// weight multiplies (one column per exemplar).
std::vector<ActivationCapture> capture_activations(const Backbone& model, const CovarianceBuffer& buffer);

// CKPD-BUF v1 text format.
void write_buffer(std::ostream& out, const CovarianceBuffer& buffer);
CovarianceBuffer read_buffer(std::istream& in, std::uint64_t rng_seed = 0);
void save_buffer(const std::string& path, const CovarianceBuffer& buffer);
CovarianceBuffer load_buffer(const std::string& path, std::uint64_t rng_seed = 0);

}  // namespace ckpd
