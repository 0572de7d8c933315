// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "ckpd/covariance.hpp"
#include "ckpd/kpd.hpp"
#include "ckpd/net.hpp"

namespace ckpd {

/// Fraction of the spectrum's mass held by its smallest r values.
double compute_asr(std::span<const double> singular_values, std::size_t r);

struct LayerScore {
    std::size_t layer_id = 0;
    double asr = 0.0;
    double singular_sum_total = 0.0;
    double singular_sum_bottom_r = 0.0;
};

struct AsrReport {
    std::size_t session_id = 0;
    std::vector<LayerScore> per_layer;    // by layer id
    std::vector<std::size_t> ranking;     // ascending asr, ties by layer id
    std::vector<std::size_t> selected;    // first k of ranking, ascending id

    bool is_selected(std::size_t layer_id) const;
};

/// Ranks layers by ascending score (ties by id) and keeps the first k.
/// Only `ranking`, `selected` and the asr fields of `per_layer` are filled.
AsrReport select_layers(const std::vector<std::pair<std::size_t, double>>& scores, std::size_t k);

struct SessionSelection {
    AsrReport report;
    std::vector<DecomposedLayer> layers;  // selected layers only, ascending id
};

/// Captures activations of every layer from the buffer, decomposes each
/// layer to get its spectrum, scores and ranks all layers, and returns the
/// decompositions of the k lowest-ASR layers. The model is not modified.
SessionSelection session_selection(const Backbone& model, const CovarianceBuffer& buffer,
                                   const KpdConfig& cfg, std::size_t k, std::size_t session_id = 0);

std::string asr_report_csv(const AsrReport& report);
std::string asr_report_json(const AsrReport& report);

}  // namespace ckpd
