// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/als.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "ckpd/errors.hpp"

namespace ckpd {

double compute_asr(std::span<const double> singular_values, std::size_t r) {
    const std::size_t n = singular_values.size();
    if (r < 1 || r > n) throw InvalidRank(fmt::format("asr: rank {} outside [1, {}]", r, n));
    double total = 0.0;
    for (double s : singular_values) total += s;
    if (total == 0.0) throw ZeroEnergy("asr: spectrum has zero energy");
    double bottom = 0.0;
    for (std::size_t i = n - r; i < n; ++i) bottom += singular_values[i];
    return bottom / total;
}

bool AsrReport::is_selected(std::size_t layer_id) const {
    return std::find(selected.begin(), selected.end(), layer_id) != selected.end();
}

AsrReport select_layers(const std::vector<std::pair<std::size_t, double>>& scores, std::size_t k) {
    if (k > scores.size()) {
        throw TooManyLayers(fmt::format("select_layers: k = {} but only {} layers", k, scores.size()));
    }
    for (const auto& [id, s] : scores)
        if (!std::isfinite(s)) throw NumericalFailure(fmt::format("select_layers: layer {} score not finite", id));

    AsrReport report;
    std::vector<std::pair<std::size_t, double>> sorted = scores;
    std::sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) {
        return a.second != b.second ? a.second < b.second : a.first < b.first;
    });
    for (const auto& [id, s] : sorted) report.ranking.push_back(id);
    report.selected.assign(report.ranking.begin(), report.ranking.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(report.selected.begin(), report.selected.end());

    auto by_id = scores;
    std::sort(by_id.begin(), by_id.end());
    for (const auto& [id, s] : by_id) report.per_layer.push_back({id, s, 0.0, 0.0});
    return report;
}

SessionSelection session_selection(const Backbone& model, const CovarianceBuffer& buffer,
                                   const KpdConfig& cfg, std::size_t k, std::size_t session_id) {
    const auto captures = capture_activations(model, buffer);
    std::vector<DecomposedLayer> all;
    all.reserve(captures.size());
    std::vector<std::pair<std::size_t, double>> scores;
    std::vector<LayerScore> details;
    for (const auto& cap : captures) {
        const Matrix sigma = compute_input_covariance(cap);
        DecomposedLayer d = decompose(model.effective_weight(cap.layer_id), sigma, cfg, cap.layer_id);
        const double asr = compute_asr(d.singular_values, cfg.rank_r);
        const auto& s = d.singular_values;
        const double total = std::accumulate(s.begin(), s.end(), 0.0);
        const double bottom = std::accumulate(s.end() - static_cast<std::ptrdiff_t>(cfg.rank_r), s.end(), 0.0);
        scores.emplace_back(cap.layer_id, asr);
        details.push_back({cap.layer_id, asr, total, bottom});
        all.push_back(std::move(d));
    }

    SessionSelection out;
    out.report = select_layers(scores, k);
    out.report.session_id = session_id;
    out.report.per_layer = std::move(details);
    for (std::size_t id : out.report.selected) out.layers.push_back(std::move(all[id]));
    return out;
}

std::string asr_report_csv(const AsrReport& report) {
    std::ostringstream os;
    os << "layer_id,asr,selected\n";
    for (const auto& l : report.per_layer) {
        os << l.layer_id << ',' << format_double(l.asr) << ',' << (report.is_selected(l.layer_id) ? 1 : 0)
           << '\n';
    }
    return os.str();
}

std::string asr_report_json(const AsrReport& report) {
    nlohmann::ordered_json j;
    j["session_id"] = report.session_id;
    auto& layers = j["per_layer"] = nlohmann::ordered_json::array();
    for (const auto& l : report.per_layer) {
        layers.push_back({{"layer_id", l.layer_id},
                          {"asr", l.asr},
                          {"singular_sum_total", l.singular_sum_total},
                          {"singular_sum_bottom_r", l.singular_sum_bottom_r}});
    }
    j["ranking"] = report.ranking;
    j["selected"] = report.selected;
    return j.dump(2) + "\n";
}

}  // namespace ckpd
