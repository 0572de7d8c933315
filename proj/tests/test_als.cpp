// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <random>

#include <doctest.h>
#include <json.hpp>

#include "ckpd/als.hpp"
#include "ckpd/errors.hpp"
#include "oracles.hpp"

using namespace ckpd;

namespace {

using oracle::direct_asr;

std::vector<std::size_t> brute_force_select(const std::vector<std::pair<std::size_t, double>>& scores,
                                            std::size_t k) {
    auto all = oracle::brute_force_ranking(scores);
    all.resize(k);
    return all;
}

Vector seeded_spectrum(std::size_t n, std::mt19937_64& rng) { return oracle::random_spectrum(n, rng); }

}  // namespace

TEST_CASE("asr small cases") {
    CHECK(compute_asr(Vector{3.0, 2.0, 1.0}, 1) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
    CHECK(compute_asr(Vector{5.0, 0.5, 0.25}, 3) == 1.0);
    CHECK_THROWS_AS(compute_asr(Vector{1.0, 1.0}, 0), InvalidRank);
    CHECK_THROWS_AS(compute_asr(Vector{1.0, 1.0}, 3), InvalidRank);
    CHECK_THROWS_AS(compute_asr(Vector{0.0, 0.0}, 1), ZeroEnergy);
}

TEST_CASE("asr matches direct summation on a seeded spectrum") {
    std::mt19937_64 rng(16);
    const Vector s = seeded_spectrum(16, rng);
    CHECK(std::abs(compute_asr(s, 5) - direct_asr(s, 5)) <= 1e-15);
}

TEST_CASE("select layers small cases") {
    const AsrReport rep = select_layers({{0, 0.3}, {1, 0.1}, {2, 0.2}}, 2);
    CHECK(rep.ranking == std::vector<std::size_t>{1, 2, 0});
    CHECK(rep.selected == std::vector<std::size_t>{1, 2});
    CHECK(rep.is_selected(1));
    CHECK_FALSE(rep.is_selected(0));
    const AsrReport all = select_layers({{0, 0.3}, {1, 0.1}, {2, 0.2}}, 3);
    CHECK(all.selected == std::vector<std::size_t>{0, 1, 2});
    CHECK_THROWS_AS(select_layers({{0, 0.3}}, 2), TooManyLayers);
}

TEST_CASE("select layers with ties matches brute force") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<std::pair<std::size_t, double>> scores;
    for (std::size_t i = 0; i < 12; ++i) scores.emplace_back(i, u(rng));
    scores[7].second = scores[2].second;
    scores[10].second = scores[4].second;
    const AsrReport rep = select_layers(scores, 5);
    const auto expected = brute_force_select(scores, 12);
    CHECK(rep.ranking == expected);
    std::vector<std::size_t> top(expected.begin(), expected.begin() + 5);
    std::sort(top.begin(), top.end());
    CHECK(rep.selected == top);
}

TEST_CASE("session selection on a hand-built two-layer model") {
    const Vector d0{1.0, 1.0, 1.0, 0.1}, d1{1.0, 1.0, 1.0, 100.0};
    const Backbone model({PlainLinear{Matrix::diagonal(d0)}, PlainLinear{Matrix::diagonal(d1)}},
                         Activation::Identity, false);
    // Exemplars e1..e4 give Σ = I/4 at layer 0. Layer 1 sees d0_i·e_i, so
    // Σ = diag(d0²)/4 there. Both products W·Σ are diagonal:
    //   layer 0: (0.25, 0.25, 0.25, 0.025)  → ASR(1) = 0.025/0.775
    //   layer 1: (0.25, 0.25, 0.25, 0.25)   → ASR(1) = 0.25
    CovarianceBuffer buf(0);
    for (ClassId c = 0; c < 4; ++c) {
        Vector e(4, 0.0);
        e[static_cast<std::size_t>(c)] = 1.0;
        buf = update_buffer(std::move(buf), {{c, {e}}});
    }
    KpdConfig cfg;
    cfg.rank_r = 1;
    const SessionSelection sel = session_selection(model, buf, cfg, 1, 3);
    CHECK(sel.report.session_id == 3);
    CHECK(sel.report.selected == std::vector<std::size_t>{0});
    REQUIRE(sel.layers.size() == 1);
    CHECK(sel.layers[0].layer_id == 0);
    CHECK(sel.report.per_layer[0].asr == doctest::Approx(direct_asr(Vector{0.25, 0.25, 0.25, 0.025}, 1)).epsilon(1e-12));
    CHECK(sel.report.per_layer[1].asr == doctest::Approx(direct_asr(Vector{0.25, 0.25, 0.25, 0.25}, 1)).epsilon(1e-12));
}

TEST_CASE("session selection with k = N and replay determinism") {
    std::mt19937_64 rng(6);
    const Backbone model = Backbone::random({8, 12, 12, 12, 12, 12, 8}, rng);
    CovarianceBuffer buf(6);
    for (ClassId c = 0; c < 10; ++c) buf = update_buffer(std::move(buf), {{c, {oracle::random_vector(8, rng)}}});
    KpdConfig cfg;
    cfg.rank_r = 2;
    const SessionSelection all = session_selection(model, buf, cfg, 6);
    CHECK(all.report.selected == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(all.layers.size() == 6);

    const SessionSelection a = session_selection(model, buf, cfg, 3);
    const SessionSelection b = session_selection(model, buf, cfg, 3);
    CHECK(asr_report_json(a.report) == asr_report_json(b.report));
    CHECK(asr_report_csv(a.report) == asr_report_csv(b.report));
    CHECK_THROWS_AS(session_selection(model, buf, cfg, 7), TooManyLayers);
    CHECK_THROWS_AS(session_selection(model, CovarianceBuffer(0), cfg, 1), EmptyBuffer);
}

TEST_CASE("asr property: monotone in r and scale invariant") {
    std::mt19937_64 rng(1000);
    std::uniform_int_distribution<std::size_t> len(2, 40);
    std::uniform_real_distribution<double> scale(1e-3, 1e3);
    for (int trial = 0; trial < 1000; ++trial) {
        const Vector s = seeded_spectrum(len(rng), rng);
        double prev = 0.0;
        for (std::size_t r = 1; r <= s.size(); ++r) {
            const double a = compute_asr(s, r);
            CHECK(a >= prev);
            CHECK(a >= 0.0);
            CHECK(a <= 1.0);
            prev = a;
        }
        Vector t = s;
        const double c = scale(rng);
        for (double& x : t) x *= c;
        const std::size_t r = 1 + trial % s.size();
        CHECK(compute_asr(t, r) == doctest::Approx(compute_asr(s, r)).epsilon(1e-13));
    }
}

TEST_CASE("selection property: brute-force equivalence and global scale invariance") {
    std::mt19937_64 rng(500);
    std::uniform_int_distribution<std::size_t> n_layers(1, 12);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t n = n_layers(rng);
        std::vector<Vector> spectra;
        std::vector<std::pair<std::size_t, double>> scores;
        for (std::size_t l = 0; l < n; ++l) {
            spectra.push_back(seeded_spectrum(6, rng));
            if (trial % 4 == 0 && l > 0 && l % 3 == 0) spectra[l] = spectra[l - 1];  // force ties
            scores.emplace_back(l, compute_asr(spectra[l], 2));
        }
        const std::size_t k = trial % (n + 1);
        const AsrReport rep = select_layers(scores, k);
        const auto expected = brute_force_select(scores, n);
        CHECK(rep.ranking == expected);

        std::vector<std::pair<std::size_t, double>> scaled_scores;
        for (std::size_t l = 0; l < n; ++l) {
            Vector t = spectra[l];
            for (double& x : t) x *= 7.5;
            scaled_scores.emplace_back(l, compute_asr(t, 2));
        }
        CHECK(select_layers(scaled_scores, k).selected == rep.selected);
    }
}

TEST_CASE("asr report serializations") {
    const AsrReport rep = select_layers({{0, 0.5}, {1, 0.25}}, 1);
    CHECK(asr_report_csv(rep) == "layer_id,asr,selected\n0,0.5,0\n1,0.25,1\n");
    const auto j = nlohmann::json::parse(asr_report_json(rep));
    CHECK(j["selected"] == nlohmann::json::array({1}));
}
