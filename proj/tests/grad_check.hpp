// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

// Central finite-difference check of every entry on a gradient tape.

#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <variant>
#include <vector>

#include "ckpd/net.hpp"
#include "oracles.hpp"

namespace grad_check {

struct Report {
    std::size_t coordinates = 0;
    double max_relative_error = 0.0;
    double worst_analytic = 0.0;
    double worst_numeric = 0.0;
};

inline Report check_all(ckpd::Backbone model, ckpd::PrototypeClassifier clf, const std::vector<ckpd::Sample>& batch,
                        const ckpd::TrainOptions& opts, double h = 1e-6) {
    using namespace ckpd;
    const auto tape = loss_and_grads(model, clf, batch, opts).tape;
    auto loss = [&]() { return loss_and_grads(model, clf, batch, opts).loss; };
    Report rep;
    auto visit = [&](double* param, double analytic) {
        const double numeric = oracle::central_difference(param, h, loss);
        const double err = oracle::relative_error(analytic, numeric);
        if (err > rep.max_relative_error) {
            rep.max_relative_error = err;
            rep.worst_analytic = analytic;
            rep.worst_numeric = numeric;
        }
        ++rep.coordinates;
    };
    for (const auto& [l, g] : tape.adapters) {
        auto& d = std::get<DecomposedLayer>(model.layer(l));
        for (std::size_t i = 0; i < d.b.size(); ++i) visit(&d.b.data()[i], g.db.data()[i]);
        for (std::size_t i = 0; i < d.a.size(); ++i) visit(&d.a.data()[i], g.da.data()[i]);
    }
    for (const auto& [l, g] : tape.plain) {
        auto& w = std::get<PlainLinear>(model.layer(l)).w;
        for (std::size_t i = 0; i < w.size(); ++i) visit(&w.data()[i], g.data()[i]);
    }
    for (const auto& [id, g] : tape.prototypes) {
        auto& p = clf.mutable_prototypes().at(id);
        for (std::size_t i = 0; i < p.size(); ++i) visit(&p[i], g[i]);
    }
    return rep;
}

}  // namespace grad_check
