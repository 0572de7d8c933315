// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/net.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "ckpd/errors.hpp"

namespace ckpd {

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "identity"; }

Activation activation_from_string(const std::string& s) {
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

std::size_t slot_d_out(const LayerSlot& slot) {
    return std::visit([](const auto& l) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, PlainLinear>) return l.w.rows();
        else return l.d_out();
    }, slot);
}

std::size_t slot_d_in(const LayerSlot& slot) {
    return std::visit([](const auto& l) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(l)>, PlainLinear>) return l.w.cols();
        else return l.d_in();
    }, slot);
}

Backbone::Backbone(std::vector<LayerSlot> layers, Activation activation, bool pre_norm)
    : layers_(std::move(layers)), activation_(activation), pre_norm_(pre_norm) {
    if (layers_.empty()) throw ShapeError("backbone: needs at least one layer");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
        if (slot_d_in(layers_[i]) != slot_d_out(layers_[i - 1])) {
            throw ShapeError(fmt::format("backbone: layer {} expects {} inputs but layer {} emits {}", i,
                                         slot_d_in(layers_[i]), i - 1, slot_d_out(layers_[i - 1])));
        }
    }
}

Backbone Backbone::random(const std::vector<std::size_t>& widths, std::mt19937_64& rng,
                          Activation activation, bool pre_norm) {
    if (widths.size() < 2) throw ShapeError("backbone: need at least two widths");
    std::vector<LayerSlot> layers;
    for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
        const std::size_t d_in = widths[l];
        const std::size_t d_out = widths[l + 1];
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(d_in)));
        Matrix w(d_out, d_in);
        for (double& v : w.data()) v = dist(rng);
        layers.emplace_back(PlainLinear{std::move(w)});
    }
    return Backbone(std::move(layers), activation, pre_norm);
}

std::size_t Backbone::input_dim() const { return slot_d_in(layers_.front()); }
std::size_t Backbone::output_dim() const { return slot_d_out(layers_.back()); }

std::vector<std::size_t> Backbone::widths() const {
    std::vector<std::size_t> w{input_dim()};
    for (const auto& l : layers_) w.push_back(slot_d_out(l));
    return w;
}

bool Backbone::is_decomposed(std::size_t i) const {
    return std::holds_alternative<DecomposedLayer>(layers_.at(i));
}

Matrix Backbone::effective_weight(std::size_t i) const {
    const auto& slot = layers_.at(i);
    if (const auto* p = std::get_if<PlainLinear>(&slot)) return p->w;
    return merge(std::get<DecomposedLayer>(slot));
}

void Backbone::merge_all() {
    for (auto& slot : layers_) {
        if (const auto* d = std::get_if<DecomposedLayer>(&slot)) slot = PlainLinear{merge(*d)};
    }
}

std::size_t Backbone::parameter_count() const {
    std::size_t n = 0;
    for (const auto& slot : layers_) {
        if (const auto* p = std::get_if<PlainLinear>(&slot)) {
            n += p->w.size();
        } else {
            const auto& d = std::get<DecomposedLayer>(slot);
            n += d.w_frozen.size() + d.b.size() + d.a.size();
        }
    }
    return n;
}

std::size_t Backbone::merged_multiply_count() const {
    std::size_t n = 0;
    for (const auto& slot : layers_) n += slot_d_out(slot) * slot_d_in(slot);
    return n;
}

namespace {

double activate(Activation a, double z) { return a == Activation::Tanh ? std::tanh(z) : z; }

// Derivative expressed through the activation's output y = act(z).
double activate_grad(Activation a, double y) { return a == Activation::Tanh ? 1.0 - y * y : 1.0; }

struct LayerTrace {
    Vector h;        // input seen by the weight
    double norm = 1.0;
    Vector ah;       // A·h for decomposed slots
    Vector out;      // post-activation output (unused for the last layer)
};

struct Trace {
    std::vector<LayerTrace> layers;
    Vector feature;
};

Trace run_forward(const Backbone& model, std::span<const double> x, const AdapterMask* mask) {
    if (x.size() != model.input_dim()) {
        throw ShapeError(fmt::format("forward: input length {} but model expects {}", x.size(),
                                     model.input_dim()));
    }
    Trace trace;
    trace.layers.resize(model.num_layers());
    Vector current(x.begin(), x.end());
    std::bernoulli_distribution drop(mask ? mask->rate : 0.0);
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        LayerTrace& t = trace.layers[l];
        if (model.pre_norm()) {
            t.norm = norm2(current);
            if (t.norm == 0.0) {
                throw DegenerateInput(fmt::format("forward: zero vector entering layer {}", l));
            }
            for (double& v : current) v /= t.norm;
        }
        t.h = std::move(current);
        Vector z;
        const auto& slot = model.layer(l);
        if (const auto* p = std::get_if<PlainLinear>(&slot)) {
            z = matvec(p->w, t.h);
        } else {
            const auto& d = std::get<DecomposedLayer>(slot);
            z = matvec(d.w_frozen, t.h);
            t.ah = matvec(d.a, t.h);
            Vector delta = matvec(d.b, t.ah);
            if (mask && mask->rng && mask->rate > 0.0) {
                for (double& v : delta)
                    if (drop(*mask->rng)) v = 0.0;
            }
            for (std::size_t i = 0; i < z.size(); ++i) z[i] += delta[i];
        }
        if (l + 1 < model.num_layers()) {
            for (double& v : z) v = activate(model.activation(), v);
            t.out = z;
        }
        current = std::move(z);
    }
    trace.feature = std::move(current);
    return trace;
}

ForwardResult to_result(Trace&& trace) {
    ForwardResult r;
    r.feature = std::move(trace.feature);
    r.layer_inputs.reserve(trace.layers.size());
    for (auto& t : trace.layers) r.layer_inputs.push_back(std::move(t.h));
    return r;
}

}  // namespace

ForwardResult forward(const Backbone& model, std::span<const double> x) {
    return to_result(run_forward(model, x, nullptr));
}

ForwardResult forward(const Backbone& model, std::span<const double> x, const AdapterMask& mask) {
    return to_result(run_forward(model, x, &mask));
}

PrototypeClassifier::PrototypeClassifier(double temperature) : temperature_(temperature) {
    if (!(temperature > 0.0)) throw ConfigError("classifier: temperature must be > 0");
}

void PrototypeClassifier::add_prototype(ClassId id, std::span<const double> direction, bool trainable) {
    if (has(id)) throw DuplicateClass(fmt::format("classifier: class {} already has a prototype", id));
    if (!prototypes_.empty() && direction.size() != prototypes_.begin()->second.size()) {
        throw ShapeError("classifier: prototype dimension mismatch");
    }
    const double n = norm2(direction);
    if (n == 0.0 || !std::isfinite(n)) {
        throw DegenerateInput(fmt::format("classifier: prototype for class {} has zero norm", id));
    }
    Vector p(direction.begin(), direction.end());
    for (double& v : p) v /= n;
    prototypes_.emplace(id, std::move(p));
    if (trainable) trainable_.insert(id);
}

void PrototypeClassifier::set_trainable(const std::set<ClassId>& ids) {
    for (ClassId id : ids)
        if (!has(id)) throw UnknownLabel(fmt::format("classifier: no prototype for class {}", id));
    trainable_ = ids;
}

void PrototypeClassifier::renormalize() {
    for (auto& [id, p] : prototypes_) {
        const double n = norm2(p);
        if (n == 0.0) throw NumericalFailure(fmt::format("classifier: prototype {} collapsed", id));
        for (double& v : p) v /= n;
    }
}

Classification classify(const PrototypeClassifier& clf, std::span<const double> feature) {
    if (clf.size() == 0) throw UnknownLabel("classify: classifier has no prototypes");
    const double fn = norm2(feature);
    if (fn == 0.0) throw DegenerateInput("classify: zero feature vector");
    Classification out;
    out.logits.reserve(clf.size());
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& [id, p] : clf.prototypes()) {
        const double logit = clf.temperature() * dot(feature, p) / (fn * norm2(p));
        out.logits.emplace_back(id, logit);
        if (logit > best) {
            best = logit;
            out.class_id = id;
        }
    }
    return out;
}

LossAndGrads loss_and_grads(const Backbone& model, const PrototypeClassifier& clf,
                            std::span<const Sample> batch, const TrainOptions& opts) {
    if (batch.empty()) throw ShapeError("loss_and_grads: empty batch");
    const std::size_t n_layers = model.num_layers();
    const double inv_batch = 1.0 / static_cast<double>(batch.size());
    const double temp = clf.temperature();

    LossAndGrads res;
    GradientTape& tape = res.tape;
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto& slot = model.layer(l);
        if (const auto* d = std::get_if<DecomposedLayer>(&slot)) {
            tape.adapters.emplace(l, AdapterGrad{Matrix(d->b.rows(), d->b.cols()),
                                                 Matrix(d->a.rows(), d->a.cols())});
        } else if (opts.train_plain_layers) {
            const auto& w = std::get<PlainLinear>(slot).w;
            tape.plain.emplace(l, Matrix(w.rows(), w.cols()));
        }
    }
    for (ClassId id : clf.trainable()) {
        tape.prototypes.emplace(id, Vector(clf.prototypes().at(id).size(), 0.0));
    }

    // Prototype ids in map order, with cached norms.
    std::vector<ClassId> ids;
    std::vector<const Vector*> protos;
    std::vector<double> pnorm;
    for (const auto& [id, p] : clf.prototypes()) {
        ids.push_back(id);
        protos.push_back(&p);
        pnorm.push_back(norm2(p));
    }
    const std::size_t n_classes = ids.size();

    for (const Sample& sample : batch) {
        const auto label_it = std::find(ids.begin(), ids.end(), sample.y);
        if (label_it == ids.end()) {
            throw UnknownLabel(fmt::format("loss_and_grads: no prototype for label {}", sample.y));
        }
        const std::size_t label = static_cast<std::size_t>(label_it - ids.begin());

        Trace trace = run_forward(model, sample.x, nullptr);
        const Vector& f = trace.feature;
        const double fn = norm2(f);
        if (fn == 0.0) throw DegenerateInput("loss_and_grads: zero feature vector");

        Vector cosines(n_classes), logits(n_classes);
        for (std::size_t k = 0; k < n_classes; ++k) {
            cosines[k] = dot(f, *protos[k]) / (fn * pnorm[k]);
            logits[k] = temp * cosines[k];
        }
        const double mx = *std::max_element(logits.begin(), logits.end());
        double sum = 0.0;
        for (double c : logits) sum += std::exp(c - mx);
        const double lse = mx + std::log(sum);
        res.loss += (lse - logits[label]) * inv_batch;

        // dL/dlogit_k, then through the cosine to the feature and prototypes.
        Vector g(f.size(), 0.0);
        for (std::size_t k = 0; k < n_classes; ++k) {
            const double dlogit = (std::exp(logits[k] - lse) - (k == label ? 1.0 : 0.0)) * inv_batch;
            if (dlogit == 0.0) continue;
            const Vector& p = *protos[k];
            const double scale_f = dlogit * temp / fn;
            for (std::size_t i = 0; i < f.size(); ++i) {
                g[i] += scale_f * (p[i] / pnorm[k] - cosines[k] * f[i] / fn);
            }
            auto pit = tape.prototypes.find(ids[k]);
            if (pit != tape.prototypes.end()) {
                const double scale_p = dlogit * temp / pnorm[k];
                for (std::size_t i = 0; i < p.size(); ++i) {
                    pit->second[i] += scale_p * (f[i] / fn - cosines[k] * p[i] / pnorm[k]);
                }
            }
        }

        for (std::size_t l = n_layers; l-- > 0;) {
            const LayerTrace& t = trace.layers[l];
            if (l + 1 < n_layers) {
                for (std::size_t i = 0; i < g.size(); ++i) g[i] *= activate_grad(model.activation(), t.out[i]);
            }
            Vector gh;
            const auto& slot = model.layer(l);
            if (const auto* p = std::get_if<PlainLinear>(&slot)) {
                auto it = tape.plain.find(l);
                if (it != tape.plain.end()) {
                    Matrix& dw = it->second;
                    for (std::size_t i = 0; i < dw.rows(); ++i) {
                        if (g[i] == 0.0) continue;
                        auto row = dw.row(i);
                        for (std::size_t j = 0; j < row.size(); ++j) row[j] += g[i] * t.h[j];
                    }
                }
                if (l == 0) break;
                gh = matvec_transposed(p->w, g);
            } else {
                const auto& d = std::get<DecomposedLayer>(slot);
                AdapterGrad& ag = tape.adapters.at(l);
                const Vector btg = matvec_transposed(d.b, g);
                for (std::size_t i = 0; i < ag.db.rows(); ++i) {
                    auto row = ag.db.row(i);
                    for (std::size_t j = 0; j < row.size(); ++j) row[j] += g[i] * t.ah[j];
                }
                for (std::size_t i = 0; i < ag.da.rows(); ++i) {
                    auto row = ag.da.row(i);
                    for (std::size_t j = 0; j < row.size(); ++j) row[j] += btg[i] * t.h[j];
                }
                if (l == 0) break;
                gh = matvec_transposed(d.w_frozen, g);
                const Vector atb = matvec_transposed(d.a, btg);
                for (std::size_t i = 0; i < gh.size(); ++i) gh[i] += atb[i];
            }
            if (model.pre_norm()) {
                const double proj = dot(gh, t.h);
                for (std::size_t i = 0; i < gh.size(); ++i) gh[i] = (gh[i] - proj * t.h[i]) / t.norm;
            }
            g = std::move(gh);
        }
    }
    return res;
}

namespace {

void sgd(Matrix& param, const Matrix& grad, double lr) {
    if (param.rows() != grad.rows() || param.cols() != grad.cols()) {
        throw ShapeError(fmt::format("apply_update: grad {} for parameter {}", grad.shape_string(),
                                     param.shape_string()));
    }
    auto p = param.data();
    auto g = grad.data();
    for (std::size_t i = 0; i < p.size(); ++i) p[i] -= lr * g[i];
}

}  // namespace

void apply_update(Backbone& model, PrototypeClassifier& clf, const GradientTape& tape,
                  double lr_backbone, double lr_clf, bool renormalize) {
    for (const auto& [l, ag] : tape.adapters) {
        auto* d = std::get_if<DecomposedLayer>(&model.layer(l));
        if (!d) throw ShapeError(fmt::format("apply_update: layer {} is not decomposed", l));
        sgd(d->b, ag.db, lr_backbone);
        sgd(d->a, ag.da, lr_backbone);
    }
    for (const auto& [l, dw] : tape.plain) {
        auto* p = std::get_if<PlainLinear>(&model.layer(l));
        if (!p) throw ShapeError(fmt::format("apply_update: layer {} is not plain", l));
        sgd(p->w, dw, lr_backbone);
    }
    auto& protos = clf.mutable_prototypes();
    for (const auto& [id, gp] : tape.prototypes) {
        auto it = protos.find(id);
        if (it == protos.end()) throw UnknownLabel(fmt::format("apply_update: no prototype {}", id));
        if (it->second.size() != gp.size()) throw ShapeError("apply_update: prototype grad size");
        for (std::size_t i = 0; i < gp.size(); ++i) it->second[i] -= lr_clf * gp[i];
        if (renormalize) {
            const double n = norm2(it->second);
            if (n == 0.0) throw NumericalFailure(fmt::format("apply_update: prototype {} collapsed", id));
            for (double& v : it->second) v /= n;
        }
    }
}

}  // namespace ckpd
