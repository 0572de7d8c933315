// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <map>
#include <random>
#include <set>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ckpd/kpd.hpp"
#include "ckpd/matrix.hpp"

namespace ckpd {

using ClassId = int;

struct Sample {
    Vector x;
    ClassId y = 0;
};

enum class Activation { Tanh, Identity };

std::string to_string(Activation a);
Activation activation_from_string(const std::string& s);

struct PlainLinear {
    Matrix w;
};

using LayerSlot = std::variant<PlainLinear, DecomposedLayer>;

/// Feed-forward stack without biases. Each layer sees an L2-normalised copy
/// of its input (when `pre_norm` is on), applies its weight, and all but the
/// last layer pass through the activation.
class Backbone {
public:
    Backbone(std::vector<LayerSlot> layers, Activation activation = Activation::Tanh,
             bool pre_norm = true);

    /// Gaussian init with std 1/√d_in per layer.
    static Backbone random(const std::vector<std::size_t>& widths, std::mt19937_64& rng,
                           Activation activation = Activation::Tanh, bool pre_norm = true);

    std::size_t num_layers() const noexcept { return layers_.size(); }
    std::size_t input_dim() const;
    std::size_t output_dim() const;
    std::vector<std::size_t> widths() const;
    Activation activation() const noexcept { return activation_; }
    bool pre_norm() const noexcept { return pre_norm_; }

    const LayerSlot& layer(std::size_t i) const { return layers_.at(i); }
    LayerSlot& layer(std::size_t i) { return layers_.at(i); }
    bool is_decomposed(std::size_t i) const;

    /// The weight the layer currently applies (merged form for decomposed slots).
    Matrix effective_weight(std::size_t i) const;

    /// Replaces every decomposed slot by its merged plain weight.
    void merge_all();

    /// Stored scalars across all slots (adapters count while unmerged).
    std::size_t parameter_count() const;
    /// Multiplies per forward pass of one input in the merged architecture.
    std::size_t merged_multiply_count() const;

private:
    std::vector<LayerSlot> layers_;
    Activation activation_;
    bool pre_norm_;
};

std::size_t slot_d_out(const LayerSlot& slot);
std::size_t slot_d_in(const LayerSlot& slot);

struct ForwardResult {
    Vector feature;
    /// Exact vector each linear layer multiplied (post-normalisation).
    std::vector<Vector> layer_inputs;
};

/// Per-sample mask on adapter outputs used by the dropout probe. Called once
/// per decomposed layer in layer order; returns the keep mask (d_out entries).
struct AdapterMask {
    double rate = 0.0;
    std::mt19937_64* rng = nullptr;
};

ForwardResult forward(const Backbone& model, std::span<const double> x);
ForwardResult forward(const Backbone& model, std::span<const double> x, const AdapterMask& mask);

class PrototypeClassifier {
public:
    explicit PrototypeClassifier(double temperature = 16.0);

    double temperature() const noexcept { return temperature_; }
    /// Stores `direction` normalised to unit length. Throws DuplicateClass.
    void add_prototype(ClassId id, std::span<const double> direction, bool trainable);
    void set_trainable(const std::set<ClassId>& ids);
    const std::set<ClassId>& trainable() const noexcept { return trainable_; }
    const std::map<ClassId, Vector>& prototypes() const noexcept { return prototypes_; }
    std::map<ClassId, Vector>& mutable_prototypes() noexcept { return prototypes_; }
    bool has(ClassId id) const { return prototypes_.count(id) != 0; }
    std::size_t size() const noexcept { return prototypes_.size(); }
    void renormalize();

private:
    double temperature_;
    std::map<ClassId, Vector> prototypes_;
    std::set<ClassId> trainable_;
};

struct Classification {
    ClassId class_id = 0;
    std::vector<std::pair<ClassId, double>> logits;  // ascending class id
};

/// logits = temperature · cos(feature, prototype); ties go to the lowest id.
Classification classify(const PrototypeClassifier& clf, std::span<const double> feature);

struct AdapterGrad {
    Matrix db;
    Matrix da;
};

/// Gradients of the mean cross-entropy. Only parameters that are trainable
/// appear: adapters of decomposed layers, plain weights when requested, and
/// the classifier's trainable prototypes.
struct GradientTape {
    std::map<std::size_t, AdapterGrad> adapters;
    std::map<std::size_t, Matrix> plain;
    std::map<ClassId, Vector> prototypes;
};

struct TrainOptions {
    /// Also differentiate w.r.t. plain (non-decomposed) layer weights.
    bool train_plain_layers = false;
};

struct LossAndGrads {
    double loss = 0.0;
    GradientTape tape;
};

LossAndGrads loss_and_grads(const Backbone& model, const PrototypeClassifier& clf,
                            std::span<const Sample> batch, const TrainOptions& opts = {});

/// Plain SGD. `lr_backbone` applies to adapters and any plain-weight grads,
/// `lr_clf` to prototypes, which are re-normalised afterwards unless
/// `renormalize` is false.
void apply_update(Backbone& model, PrototypeClassifier& clf, const GradientTape& tape,
                  double lr_backbone, double lr_clf, bool renormalize = true);

}  // namespace ckpd
