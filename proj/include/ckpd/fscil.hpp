// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "ckpd/als.hpp"
#include "ckpd/covariance.hpp"
#include "ckpd/kpd.hpp"
#include "ckpd/net.hpp"

namespace ckpd {

/// Base session followed by `num_incremental` p-way q-shot sessions.
struct SessionSpec {
    std::size_t base_classes = 20;
    std::size_t base_samples_per_class = 100;
    std::size_t num_incremental = 4;
    std::size_t ways = 5;
    std::size_t shots = 5;
    std::size_t test_samples_per_class = 50;
    std::size_t input_dim = 32;
    double noise_sigma = 0.25;
    std::uint64_t seed = 1;

    void validate() const;
    std::size_t total_classes() const { return base_classes + num_incremental * ways; }
};

struct SessionData {
    std::size_t session_id = 0;
    std::vector<ClassId> classes;
    std::vector<Sample> train;
    std::vector<Sample> test;
};

struct SyntheticTask {
    std::vector<Vector> class_means;  // unit norm, indexed by class id
    std::vector<SessionData> sessions;
};

/// Class means uniform on the unit sphere; samples are mean + N(0, σ²·I).
/// Classes 0..base-1 belong to session 0, then `ways` fresh ids per session.
SyntheticTask generate_task(const SessionSpec& spec);

enum class Strategy { Ckpd, KpdStatic, Freeze, FullAdapt, LoraRandom, SvdPlain };

std::string to_string(Strategy s);
Strategy strategy_from_string(const std::string& s);
const std::vector<Strategy>& all_strategies();

struct ExperimentConfig {
    SessionSpec spec;
    KpdConfig kpd;
    std::size_t k_layers = 2;
    Strategy strategy = Strategy::Ckpd;
    std::vector<std::size_t> widths{32, 64, 64, 64, 64, 64, 32};
    double temperature = 16.0;
    std::size_t base_epochs = 10;
    std::size_t base_batch = 32;
    double base_lr = 0.05;
    double lr_clf = 0.3;
    double lr_adapter = 0.03;
    std::size_t iterations = 200;
    std::size_t rehearsal_batch = 32;
    /// Std of the Gaussian A init for lora_random; 0 means 1/√d_in.
    double lora_init_std = 0.0;
    std::vector<double> probe_rates;
    std::uint64_t probe_seed = 0;
    std::string output_dir = "out";

    void validate() const;
};

/// Strict JSON config: unknown keys are rejected, missing keys take defaults.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::string& path);

struct SessionRecord {
    std::size_t session = 0;
    double acc_all = 0.0;
    double acc_base = 0.0;
    double acc_novel = 0.0;  // 0 when no novel classes have been seen yet
};

struct RunMetrics {
    std::vector<SessionRecord> sessions;
    double avg = 0.0;
    double pd = 0.0;
};

/// AVG = mean of acc_all over sessions, PD = first minus last acc_all.
RunMetrics compute_metrics(const std::vector<SessionRecord>& history);
RunMetrics compute_metrics(const std::vector<double>& acc_all);

struct LearnerState {
    Backbone model;
    PrototypeClassifier clf;
    CovarianceBuffer buffer;
    std::set<ClassId> base_classes;
    std::vector<ClassId> seen_classes;
    std::vector<SessionRecord> history;
    std::size_t base_parameter_count = 0;
    std::vector<std::size_t> base_widths;
    std::mt19937_64 rng;
    // kpd_static keeps its first decomposition alive across sessions.
    std::vector<DecomposedLayer> static_layers;
    std::optional<AsrReport> static_report;
    std::size_t base_multiply_count = 0;
};

/// Builds the model from the seed, trains every plain layer and the base
/// prototypes, seeds the covariance buffer with one exemplar per base class,
/// and records the session-0 accuracy.
LearnerState run_base_session(const ExperimentConfig& cfg, const SyntheticTask& task);

struct ProbeResult {
    std::size_t session = 0;
    double rate = 0.0;
    double base_acc = 0.0;
    double novel_acc = 0.0;
};

struct SessionOutcome {
    SessionRecord record;
    std::optional<AsrReport> report;
    std::vector<ProbeResult> probes;
    std::uint64_t backbone_hash = 0;
    /// Number of rehearsal exemplars in the smallest training batch.
    std::size_t min_rehearsal_in_batch = 0;
};

/// Select, decompose, train, merge, then grow the buffer and evaluate.
SessionOutcome run_incremental_session(LearnerState& state, const SessionData& session,
                                       const SyntheticTask& task, const ExperimentConfig& cfg);

struct ExperimentResult {
    RunMetrics metrics;
    std::vector<SessionOutcome> sessions;  // index 0 is the base session
    LearnerState final_state;
};

ExperimentResult run_experiment(const ExperimentConfig& cfg);
/// Runs the incremental sessions from a shared base checkpoint.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task,
                                const LearnerState& base);

struct Accuracy {
    double all = 0.0;
    double base = 0.0;
    double novel = 0.0;
};

Accuracy evaluate(const Backbone& model, const PrototypeClassifier& clf, const std::vector<Sample>& data,
                  const std::set<ClassId>& base_classes);

/// Accuracy with each adapter-output coordinate zeroed with probability
/// `rate` (no rescaling). Masks are drawn from `mask_seed` in sample order,
/// then layer order, then coordinate order.
std::pair<double, double> dropout_probe(const Backbone& model, const PrototypeClassifier& clf,
                                        const std::vector<Sample>& eval_data,
                                        const std::set<ClassId>& base_classes, double rate,
                                        std::uint64_t mask_seed);

/// Test samples of every class seen up to and including `session`.
std::vector<Sample> seen_test_data(const SyntheticTask& task, std::size_t session);

/// Hash over layer shapes and the bytes of every effective weight.
std::uint64_t backbone_hash(const Backbone& model);

/// LoRA-style adapter on `w`: B = 0, A ~ N(0, std²), frozen part = w.
DecomposedLayer random_lora_layer(const Matrix& w, std::size_t rank, double init_std,
                                  std::mt19937_64& rng, std::size_t layer_id);

std::string metrics_csv(const RunMetrics& m);
RunMetrics metrics_from_csv(const std::string& text);
std::string metrics_summary_json(const RunMetrics& m, Strategy strategy, std::uint64_t seed);

}  // namespace ckpd
