// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "ckpd/fscil.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string_view>

#include <fmt/format.h>
#include <json.hpp>

#include "ckpd/errors.hpp"

namespace ckpd {

namespace {

// Independent generator streams per purpose so that, for example, changing
// the number of base epochs does not change the synthetic data.
enum Stream : std::uint64_t {
    kStreamMeans = 1,
    kStreamModel = 2,
    kStreamBaseTrain = 3,
    kStreamSessions = 4,
    kStreamBuffer = 5,
    kStreamData = 100,
};

std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
    return std::mt19937_64(seq);
}

Vector normalized(Vector v) {
    const double n = norm2(v);
    if (n == 0.0) throw DegenerateInput("normalize: zero vector");
    for (double& x : v) x /= n;
    return v;
}

}  // namespace

void SessionSpec::validate() const {
    if (ways == 0 || shots == 0) throw InvalidSpec("session spec: ways and shots must be >= 1");
    if (base_classes == 0 || base_samples_per_class == 0) {
        throw InvalidSpec("session spec: base session needs at least one class and one sample");
    }
    if (test_samples_per_class == 0) throw InvalidSpec("session spec: test_samples_per_class must be >= 1");
    if (input_dim == 0) throw InvalidSpec("session spec: input_dim must be >= 1");
    if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) {
        throw InvalidSpec("session spec: noise_sigma must be finite and >= 0");
    }
}

SyntheticTask generate_task(const SessionSpec& spec) {
    spec.validate();
    SyntheticTask task;
    auto mean_rng = make_rng(spec.seed, kStreamMeans);
    std::normal_distribution<double> unit(0.0, 1.0);
    for (std::size_t c = 0; c < spec.total_classes(); ++c) {
        Vector m(spec.input_dim);
        do {
            for (double& x : m) x = unit(mean_rng);
        } while (norm2(m) == 0.0);
        task.class_means.push_back(normalized(std::move(m)));
    }

    auto draw = [&](std::mt19937_64& rng, ClassId c) {
        Vector x = task.class_means[static_cast<std::size_t>(c)];
        if (spec.noise_sigma > 0.0) {
            std::normal_distribution<double> noise(0.0, spec.noise_sigma);
            for (double& v : x) v += noise(rng);
        }
        return Sample{std::move(x), c};
    };

    ClassId next = 0;
    for (std::size_t s = 0; s <= spec.num_incremental; ++s) {
        SessionData session;
        session.session_id = s;
        const std::size_t n_classes = s == 0 ? spec.base_classes : spec.ways;
        const std::size_t n_train = s == 0 ? spec.base_samples_per_class : spec.shots;
        auto rng = make_rng(spec.seed, kStreamData + s);
        for (std::size_t k = 0; k < n_classes; ++k) {
            const ClassId c = next++;
            session.classes.push_back(c);
            for (std::size_t i = 0; i < n_train; ++i) session.train.push_back(draw(rng, c));
            for (std::size_t i = 0; i < spec.test_samples_per_class; ++i) session.test.push_back(draw(rng, c));
        }
        task.sessions.push_back(std::move(session));
    }
    return task;
}

std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::Ckpd: return "ckpd";
        case Strategy::KpdStatic: return "kpd_static";
        case Strategy::Freeze: return "freeze";
        case Strategy::FullAdapt: return "full_adapt";
        case Strategy::LoraRandom: return "lora_random";
        case Strategy::SvdPlain: return "svd_plain";
    }
    return "unknown";
}

const std::vector<Strategy>& all_strategies() {
    static const std::vector<Strategy> all{Strategy::Ckpd,      Strategy::KpdStatic,  Strategy::Freeze,
                                           Strategy::FullAdapt, Strategy::LoraRandom, Strategy::SvdPlain};
    return all;
}

Strategy strategy_from_string(const std::string& s) {
    for (Strategy st : all_strategies())
        if (to_string(st) == s) return st;
    throw InvalidStrategy(fmt::format("unknown strategy '{}'", s));
}

void ExperimentConfig::validate() const {
    spec.validate();
    kpd.validate();
    if (widths.size() < 2) throw ConfigError("config: widths needs at least two entries");
    if (widths.front() != spec.input_dim) {
        throw ConfigError(fmt::format("config: first width {} must equal input_dim {}", widths.front(),
                                      spec.input_dim));
    }
    if (std::find(widths.begin(), widths.end(), 0u) != widths.end()) throw ConfigError("config: zero width");
    const std::size_t n_layers = widths.size() - 1;
    if (k_layers > n_layers) {
        throw ConfigError(fmt::format("config: k_layers {} exceeds {} layers", k_layers, n_layers));
    }
    for (std::size_t l = 0; l < n_layers; ++l) {
        if (kpd.rank_r >= std::min(widths[l], widths[l + 1])) {
            throw ConfigError(fmt::format("config: rank_r {} too large for layer {} ({}x{})", kpd.rank_r, l,
                                          widths[l + 1], widths[l]));
        }
    }
    if (!(temperature > 0.0)) throw ConfigError("config: temperature must be > 0");
    if (base_batch == 0) throw ConfigError("config: base_batch must be >= 1");
    if (!(base_lr >= 0.0) || !(lr_clf >= 0.0) || !(lr_adapter >= 0.0)) {
        throw ConfigError("config: learning rates must be >= 0");
    }
    if (!(lora_init_std >= 0.0)) throw ConfigError("config: lora_init_std must be >= 0");
    for (double r : probe_rates)
        if (!(r >= 0.0 && r < 1.0)) throw ConfigError(fmt::format("config: probe rate {} outside [0,1)", r));
}

namespace {

using json = nlohmann::ordered_json;

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(fmt::format("config: bad value for '{}': {}", key, e.what()));
    }
}

void read_size(const json& j, const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(fmt::format("config: '{}' must be a non-negative integer", key));
    out = v.get<std::size_t>();
}

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys{
        "base_classes", "base_samples_per_class", "num_incremental", "ways", "shots",
        "test_samples_per_class", "input_dim", "noise_sigma", "seed", "rank_r", "lambda0",
        "inverse_threshold", "max_doublings", "adapter_split", "k_layers", "strategy", "widths", "temperature",
        "base_epochs", "base_batch", "base_lr", "lr_clf", "lr_adapter", "iterations", "rehearsal_batch",
        "lora_init_std", "probe_rates", "probe_seed", "output_dir"};
    return keys;
}

}  // namespace

ExperimentConfig config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(fmt::format("config: invalid JSON: {}", e.what()));
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");
    for (const auto& [key, _] : j.items())
        if (!known_keys().count(key)) throw ConfigError(fmt::format("config: unknown key '{}'", key));

    ExperimentConfig cfg;
    auto& s = cfg.spec;
    read_size(j, "base_classes", s.base_classes);
    read_size(j, "base_samples_per_class", s.base_samples_per_class);
    read_size(j, "num_incremental", s.num_incremental);
    read_size(j, "ways", s.ways);
    read_size(j, "shots", s.shots);
    read_size(j, "test_samples_per_class", s.test_samples_per_class);
    read_size(j, "input_dim", s.input_dim);
    read_field(j, "noise_sigma", s.noise_sigma);
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned()) throw ConfigError("config: 'seed' must be a non-negative integer");
        s.seed = j["seed"].get<std::uint64_t>();
    }
    read_size(j, "rank_r", cfg.kpd.rank_r);
    read_field(j, "lambda0", cfg.kpd.lambda0);
    read_field(j, "inverse_threshold", cfg.kpd.inverse_threshold);
    read_size(j, "max_doublings", cfg.kpd.max_doublings);
    if (j.contains("adapter_split")) {
        std::string name;
        read_field(j, "adapter_split", name);
        cfg.kpd.split = adapter_split_from_string(name);
    }
    read_size(j, "k_layers", cfg.k_layers);
    if (j.contains("strategy")) {
        std::string name;
        read_field(j, "strategy", name);
        cfg.strategy = strategy_from_string(name);
    }
    read_field(j, "widths", cfg.widths);
    read_field(j, "temperature", cfg.temperature);
    read_size(j, "base_epochs", cfg.base_epochs);
    read_size(j, "base_batch", cfg.base_batch);
    read_field(j, "base_lr", cfg.base_lr);
    read_field(j, "lr_clf", cfg.lr_clf);
    cfg.lr_adapter = 0.1 * cfg.lr_clf;
    read_field(j, "lr_adapter", cfg.lr_adapter);
    read_size(j, "iterations", cfg.iterations);
    read_size(j, "rehearsal_batch", cfg.rehearsal_batch);
    read_field(j, "lora_init_std", cfg.lora_init_std);
    read_field(j, "probe_rates", cfg.probe_rates);
    if (j.contains("probe_seed")) {
        if (!j["probe_seed"].is_number_unsigned()) throw ConfigError("config: 'probe_seed' must be a non-negative integer");
        cfg.probe_seed = j["probe_seed"].get<std::uint64_t>();
    }
    read_field(j, "output_dir", cfg.output_dir);
    cfg.validate();
    return cfg;
}

std::string config_to_json(const ExperimentConfig& cfg) {
    json j;
    const auto& s = cfg.spec;
    j["base_classes"] = s.base_classes;
    j["base_samples_per_class"] = s.base_samples_per_class;
    j["num_incremental"] = s.num_incremental;
    j["ways"] = s.ways;
    j["shots"] = s.shots;
    j["test_samples_per_class"] = s.test_samples_per_class;
    j["input_dim"] = s.input_dim;
    j["noise_sigma"] = s.noise_sigma;
    j["seed"] = s.seed;
    j["rank_r"] = cfg.kpd.rank_r;
    j["lambda0"] = cfg.kpd.lambda0;
    j["inverse_threshold"] = cfg.kpd.inverse_threshold;
    j["max_doublings"] = cfg.kpd.max_doublings;
    j["adapter_split"] = to_string(cfg.kpd.split);
    j["k_layers"] = cfg.k_layers;
    j["strategy"] = to_string(cfg.strategy);
    j["widths"] = cfg.widths;
    j["temperature"] = cfg.temperature;
    j["base_epochs"] = cfg.base_epochs;
    j["base_batch"] = cfg.base_batch;
    j["base_lr"] = cfg.base_lr;
    j["lr_clf"] = cfg.lr_clf;
    j["lr_adapter"] = cfg.lr_adapter;
    j["iterations"] = cfg.iterations;
    j["rehearsal_batch"] = cfg.rehearsal_batch;
    j["lora_init_std"] = cfg.lora_init_std;
    j["probe_rates"] = cfg.probe_rates;
    j["probe_seed"] = cfg.probe_seed;
    j["output_dir"] = cfg.output_dir;
    return j.dump(2) + "\n";
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return config_from_json(ss.str());
}

RunMetrics compute_metrics(const std::vector<SessionRecord>& history) {
    if (history.empty()) throw InvalidSpec("compute_metrics: no sessions recorded");
    RunMetrics m;
    m.sessions = history;
    double sum = 0.0;
    for (const auto& r : history) sum += r.acc_all;
    m.avg = sum / static_cast<double>(history.size());
    m.pd = history.front().acc_all - history.back().acc_all;
    return m;
}

RunMetrics compute_metrics(const std::vector<double>& acc_all) {
    std::vector<SessionRecord> history;
    for (std::size_t i = 0; i < acc_all.size(); ++i) history.push_back({i, acc_all[i], 0.0, 0.0});
    return compute_metrics(history);
}

Accuracy evaluate(const Backbone& model, const PrototypeClassifier& clf, const std::vector<Sample>& data,
                  const std::set<ClassId>& base_classes) {
    std::size_t hit = 0, base_hit = 0, base_n = 0, novel_hit = 0, novel_n = 0;
    for (const auto& s : data) {
        const bool ok = classify(clf, forward(model, s.x).feature).class_id == s.y;
        hit += ok;
        if (base_classes.count(s.y)) {
            ++base_n;
            base_hit += ok;
        } else {
            ++novel_n;
            novel_hit += ok;
        }
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    return {ratio(hit, data.size()), ratio(base_hit, base_n), ratio(novel_hit, novel_n)};
}

std::pair<double, double> dropout_probe(const Backbone& model, const PrototypeClassifier& clf,
                                        const std::vector<Sample>& eval_data,
                                        const std::set<ClassId>& base_classes, double rate,
                                        std::uint64_t mask_seed) {
    if (!(rate >= 0.0 && rate < 1.0)) throw InvalidRate(fmt::format("dropout_probe: rate {} outside [0,1)", rate));
    std::mt19937_64 rng(mask_seed);
    const AdapterMask mask{rate, &rng};
    std::size_t base_hit = 0, base_n = 0, novel_hit = 0, novel_n = 0;
    for (const auto& s : eval_data) {
        const bool ok = classify(clf, forward(model, s.x, mask).feature).class_id == s.y;
        if (base_classes.count(s.y)) {
            ++base_n;
            base_hit += ok;
        } else {
            ++novel_n;
            novel_hit += ok;
        }
    }
    auto ratio = [](std::size_t a, std::size_t b) { return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b); };
    return {ratio(base_hit, base_n), ratio(novel_hit, novel_n)};
}

std::vector<Sample> seen_test_data(const SyntheticTask& task, std::size_t session) {
    std::vector<Sample> out;
    for (std::size_t s = 0; s <= session && s < task.sessions.size(); ++s) {
        const auto& t = task.sessions[s].test;
        out.insert(out.end(), t.begin(), t.end());
    }
    return out;
}

std::uint64_t backbone_hash(const Backbone& model) {
    std::string bytes;
    for (std::size_t l = 0; l < model.num_layers(); ++l) {
        const Matrix w = model.effective_weight(l);
        const std::size_t shape[2] = {w.rows(), w.cols()};
        bytes.append(reinterpret_cast<const char*>(shape), sizeof(shape));
        bytes.append(reinterpret_cast<const char*>(w.data().data()), w.size() * sizeof(double));
    }
    return std::hash<std::string_view>{}(bytes);
}

DecomposedLayer random_lora_layer(const Matrix& w, std::size_t rank, double init_std, std::mt19937_64& rng,
                                  std::size_t layer_id) {
    if (rank < 1 || rank >= std::min(w.rows(), w.cols())) {
        throw RankTooLarge(fmt::format("lora: rank {} invalid for {}", rank, w.shape_string()));
    }
    const double std_dev = init_std > 0.0 ? init_std : 1.0 / std::sqrt(static_cast<double>(w.cols()));
    std::normal_distribution<double> dist(0.0, std_dev);
    DecomposedLayer out;
    out.w_frozen = w;
    out.b = Matrix(w.rows(), rank);
    out.a = Matrix(rank, w.cols());
    for (double& v : out.a.data()) v = dist(rng);
    out.rank_r = rank;
    out.layer_id = layer_id;
    return out;
}

namespace {

Vector class_prototype(const Backbone& model, const std::vector<Sample>& samples, ClassId c) {
    Vector acc(model.output_dim(), 0.0);
    for (const auto& s : samples) {
        if (s.y != c) continue;
        const Vector f = forward(model, s.x).feature;
        const double n = norm2(f);
        if (n == 0.0) continue;
        for (std::size_t i = 0; i < f.size(); ++i) acc[i] += f[i] / n;
    }
    if (norm2(acc) == 0.0) acc[0] = 1.0;
    return acc;
}

SessionRecord record_for(std::size_t session, const Accuracy& a) { return {session, a.all, a.base, a.novel}; }

void check_zero_overhead(const LearnerState& state, const Backbone& merged, std::size_t session) {
    if (merged.widths() != state.base_widths || merged.parameter_count() != state.base_parameter_count ||
        merged.merged_multiply_count() != state.base_multiply_count) {
        throw Error(fmt::format("session {}: merged model has {} parameters and {} multiplies, base had {} and {}",
                                session, merged.parameter_count(), merged.merged_multiply_count(),
                                state.base_parameter_count, state.base_multiply_count));
    }
    for (std::size_t l = 0; l < merged.num_layers(); ++l) {
        if (merged.is_decomposed(l)) throw Error(fmt::format("session {}: layer {} left unmerged", session, l));
    }
}

}  // namespace

LearnerState run_base_session(const ExperimentConfig& cfg, const SyntheticTask& task) {
    cfg.validate();
    const std::uint64_t seed = cfg.spec.seed;
    auto model_rng = make_rng(seed, kStreamModel);
    auto buffer_rng = make_rng(seed, kStreamBuffer);
    LearnerState state{Backbone::random(cfg.widths, model_rng), PrototypeClassifier(cfg.temperature),
                       CovarianceBuffer(buffer_rng()), {}, {}, {}, 0, {}, make_rng(seed, kStreamSessions),
                       {}, std::nullopt, 0};
    const SessionData& base = task.sessions.at(0);

    for (ClassId c : base.classes) {
        state.clf.add_prototype(c, class_prototype(state.model, base.train, c), true);
        state.base_classes.insert(c);
        state.seen_classes.push_back(c);
    }

    auto train_rng = make_rng(seed, kStreamBaseTrain);
    std::vector<std::size_t> order(base.train.size());
    std::iota(order.begin(), order.end(), 0);
    const TrainOptions opts{true};
    std::vector<Sample> batch;
    for (std::size_t epoch = 0; epoch < cfg.base_epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), train_rng);
        for (std::size_t start = 0; start < order.size(); start += cfg.base_batch) {
            batch.clear();
            for (std::size_t i = start; i < std::min(order.size(), start + cfg.base_batch); ++i) {
                batch.push_back(base.train[order[i]]);
            }
            const auto lg = loss_and_grads(state.model, state.clf, batch, opts);
            apply_update(state.model, state.clf, lg.tape, cfg.base_lr, cfg.base_lr);
        }
    }
    state.clf.set_trainable({});

    std::vector<ClassSamples> per_class;
    for (ClassId c : base.classes) {
        std::vector<Vector> xs;
        for (const auto& s : base.train)
            if (s.y == c) xs.push_back(s.x);
        per_class.emplace_back(c, std::move(xs));
    }
    state.buffer = update_buffer(std::move(state.buffer), per_class);

    state.base_parameter_count = state.model.parameter_count();
    state.base_widths = state.model.widths();
    state.base_multiply_count = state.model.merged_multiply_count();
    state.history.push_back(record_for(0, evaluate(state.model, state.clf, base.test, state.base_classes)));
    return state;
}

SessionOutcome run_incremental_session(LearnerState& state, const SessionData& session, const SyntheticTask& task,
                                       const ExperimentConfig& cfg) {
    const std::size_t t = session.session_id;
    SessionOutcome outcome;
    TrainOptions opts;

    // (1)+(2) choose layers and build their adapters.
    auto select = [&]() { return session_selection(state.model, state.buffer, cfg.kpd, cfg.k_layers, t); };
    auto install = [&](std::vector<DecomposedLayer> layers) {
        for (auto& d : layers) {
            const std::size_t id = d.layer_id;
            state.model.layer(id) = std::move(d);
        }
    };
    switch (cfg.strategy) {
        case Strategy::Ckpd: {
            auto sel = select();
            outcome.report = sel.report;
            install(std::move(sel.layers));
            break;
        }
        case Strategy::KpdStatic: {
            if (!state.static_report) {
                auto sel = select();
                state.static_report = sel.report;
                state.static_layers = std::move(sel.layers);
            }
            outcome.report = state.static_report;
            outcome.report->session_id = t;
            install(state.static_layers);
            break;
        }
        case Strategy::SvdPlain: {
            auto sel = select();
            outcome.report = sel.report;
            std::vector<DecomposedLayer> layers;
            for (std::size_t id : sel.report.selected) {
                const Matrix w = state.model.effective_weight(id);
                layers.push_back(decompose(w, Matrix::identity(w.cols()), cfg.kpd, id));
            }
            install(std::move(layers));
            break;
        }
        case Strategy::LoraRandom: {
            auto sel = select();
            outcome.report = sel.report;
            std::vector<DecomposedLayer> layers;
            for (std::size_t id : sel.report.selected) {
                layers.push_back(random_lora_layer(state.model.effective_weight(id), cfg.kpd.rank_r,
                                                   cfg.lora_init_std, state.rng, id));
                layers.back().singular_values = sel.layers[layers.size() - 1].singular_values;
            }
            install(std::move(layers));
            break;
        }
        case Strategy::FullAdapt:
            opts.train_plain_layers = true;
            break;
        case Strategy::Freeze:
            break;
    }

    // New prototypes start at the normalised mean feature of their shots.
    std::set<ClassId> fresh;
    for (ClassId c : session.classes) {
        state.clf.add_prototype(c, class_prototype(state.model, session.train, c), true);
        fresh.insert(c);
    }
    state.clf.set_trainable(fresh);

    // (3) train on session data plus rehearsal exemplars.
    const auto& exemplars = state.buffer.exemplars();
    std::vector<std::size_t> pool(exemplars.size());
    std::iota(pool.begin(), pool.end(), 0);
    outcome.min_rehearsal_in_batch = cfg.iterations == 0 ? 0 : exemplars.size();
    std::vector<Sample> batch;
    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        batch.assign(session.train.begin(), session.train.end());
        std::vector<std::size_t> picked;
        if (exemplars.size() <= cfg.rehearsal_batch) {
            picked = pool;
        } else {
            std::sample(pool.begin(), pool.end(), std::back_inserter(picked), cfg.rehearsal_batch, state.rng);
        }
        for (std::size_t i : picked) batch.push_back(Sample{exemplars[i].input, exemplars[i].class_id});
        outcome.min_rehearsal_in_batch = std::min(outcome.min_rehearsal_in_batch, picked.size());
        const auto lg = loss_and_grads(state.model, state.clf, batch, opts);
        apply_update(state.model, state.clf, lg.tape, cfg.lr_adapter, cfg.lr_clf);
    }
    state.clf.set_trainable({});
    for (ClassId c : session.classes) state.seen_classes.push_back(c);

    const std::vector<Sample> eval_data = seen_test_data(task, t);
    for (double rate : cfg.probe_rates) {
        const auto [b, n] = dropout_probe(state.model, state.clf, eval_data, state.base_classes, rate,
                                          cfg.probe_seed);
        outcome.probes.push_back({t, rate, b, n});
    }

    // (4) merge back.
    if (cfg.strategy == Strategy::KpdStatic) {
        for (auto& d : state.static_layers) d = std::get<DecomposedLayer>(state.model.layer(d.layer_id));
    }
    state.model.merge_all();
    check_zero_overhead(state, state.model, t);

    // (5) grow the covariance buffer with one exemplar per new class.
    std::vector<ClassSamples> per_class;
    for (ClassId c : session.classes) {
        std::vector<Vector> xs;
        for (const auto& s : session.train)
            if (s.y == c) xs.push_back(s.x);
        per_class.emplace_back(c, std::move(xs));
    }
    state.buffer = update_buffer(std::move(state.buffer), per_class);

    outcome.record = record_for(t, evaluate(state.model, state.clf, eval_data, state.base_classes));
    outcome.backbone_hash = backbone_hash(state.model);
    state.history.push_back(outcome.record);
    return outcome;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const SyntheticTask& task, const LearnerState& base) {
    cfg.validate();
    ExperimentResult result{{}, {}, base};
    LearnerState& state = result.final_state;
    SessionOutcome base_outcome;
    base_outcome.record = state.history.front();
    base_outcome.backbone_hash = backbone_hash(state.model);
    result.sessions.push_back(base_outcome);
    for (std::size_t s = 1; s < task.sessions.size(); ++s) {
        result.sessions.push_back(run_incremental_session(state, task.sessions[s], task, cfg));
    }
    result.metrics = compute_metrics(state.history);
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    const SyntheticTask task = generate_task(cfg.spec);
    const LearnerState base = run_base_session(cfg, task);
    return run_experiment(cfg, task, base);
}

std::string metrics_csv(const RunMetrics& m) {
    std::ostringstream os;
    os << "session,acc_all,acc_base,acc_novel\n";
    for (const auto& r : m.sessions) {
        os << r.session << ',' << format_double(r.acc_all) << ',' << format_double(r.acc_base) << ','
           << format_double(r.acc_novel) << '\n';
    }
    return os.str();
}

RunMetrics metrics_from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line.rfind("session,acc_all", 0) != 0) {
        throw FormatError("metrics CSV: missing 'session,acc_all,...' header");
    }
    std::vector<SessionRecord> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() != 4) throw FormatError("metrics CSV: expected 4 columns in '" + line + "'");
        try {
            rows.push_back({std::stoul(cells[0]), std::stod(cells[1]), std::stod(cells[2]), std::stod(cells[3])});
        } catch (const std::exception&) {
            throw FormatError("metrics CSV: bad row '" + line + "'");
        }
    }
    if (rows.empty()) throw FormatError("metrics CSV: no rows");
    return compute_metrics(rows);
}

std::string metrics_summary_json(const RunMetrics& m, Strategy strategy, std::uint64_t seed) {
    json j;
    j["avg"] = m.avg;
    j["pd"] = m.pd;
    j["strategy"] = to_string(strategy);
    j["seed"] = seed;
    return j.dump(2) + "\n";
}

}  // namespace ckpd
