// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <filesystem>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>
#include <spdlog/spdlog.h>

#include "ckpd/als.hpp"
#include "ckpd/covariance.hpp"
#include "ckpd/errors.hpp"
#include "ckpd/fscil.hpp"
#include "ckpd/io.hpp"
#include "ckpd/kpd.hpp"

namespace fs = std::filesystem;

namespace ckpd::cli {

namespace {

std::string join(const std::string& dir, const std::string& name) { return (fs::path(dir) / name).string(); }

ExperimentConfig resolve_config(const Options& opts) {
    ExperimentConfig cfg = opts.config.empty() ? ExperimentConfig{} : load_config(opts.config);
    if (opts.seed) cfg.spec.seed = *opts.seed;
    if (opts.strategy) cfg.strategy = strategy_from_string(*opts.strategy);
    if (opts.rank) cfg.kpd.rank_r = *opts.rank;
    if (opts.k) cfg.k_layers = *opts.k;
    cfg.output_dir = opts.out;
    cfg.validate();
    return cfg;
}

std::string probes_csv(const ExperimentResult& res) {
    std::ostringstream os;
    os << "session,rate,base_acc,novel_acc\n";
    for (const auto& s : res.sessions)
        for (const auto& p : s.probes)
            os << p.session << ',' << format_double(p.rate) << ',' << format_double(p.base_acc) << ','
               << format_double(p.novel_acc) << '\n';
    return os.str();
}

}  // namespace

int cmd_gen_data(const Options& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    const SyntheticTask task = generate_task(cfg.spec);
    save_task(opts.out, task);
    spdlog::info("wrote {} sessions to {}", task.sessions.size(), opts.out);
    return kOk;
}

int cmd_run(const Options& opts) {
    const ExperimentConfig cfg = resolve_config(opts);
    fs::create_directories(opts.out);
    const ExperimentResult res = run_experiment(cfg);

    write_text_file(join(opts.out, "config.json"), config_to_json(cfg));
    write_text_file(join(opts.out, "metrics.csv"), metrics_csv(res.metrics));
    write_text_file(join(opts.out, "summary.json"), metrics_summary_json(res.metrics, cfg.strategy, cfg.spec.seed));
    std::ostringstream hashes;
    hashes << "session,backbone_hash\n";
    for (const auto& s : res.sessions) {
        hashes << s.record.session << ',' << fmt::format("{:016x}", s.backbone_hash) << '\n';
        spdlog::info("session {} acc_all={:.4f} backbone_hash={:016x}", s.record.session, s.record.acc_all,
                     s.backbone_hash);
        if (s.report) {
            write_text_file(join(opts.out, fmt::format("asr_session_{}.json", s.record.session)),
                            asr_report_json(*s.report));
        }
    }
    write_text_file(join(opts.out, "backbone_hashes.csv"), hashes.str());
    if (!cfg.probe_rates.empty()) write_text_file(join(opts.out, "probe.csv"), probes_csv(res));
    save_checkpoint(join(opts.out, "checkpoint"), res.final_state.model, res.final_state.clf);
    save_buffer(join(opts.out, "buffer.txt"), res.final_state.buffer);
    spdlog::info("{}: AVG={:.4f} PD={:.4f}", to_string(cfg.strategy), res.metrics.avg, res.metrics.pd);
    return kOk;
}

int cmd_decompose(const Options& opts) {
    if (opts.weight.empty() || opts.activations.empty()) {
        throw ConfigError("decompose: --weight and --activations are required");
    }
    const Matrix w = load_matrix(opts.weight);
    const Matrix features = load_matrix(opts.activations);
    if (features.rows() != w.cols()) {
        throw ShapeError(fmt::format("decompose: activations have {} rows but weight has {} columns",
                                     features.rows(), w.cols()));
    }
    KpdConfig kpd;
    if (!opts.config.empty()) kpd = load_config(opts.config).kpd;
    if (opts.rank) kpd.rank_r = *opts.rank;
    kpd.validate();

    const Matrix sigma = compute_input_covariance(features);
    const DecomposedLayer layer = decompose(w, sigma, kpd, 0);
    const double err = frobenius_norm(subtract(w, merge(layer))) / std::max(frobenius_norm(w), 1e-300);

    fs::create_directories(opts.out);
    save_decomposed(opts.out, "layer", layer);
    nlohmann::ordered_json j;
    j["rank_r"] = layer.rank_r;
    j["singular_values"] = layer.singular_values;
    j["reconstruction_error"] = err;
    j["asr"] = compute_asr(layer.singular_values, layer.rank_r);
    j["lambda_final"] = layer.lambda_final;
    write_text_file(join(opts.out, "decomposition.json"), j.dump(2) + "\n");
    spdlog::info("decompose: asr={} reconstruction_error={:.3e}", j["asr"].get<double>(), err);
    return kOk;
}

int cmd_asr_report(const Options& opts) {
    if (opts.checkpoint.empty() || opts.buffer.empty()) {
        throw ConfigError("asr-report: --checkpoint and --buffer are required");
    }
    KpdConfig kpd;
    std::size_t k = ExperimentConfig{}.k_layers;
    if (!opts.config.empty()) {
        const ExperimentConfig cfg = load_config(opts.config);
        kpd = cfg.kpd;
        k = cfg.k_layers;
    }
    if (opts.rank) kpd.rank_r = *opts.rank;
    if (opts.k) k = *opts.k;
    kpd.validate();

    const Checkpoint ckpt = load_checkpoint(opts.checkpoint);
    const CovarianceBuffer buffer = load_buffer(opts.buffer);
    if (!buffer.empty() && buffer.exemplars().front().input.size() != ckpt.model.input_dim()) {
        throw ShapeError(fmt::format("asr-report: buffer dim {} but model input dim {}",
                                     buffer.exemplars().front().input.size(), ckpt.model.input_dim()));
    }
    const SessionSelection sel = session_selection(ckpt.model, buffer, kpd, k);
    fs::create_directories(opts.out);
    write_text_file(join(opts.out, "asr.csv"), asr_report_csv(sel.report));
    write_text_file(join(opts.out, "asr.json"), asr_report_json(sel.report));
    return kOk;
}

int cmd_probe_dropout(const Options& opts) {
    ExperimentConfig cfg = resolve_config(opts);
    if (opts.rate) {
        if (!(*opts.rate >= 0.0 && *opts.rate < 1.0)) {
            throw InvalidRate(fmt::format("probe-dropout: rate {} outside [0,1)", *opts.rate));
        }
        cfg.probe_rates = {*opts.rate};
    }
    if (cfg.probe_rates.empty()) throw ConfigError("probe-dropout: give --rate or probe_rates in the config");
    const ExperimentResult res = run_experiment(cfg);
    fs::create_directories(opts.out);
    write_text_file(join(opts.out, "probe.csv"), probes_csv(res));
    return kOk;
}

int cmd_metrics(const Options& opts) {
    if (opts.input.empty()) throw ConfigError("metrics: --input is required");
    const RunMetrics m = metrics_from_csv(read_text_file(opts.input));
    nlohmann::ordered_json j;
    j["avg"] = m.avg;
    j["pd"] = m.pd;
    j["sessions"] = m.sessions.size();
    fs::create_directories(opts.out);
    write_text_file(join(opts.out, "metrics_summary.json"), j.dump(2) + "\n");
    fmt::print("avg={} pd={}\n", format_double(m.avg), format_double(m.pd));
    return kOk;
}

int run_command(const std::string& name, const Options& opts) {
    try {
        if (name == "gen-data") return cmd_gen_data(opts);
        if (name == "run") return cmd_run(opts);
        if (name == "decompose") return cmd_decompose(opts);
        if (name == "asr-report") return cmd_asr_report(opts);
        if (name == "probe-dropout") return cmd_probe_dropout(opts);
        if (name == "metrics") return cmd_metrics(opts);
        spdlog::error("unknown command '{}'", name);
        return kUsage;
    } catch (const UsageError& e) {
        spdlog::error("{}", e.what());
        return kUsage;
    } catch (const NumericalError& e) {
        spdlog::error("{}", e.what());
        return kNumerical;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kInternal;
    }
}

}  // namespace ckpd::cli
