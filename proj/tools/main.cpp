// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdlib>
#include <string>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "commands.hpp"

namespace {

void configure_logging() {
    const char* env = std::getenv("CKPD_LOG");
    const std::string level = env ? env : "info";
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::set_level(spdlog::level::info);
    spdlog::set_pattern("[%l] %v");
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"ckpd: covariance-guided adapter decomposition for few-shot class-incremental learning"};
    app.require_subcommand(1);
    ckpd::cli::Options opts;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", opts.config, "experiment config (JSON)");
        sub->add_option("--out", opts.out, "output directory");
        sub->add_option("--seed", opts.seed, "override the config seed");
        sub->add_option("--strategy", opts.strategy,
                        "ckpd | kpd_static | freeze | full_adapt | lora_random | svd_plain");
        sub->add_option("--rank", opts.rank, "adapter rank r");
        sub->add_option("--k", opts.k, "number of layers to adapt");
    };

    auto* gen = app.add_subcommand("gen-data", "write the synthetic session splits");
    common(gen);
    auto* run = app.add_subcommand("run", "run one experiment and write metrics and checkpoints");
    common(run);
    auto* dec = app.add_subcommand("decompose", "decompose one weight matrix given captured activations");
    common(dec);
    dec->add_option("--weight", opts.weight, "weight matrix (CKPD-MAT)")->required();
    dec->add_option("--activations", opts.activations, "input features d_in x M (CKPD-MAT)")->required();
    auto* asr = app.add_subcommand("asr-report", "per-layer sensitivity ratios and selected layers");
    common(asr);
    asr->add_option("--checkpoint", opts.checkpoint, "checkpoint directory")->required();
    asr->add_option("--buffer", opts.buffer, "covariance buffer (CKPD-BUF)")->required();
    auto* probe = app.add_subcommand("probe-dropout", "evaluate with dropout on adapter outputs");
    common(probe);
    probe->add_option("--rate", opts.rate, "drop probability in [0,1)");
    auto* met = app.add_subcommand("metrics", "recompute AVG and PD from a metrics CSV");
    common(met);
    met->add_option("--input", opts.input, "metrics CSV")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : ckpd::cli::kUsage;
    }
    return ckpd::cli::run_command(app.get_subcommands().front()->get_name(), opts);
}
