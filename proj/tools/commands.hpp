// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace ckpd::cli {

enum ExitCode : int { kOk = 0, kInternal = 1, kUsage = 2, kNumerical = 3 };

struct Options {
    std::string config;
    std::string out = "out";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> strategy;
    std::optional<std::size_t> rank;
    std::optional<std::size_t> k;
    std::optional<double> rate;
    std::string weight;
    std::string activations;
    std::string checkpoint;
    std::string buffer;
    std::string input;
};

int cmd_gen_data(const Options& opts);
int cmd_run(const Options& opts);
int cmd_decompose(const Options& opts);
int cmd_asr_report(const Options& opts);
int cmd_probe_dropout(const Options& opts);
int cmd_metrics(const Options& opts);

/// Dispatches by subcommand name and maps library errors to exit codes.
int run_command(const std::string& name, const Options& opts);

}  // namespace ckpd::cli
