// Copyright (c) 2026, The ckpd authors
// SPDX-License-Identifier: Apache-2.0

// Helpers for driving the ckpd executable from tests.

#pragma once

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <string>

#ifndef CKPD_CLI_PATH
#error "CKPD_CLI_PATH must point at the ckpd executable"
#endif

namespace cli_util {

namespace fs = std::filesystem;

inline int run_cli(const std::string& args) {
    const std::string cmd = "CKPD_LOG=error '" CKPD_CLI_PATH "' " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

inline fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("ckpd_cli_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

inline std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

using Tree = std::map<std::string, std::string>;

/// Relative path → file bytes for every regular file under root.
inline Tree snapshot(const fs::path& root) {
    Tree out;
    for (const auto& e : fs::recursive_directory_iterator(root))
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
    return out;
}

/// Runs `args` twice into a fresh `out` directory and reports whether both
/// runs succeeded and left byte-identical trees.
inline bool replays_identically(const std::string& args, const fs::path& out) {
    fs::remove_all(out);
    if (run_cli(args + " --out '" + out.string() + "'") != 0) return false;
    const Tree first = snapshot(out);
    fs::remove_all(out);
    if (run_cli(args + " --out '" + out.string() + "'") != 0) return false;
    return !first.empty() && snapshot(out) == first;
}

}  // namespace cli_util
