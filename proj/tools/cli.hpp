// Copyright 2026 The advsdg Authors.
// SPDX-License-Identifier: Apache-2.0

// The `advsdg` command line. Exposed as a library so tests can drive every
// command in-process.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "advsdg/config.hpp"

namespace advsdg::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Provenance of one run directory, written as manifest.json.
struct RunManifest {
    std::string command;
    Config config;  // fully resolved
    std::uint64_t seed = 0;
    std::string version;
    std::string start_time;  // ISO-8601 UTC
    std::string end_time;
    std::string output_dir;

    [[nodiscard]] std::string to_json() const;
    [[nodiscard]] static RunManifest from_json(const std::string& text);
};

[[nodiscard]] std::string version_stamp();

/// `args` excludes the program name. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace advsdg::cli
