// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#include "json.hpp"

namespace segctl::cli {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kOutDirEnv = "SEGCTL_OUT_DIR";
inline constexpr const char* kManifestName = "manifest.json";

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitUsage = 2, kExitRuntime = 3 };

// Everything a subcommand needs to run. Written to <output_dir>/manifest.json
// before any other output; feeding it back through --manifest repeats the run.
struct RunManifest {
    std::string subcommand;
    nlohmann::json config = nlohmann::json::object();
    std::vector<uint64_t> seeds;
    std::string output_dir;
    std::string tool_version = kToolVersion;
    std::string timestamp;
};

void to_json(nlohmann::json& j, const RunManifest& m);
RunManifest manifest_from_json(const nlohmann::json& j);
RunManifest load_manifest(const std::filesystem::path& path);

std::string utc_timestamp();
std::string default_output_dir();

// "a..b" (inclusive) or "a,b,c".
std::vector<uint64_t> parse_seed_list(const std::string& text);

// Runs the manifest and returns the exit code. Library errors propagate.
int execute(const RunManifest& m, std::ostream& out);

int cmd_mask_dump(const RunManifest& m, std::ostream& out);
int cmd_simulate(const RunManifest& m, std::ostream& out);
int cmd_ablate_align(const RunManifest& m, std::ostream& out);
int cmd_ablate_duration(const RunManifest& m, std::ostream& out);
int cmd_dataset(const RunManifest& m, std::ostream& out);

// execute() with library errors mapped onto exit codes and reported on err.
int run_guarded(const RunManifest& m, std::ostream& out, std::ostream& err);

}  // namespace segctl::cli
