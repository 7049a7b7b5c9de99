// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "segctl/core.hpp"
#include "segctl/simdec.hpp"

namespace {

using segctl::cli::RunManifest;

nlohmann::json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw segctl::Error(segctl::ErrorCode::ParseError, "cannot open " + path);
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw segctl::Error(segctl::ErrorCode::ParseError, path + ": " + e.what());
    }
}

struct SuiteFlags {
    std::string config;
    std::string seeds;
    std::vector<std::string> variants;
    std::optional<double> noise;
    int threads = 0;
};

void add_suite_flags(CLI::App* cmd, SuiteFlags& f) {
    cmd->add_option("--config", f.config, "suite config JSON");
    cmd->add_option("--seeds", f.seeds, "seed range a..b or list a,b,c");
    cmd->add_option("--variant", f.variants, "aligner variant(s) to run");
    cmd->add_option("--noise", f.noise, "attention noise level; 0 switches every perturbation off");
    cmd->add_option("--threads", f.threads, "worker threads (0: all cores)");
}

nlohmann::json suite_config(const SuiteFlags& f) {
    segctl::SuiteConfig cfg = f.config.empty() ? segctl::SuiteConfig{} : segctl::suite_from_json(read_json(f.config));
    if (!f.variants.empty()) {
        cfg.align_variants.clear();
        for (const auto& v : f.variants) cfg.align_variants.push_back(segctl::parse_variant(v));
    }
    if (f.noise) {
        if (*f.noise == 0.0) {
            cfg.sim = segctl::noise_free(cfg.sim);
        } else {
            cfg.sim.noise_level = *f.noise;
        }
    }
    nlohmann::json j = cfg;
    if (f.variants.empty() && (f.config.empty() || !read_json(f.config).contains("align_variants"))) {
        j.erase("align_variants");
    }
    j["threads"] = f.threads;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"segctl: segment-level decoding control, simulator and dataset QC"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string out_dir;
    std::string manifest_path;
    app.add_option("--out", out_dir, std::string("output directory (default $") + segctl::cli::kOutDirEnv + ")");
    app.add_option("--manifest", manifest_path, "re-run from a manifest.json");

    std::string plan_path;
    int step = 1;
    std::vector<int> seg_s;
    std::optional<int> active;
    auto* mask = app.add_subcommand("mask-dump", "write txt/CSV dumps of the step mask");
    mask->add_option("--plan", plan_path, "plan JSON");
    mask->add_option("-i,--step", step, "decoding step (1-based)");
    mask->add_option("--seg-s", seg_s, "segment of each earlier semantic token")->delimiter(',');
    mask->add_option("--active", active, "segment of the current token");

    SuiteFlags sim_flags, align_flags, dur_flags;
    auto* simulate = app.add_subcommand("simulate", "alignment and duration suites");
    add_suite_flags(simulate, sim_flags);
    auto* ablate_align = app.add_subcommand("ablate-align", "alignment ablation suite");
    add_suite_flags(ablate_align, align_flags);
    auto* ablate_duration = app.add_subcommand("ablate-duration", "duration steering ablation suite");
    add_suite_flags(ablate_duration, dur_flags);

    std::string input;
    bool strict = false;
    std::optional<int> n;
    std::optional<uint64_t> seed;
    std::optional<double> zh_max;
    auto* dataset = app.add_subcommand("dataset", "dataset quality control");
    dataset->require_subcommand(1);
    std::vector<CLI::App*> actions;
    const std::pair<const char*, const char*> dataset_actions[] = {
        {"validate", "check every record against the QC rules"},
        {"dedup", "drop near-duplicate records"},
        {"stats", "corpus statistics"},
        {"sample", "stratified sample for human review"},
    };
    for (const auto& [name, help] : dataset_actions) {
        auto* a = dataset->add_subcommand(name, help);
        a->add_option("input", input, "records, one JSON object per line");
        a->add_option("--zh-max", zh_max, "upper bound of the ZH text length window");
        actions.push_back(a);
    }
    actions[0]->add_flag("--strict", strict, "exit 1 when any record fails");
    actions[3]->add_option("--n", n, "sample size");
    actions[3]->add_option("--seed", seed, "sampling seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return segctl::cli::kExitUsage;
    }

    if (manifest_path.empty() && app.get_subcommands().empty()) {
        std::cerr << app.help();
        return segctl::cli::kExitUsage;
    }

    RunManifest m;
    try {
        if (!manifest_path.empty()) {
            m = segctl::cli::load_manifest(manifest_path);
        } else if (mask->parsed()) {
            m.subcommand = "mask-dump";
            if (plan_path.empty()) {
                std::cerr << "mask-dump: --plan is required\n";
                return segctl::cli::kExitUsage;
            }
            m.config["plan"] = read_json(plan_path);
            m.config["step"] = step;
            if (!seg_s.empty()) m.config["seg_s"] = seg_s;
            if (active) m.config["active"] = *active;
        } else if (dataset->parsed()) {
            m.subcommand = "dataset";
            for (auto* a : actions) {
                if (a->parsed()) m.config["action"] = a->get_name();
            }
            if (input.empty()) {
                std::cerr << "dataset: input file is required\n";
                return segctl::cli::kExitUsage;
            }
            m.config["input"] = input;
            m.config["strict"] = strict;
            if (n) m.config["n"] = *n;
            if (zh_max) m.config["zh_text_max"] = *zh_max;
            if (seed) m.seeds = {*seed};
        } else {
            const SuiteFlags& f = simulate->parsed() ? sim_flags : ablate_align->parsed() ? align_flags : dur_flags;
            m.subcommand = simulate->parsed() ? "simulate" : ablate_align->parsed() ? "ablate-align" : "ablate-duration";
            m.config = suite_config(f);
            if (!f.seeds.empty()) m.seeds = segctl::cli::parse_seed_list(f.seeds);
        }
    } catch (const segctl::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return segctl::cli::kExitUsage;
    }
    if (!out_dir.empty()) {
        m.output_dir = out_dir;
    }
    return segctl::cli::run_guarded(m, std::cout, std::cerr);
}
