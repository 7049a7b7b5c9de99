// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include "segctl/core.hpp"
#include "segctl/mask.hpp"
#include "segctl/medqc.hpp"
#include "segctl/simdec.hpp"

namespace segctl::cli {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const RunManifest& m) {
    j = nlohmann::json{{"subcommand", m.subcommand}, {"config", m.config},       {"seeds", m.seeds},
                       {"output_dir", m.output_dir}, {"tool_version", m.tool_version}, {"timestamp", m.timestamp}};
}

RunManifest manifest_from_json(const nlohmann::json& j) {
    try {
        RunManifest m;
        m.subcommand = j.at("subcommand").get<std::string>();
        m.config = j.value("config", nlohmann::json::object());
        m.seeds = j.value("seeds", std::vector<uint64_t>{});
        m.output_dir = j.value("output_dir", std::string());
        m.tool_version = j.value("tool_version", std::string(kToolVersion));
        m.timestamp = j.value("timestamp", std::string());
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("manifest: ") + e.what());
    }
}

namespace {

nlohmann::json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::ParseError, "cannot open " + path.string());
    }
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    out << content;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace

RunManifest load_manifest(const fs::path& path) { return manifest_from_json(read_json_file(path)); }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string default_output_dir() {
    const char* env = std::getenv(kOutDirEnv);
    return env != nullptr && *env != '\0' ? env : "segctl_out";
}

std::vector<uint64_t> parse_seed_list(const std::string& text) {
    auto number = [&](const std::string& s) -> uint64_t {
        if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos) {
            throw Error(ErrorCode::ParseError, "bad seed list '" + text + "'");
        }
        return std::stoull(s);
    };
    std::vector<uint64_t> out;
    if (const auto dots = text.find(".."); dots != std::string::npos) {
        const uint64_t lo = number(text.substr(0, dots));
        const uint64_t hi = number(text.substr(dots + 2));
        if (hi < lo) {
            throw Error(ErrorCode::ParseError, "empty seed range '" + text + "'");
        }
        for (uint64_t s = lo; s <= hi; ++s) out.push_back(s);
        return out;
    }
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) out.push_back(number(item));
    if (out.empty()) {
        throw Error(ErrorCode::ParseError, "empty seed list");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Resolution: fill defaults so the manifest records the full configuration.

namespace {

std::vector<uint64_t> default_seeds() {
    std::vector<uint64_t> s;
    for (uint64_t k = 0; k < 100; ++k) s.push_back(k);
    return s;
}

// Segment of each of tokens 1..step under the plan's cumulative budgets, or an
// even split when the plan has none.
std::vector<int> default_assignment(const SegmentPlan& plan, int step) {
    const int M = plan.num_segments();
    std::vector<int> out;
    if (plan.has_budgets()) {
        const auto cum = cumulative_budgets(plan);
        for (int r = 1; r <= step; ++r) {
            int m = 1;
            while (m < M && r > cum[m - 1]) ++m;
            out.push_back(m);
        }
    } else {
        for (int r = 1; r <= step; ++r) {
            out.push_back(std::min(M, 1 + (r - 1) * M / std::max(step, 1)));
        }
    }
    return out;
}

RunManifest resolve(RunManifest m) {
    if (m.output_dir.empty()) m.output_dir = default_output_dir();
    if (m.timestamp.empty()) m.timestamp = utc_timestamp();

    if (m.subcommand == "mask-dump") {
        const SegmentPlan plan = plan_from_json(m.config.at("plan"));
        const int step = m.config.value("step", 1);
        if (step < 1) {
            throw Error(ErrorCode::OutOfRange, "step must be >= 1");
        }
        const auto assign = default_assignment(plan, step);
        if (!m.config.contains("seg_s")) {
            m.config["seg_s"] = std::vector<int>(assign.begin(), assign.end() - 1);
        }
        if (!m.config.contains("active")) {
            m.config["active"] = assign.back();
        }
        m.config["step"] = step;
        m.config["plan"] = plan;
    } else if (m.subcommand == "simulate" || m.subcommand == "ablate-align" || m.subcommand == "ablate-duration") {
        nlohmann::json raw = m.config;
        if (m.subcommand == "ablate-align" && !raw.contains("align_variants")) {
            raw["align_variants"] = {"msa", "max_greedy", "topk_greedy", "maxhead_msa", "random_switch"};
        }
        SuiteConfig cfg = suite_from_json(raw);
        if (!m.seeds.empty()) cfg.seeds = m.seeds;
        if (cfg.seeds.empty()) cfg.seeds = default_seeds();
        cfg.sim.validate();
        nlohmann::json resolved = cfg;
        resolved["threads"] = cfg.threads;
        m.config = resolved;
        m.seeds = cfg.seeds;
    } else if (m.subcommand == "dataset") {
        const std::string action = m.config.value("action", std::string());
        if (action != "validate" && action != "dedup" && action != "stats" && action != "sample") {
            throw Error(ErrorCode::InvalidConfig, "unknown dataset action '" + action + "'");
        }
        if (!m.config.contains("input")) {
            throw Error(ErrorCode::InvalidConfig, "dataset needs an input file");
        }
        m.config["input"] = fs::absolute(m.config.at("input").get<std::string>()).lexically_normal().string();
        if (action == "sample") {
            if (!m.config.contains("n")) {
                throw Error(ErrorCode::InvalidConfig, "sample needs --n");
            }
            if (m.seeds.empty()) m.seeds = {0};
        }
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown subcommand '" + m.subcommand + "'");
    }
    return m;
}

SuiteConfig suite_of(const RunManifest& m) {
    SuiteConfig cfg = suite_from_json(m.config);
    cfg.seeds = m.seeds;
    cfg.threads = m.config.value("threads", 0);
    return cfg;
}

std::string per_seed_align_csv(const SuiteConfig& cfg, const SuiteResult& r) {
    std::string out = "variant,seed,mae\n";
    for (const auto& row : r.align) {
        for (size_t k = 0; k < row.per_seed_mae.size(); ++k) {
            out += std::string(to_string(row.variant)) + "," + std::to_string(cfg.seeds[k]) + "," +
                   format_real(row.per_seed_mae[k]) + "\n";
        }
    }
    return out;
}

std::string per_seed_duration_csv(const SuiteConfig& cfg, const SuiteResult& r) {
    std::string out = "steering,scaling,seed,error\n";
    for (const auto& c : r.duration) {
        for (size_t k = 0; k < c.per_seed_error.size(); ++k) {
            out += steering_name(c.steering) + "," + format_real(c.scaling) + "," + std::to_string(cfg.seeds[k]) +
                   "," + format_real(c.per_seed_error[k]) + "\n";
        }
    }
    return out;
}

// Steering trace of the first seed with the full stack at nominal budgets.
std::string first_steer_trace(const SuiteConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seeds.front();
    sim.duration_scale = 1.0;
    const SimResult r = run_trace(suite_plan(cfg, 0), sim, AlignerVariant::Msa, {true, true});
    std::string out = steer_trace_csv_header();
    for (const auto& row : r.steer_rows) out += steer_trace_csv_row(row);
    return out;
}

std::string first_alignment_paths(const SuiteConfig& cfg) {
    SimConfig sim = cfg.sim;
    sim.seed = cfg.seeds.front();
    return alignment_paths_csv(suite_plan(cfg, 0), sim, cfg.align_variants);
}

int run_suite_command(const RunManifest& m, std::ostream& out, bool alignment, bool duration) {
    const SuiteConfig cfg = suite_of(m);
    const SuiteResult r = run_suite(cfg, alignment, duration);
    const fs::path dir(m.output_dir);
    nlohmann::json metrics = suite_to_json(r);
    metrics["seeds"] = cfg.seeds.size();
    if (alignment) {
        write_file(dir / "align_table.csv", align_table_csv(r));
        write_file(dir / "align_per_seed.csv", per_seed_align_csv(cfg, r));
        write_file(dir / "alignment_paths.csv", first_alignment_paths(cfg));
        out << align_table_csv(r);
    }
    if (duration) {
        write_file(dir / "duration_table.csv", duration_table_csv(r));
        write_file(dir / "duration_per_seed.csv", per_seed_duration_csv(cfg, r));
        write_file(dir / "steer_trace.csv", first_steer_trace(cfg));
        out << duration_table_csv(r);
    }
    write_file(dir / "metrics.json", dump(metrics));
    out << "traces " << r.traces << ", EOS in non-final segments " << r.eos_violations << "\n";
    return r.eos_violations == 0 ? kExitOk : kExitFailure;
}

std::vector<medqc::DatasetRecord> load_records(const std::string& path) {
    std::vector<medqc::DatasetRecord> records;
    for (const auto& line : medqc::read_jsonl(path)) {
        try {
            records.push_back(medqc::record_from_json(line.value));
        } catch (const Error& e) {
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(line.line) + ": " + e.what());
        }
        if (records.back().id.empty()) records.back().id = "line" + std::to_string(line.line);
    }
    return records;
}

}  // namespace

// ---------------------------------------------------------------------------

int cmd_mask_dump(const RunManifest& m, std::ostream& out) {
    const SegmentPlan plan = plan_from_json(m.config.at("plan"));
    const int step = m.config.at("step").get<int>();
    const auto seg_s = m.config.at("seg_s").get<std::vector<int>>();
    const int active = m.config.at("active").get<int>();
    const BiasMask mask = build_mask(plan, seg_s, step, active);
    for (const auto& p : write_mask_dump(mask, step, m.output_dir)) {
        out << "wrote " << p.string() << "\n";
    }
    out << dump_mask_text(mask);
    return kExitOk;
}

int cmd_simulate(const RunManifest& m, std::ostream& out) { return run_suite_command(m, out, true, true); }

int cmd_ablate_align(const RunManifest& m, std::ostream& out) { return run_suite_command(m, out, true, false); }

int cmd_ablate_duration(const RunManifest& m, std::ostream& out) { return run_suite_command(m, out, false, true); }

int cmd_dataset(const RunManifest& m, std::ostream& out) {
    const std::string action = m.config.at("action").get<std::string>();
    const std::string input = m.config.at("input").get<std::string>();
    const fs::path dir(m.output_dir);
    medqc::QcConfig qc;
    if (m.config.contains("zh_text_max")) {
        qc.zh_text_chars.hi = m.config.at("zh_text_max").get<double>();
    }

    if (action == "validate") {
        std::string jsonl;
        int failures = 0;
        for (const auto& line : medqc::read_jsonl(input)) {
            auto rep = medqc::validate_json(line.value, qc);
            if (rep.id.empty()) rep.id = "line" + std::to_string(line.line);
            jsonl += to_json(rep).dump() + "\n";
            out << rep.id << " " << (rep.pass ? "pass" : "fail");
            for (const auto& v : rep.violations) out << " " << v.rule;
            out << "\n";
            failures += rep.pass ? 0 : 1;
        }
        write_file(dir / "validation.jsonl", jsonl);
        out << failures << " failing record(s)\n";
        return failures > 0 && m.config.value("strict", false) ? kExitFailure : kExitOk;
    }

    const auto records = load_records(input);
    if (action == "dedup") {
        const auto r = medqc::dedup(records, qc);
        std::string kept;
        for (const auto& rec : r.kept) kept += medqc::record_to_json(rec).dump() + "\n";
        write_file(dir / "kept.jsonl", kept);
        write_file(dir / "dropped.csv", medqc::dropped_csv(r.dropped));
        out << medqc::dropped_csv(r.dropped);
        out << "kept " << r.kept.size() << ", dropped " << r.dropped.size() << "\n";
    } else if (action == "stats") {
        const auto s = medqc::stats(records);
        write_file(dir / "stats.json", dump(medqc::to_json(s)));
        write_file(dir / "stats.txt", medqc::stats_table(s));
        out << medqc::stats_table(s);
    } else {
        const int n = m.config.at("n").get<int>();
        const auto r = medqc::sample_for_review(records, n, m.seeds.front());
        std::string jsonl;
        for (size_t k : r.indices) jsonl += medqc::record_to_json(records[k]).dump() + "\n";
        std::string alloc = "stratum,available,allocated\n";
        for (const auto& a : r.allocation) {
            alloc += medqc::to_string(a.key) + "," + std::to_string(a.available) + "," +
                     std::to_string(a.allocated) + "\n";
        }
        write_file(dir / "sample.jsonl", jsonl);
        write_file(dir / "allocation.csv", alloc);
        out << alloc;
    }
    return kExitOk;
}

int execute(const RunManifest& raw, std::ostream& out) {
    const RunManifest m = resolve(raw);
    fs::create_directories(m.output_dir);
    nlohmann::json j = m;
    write_file(fs::path(m.output_dir) / kManifestName, dump(j));

    if (m.subcommand == "mask-dump") return cmd_mask_dump(m, out);
    if (m.subcommand == "simulate") return cmd_simulate(m, out);
    if (m.subcommand == "ablate-align") return cmd_ablate_align(m, out);
    if (m.subcommand == "ablate-duration") return cmd_ablate_duration(m, out);
    return cmd_dataset(m, out);
}

int run_guarded(const RunManifest& m, std::ostream& out, std::ostream& err) {
    try {
        return execute(m, out);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        switch (e.code()) {
            case ErrorCode::NoTermination:
            case ErrorCode::BackendUnavailable:
                return kExitRuntime;
            default:
                return kExitUsage;
        }
    } catch (const nlohmann::json::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}

}  // namespace segctl::cli
