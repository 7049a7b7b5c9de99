// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "segctl/core.hpp"
#include "segctl/duration.hpp"
#include "segctl/msa.hpp"
#include "segctl/rng.hpp"

namespace segctl {

// How the heads that are not alignment heads behave.
//   Uniform       flat over the text
//   Diffuse       wide bump around the true position
//   Distractor    bump parked at a random place that jumps elsewhere with
//                 probability distractor_jump_prob per step (non-monotonic)
//   Mixed         uniform_fraction of them Uniform, the rest Distractor
enum class NoiseModel { Uniform, Diffuse, Distractor, Mixed };

const char* to_string(NoiseModel m);
NoiseModel parse_noise_model(const std::string& name);

struct HeadId {
    int layer = 0;
    int head = 0;
    bool operator==(const HeadId&) const = default;
};

// Range a head's text mass is drawn from, per trace.
struct MassRange {
    double lo = 0.2;
    double hi = 0.6;
};

struct SimConfig {
    uint64_t seed = 0;
    int layers = 4;
    int heads = 4;
    std::vector<HeadId> reliable_heads = {{1, 2}, {3, 1}};
    NoiseModel noise_model = NoiseModel::Mixed;
    double uniform_fraction = 0.75;
    // Log-normal jitter applied to every attention entry; 0 is noise-free.
    double noise_level = 0.5;
    double sigma_true = 1.0;
    double diffuse_sigma = 4.0;
    double distractor_jump_prob = 0.3;
    MassRange reliable_mass{0.3, 0.7};
    MassRange uniform_mass{0.1, 0.5};
    MassRange distractor_mass{0.3, 0.7};
    double mass_jitter = 0.1;

    // Ground-truth pace in semantic tokens per text token.
    double speed_mean = 10.0;
    double speed_jitter = 0.15;  // relative, per segment
    double step_jitter = 0.2;    // relative, per token
    // How strongly the decoder follows its duration conditioning (0..1).
    double adherence = 0.5;
    double duration_scale = 1.0;

    // Natural EOS logit: eos_text_slope per text position past the end of the
    // text shifted by a per-trace offset ~ N(0, eos_offset_jitter) positions,
    // plus eos_drift per unit of total budget consumed beyond one half, plus
    // per-step N(0, eos_noise).
    double eos_text_slope = 3.0;
    double eos_offset_jitter = 1.0;
    double eos_drift = 2.0;
    double eos_noise = 0.5;

    MsaConfig msa;
    SteerConfig steer;
    AblationConfig ablation;

    void validate() const;
};

void to_json(nlohmann::json& j, const SimConfig& c);
void from_json(const nlohmann::json& j, SimConfig& c);

// Same config with every random perturbation switched off and the non-reliable
// heads flat.
SimConfig noise_free(SimConfig base);

// Steering components switched on for a run.
struct SteeringFlags {
    bool local = true;
    bool eos = true;
    bool operator==(const SteeringFlags&) const = default;
};

std::string steering_name(SteeringFlags f);
SteeringFlags parse_steering(const std::string& name);

struct StreamStep {
    AttentionObservation obs;
    int true_position = 1;      // text position being rendered (clamped to 1..T)
    double true_coordinate = 0;  // continuous; text token t covers (t-1, t]
};

// Synthetic decoder: a monotone ground-truth path paced by the conditioning it
// is given, plus multi-head attention observations of that path.
class SyntheticDecoder {
public:
    SyntheticDecoder(const SegmentPlan& plan, const SimConfig& cfg);

    // Emits one semantic token while conditioned on `segment` with cumulative
    // target `target` (<= 0 means no duration conditioning).
    StreamStep step(int segment, int64_t target);

    // EOS logit before any steering bias, for the upcoming step.
    double eos_logit();

    double coordinate() const { return x_; }
    int64_t emitted() const { return emitted_; }
    // Segment a token rendered at coordinate x belongs to.
    int segment_at(double x) const;
    const std::vector<int>& head_kinds() const { return kinds_; }

private:
    AttentionObservation observe(double x);

    SegmentPlan plan_;
    SimConfig cfg_;
    Rng rng_;
    std::vector<double> speeds_;
    std::vector<int> kinds_;  // per head: 0 reliable, 1 uniform, 2 diffuse, 3 distractor
    std::vector<double> masses_;
    std::vector<double> anchors_;  // distractor centers
    double x_ = 0.0;
    int64_t emitted_ = 0;
    int conditioned_segment_ = 0;
    int64_t segment_start_ = 0;
    int64_t total_budget_ = 0;
    double eos_offset_ = 0.0;
};

// Open-loop stream of `steps` tokens conditioned on the planned targets.
std::vector<StreamStep> gen_stream(const SegmentPlan& plan, const SimConfig& cfg, int steps);

struct SimResult {
    double boundary_mae = 0.0;
    double token_error_rate = 0.0;  // percent
    DecodeTrace trace;

    std::vector<int64_t> generated;       // per segment, by ground-truth membership
    std::vector<int64_t> targets;         // per segment budgets used for the error
    std::vector<double> true_coordinate;  // per emitted token
    std::vector<double> aligned_position; // expected position after each token
    std::vector<int> detected_switch_step;
    std::vector<AlignStepInfo> align_steps;
    std::vector<SteerTraceRow> steer_rows;
    bool terminated_by_cap = false;
    bool eos_in_nonfinal = false;
    double max_posterior_error = 0.0;
    int mask_violations = 0;
};

// Runs the full decode loop. `plan` carries the reference budgets; the run
// targets are those scaled by cfg.duration_scale.
SimResult run_trace(const SegmentPlan& plan, const SimConfig& cfg, AlignerVariant variant, SteeringFlags steering);

// ---------------------------------------------------------------------------
// Experiment suite

struct PlanGenerator {
    int text_len_min = 24;
    int text_len_max = 36;
    int segments_min = 2;
    int segments_max = 3;
    int min_segment_len = 6;
    int cond_block_len = 2;
};

SegmentPlan random_plan(const PlanGenerator& gen, double speed_mean, Rng& rng);

struct SuiteConfig {
    SimConfig sim;
    std::vector<uint64_t> seeds;
    std::vector<AlignerVariant> align_variants = {AlignerVariant::Msa, AlignerVariant::MaxGreedy,
                                                  AlignerVariant::TopkGreedy, AlignerVariant::MaxheadMsa};
    std::vector<SteeringFlags> steering_sets = {{true, true}, {false, true}, {true, false}, {false, false}};
    std::vector<double> scalings = {0.75, 0.875, 1.0, 1.125, 1.25};
    PlanGenerator plans;
    std::vector<SegmentPlan> fixed_plans;  // used round-robin instead of random plans when non-empty
    int threads = 0;                       // 0: hardware concurrency
};

void to_json(nlohmann::json& j, const SuiteConfig& c);
SuiteConfig suite_from_json(const nlohmann::json& j);

struct MetricSummary {
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
};

MetricSummary summarize(const std::vector<double>& values);

struct AlignRow {
    AlignerVariant variant;
    std::vector<double> per_seed_mae;
    MetricSummary mae;
};

struct DurationCell {
    SteeringFlags steering;
    double scaling = 1.0;
    std::vector<double> per_seed_error;
    MetricSummary error;
};

struct SuiteResult {
    std::vector<AlignRow> align;
    std::vector<DurationCell> duration;
    int eos_violations = 0;
    int traces = 0;
    double max_posterior_error = 0.0;
};

// Plan used for seed index k of a suite.
SegmentPlan suite_plan(const SuiteConfig& cfg, size_t seed_index);

SuiteResult run_suite(const SuiteConfig& cfg, bool alignment = true, bool duration = true);

// Paired comparison: mean of (a - b) and its 95% two-sided t interval.
struct PairedComparison {
    double mean_diff = 0.0;
    double ci_low = 0.0;
    double ci_high = 0.0;
    int n = 0;
    bool a_less() const { return ci_high < 0.0; }
};

PairedComparison paired_compare(const std::vector<double>& a, const std::vector<double>& b);

std::string align_table_csv(const SuiteResult& r);
std::string duration_table_csv(const SuiteResult& r);
nlohmann::json suite_to_json(const SuiteResult& r);

// Per-step ground truth and aligned position for each variant.
std::string alignment_paths_csv(const SegmentPlan& plan, const SimConfig& cfg,
                                const std::vector<AlignerVariant>& variants);

}  // namespace segctl
