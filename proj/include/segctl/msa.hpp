// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "segctl/core.hpp"
#include "segctl/rng.hpp"

namespace segctl {

struct MsaConfig {
    double advance_prob = 0.1;
    double smoothing_sigma = 1.2;
    double log_floor = 1e-8;
    int kernel_radius = 4;

    void validate() const;
};

// Forward-only transition applied in the predict step.
class TransitionOperator {
public:
    virtual ~TransitionOperator() = default;
    virtual std::vector<double> apply(std::span<const double> posterior) const = 0;
};

// Stay with 1-p, advance one position with p; the last position absorbs.
class TwoTapTransition final : public TransitionOperator {
public:
    explicit TwoTapTransition(double advance_prob) : p_(advance_prob) {}
    std::vector<double> apply(std::span<const double> posterior) const override;

private:
    double p_;
};

struct HeadChoice {
    int layer = 0;
    int head = 0;
    double score = 0.0;
};

AlignmentBelief init_belief(int text_len);

AlignmentBelief predict(const AlignmentBelief& belief, const MsaConfig& cfg);
AlignmentBelief predict(const AlignmentBelief& belief, const TransitionOperator& op);

// argmax over (l, h) of prior . log(max(A, floor)); ties go to the lowest (l, h).
HeadChoice select_head(std::span<const double> prior, const AttentionObservation& obs, const MsaConfig& cfg);

// Truncated discrete Gaussian, renormalized per output position at the edges,
// result normalized to sum 1 (all-zero input stays zero).
std::vector<double> smooth(std::span<const double> values, const MsaConfig& cfg);

// posterior = prior * smooth(A*) / Z; keeps the prior when Z < 1e-12.
AlignmentBelief update(const AlignmentBelief& belief, const AttentionObservation& obs, const HeadChoice& choice,
                       const MsaConfig& cfg, bool smoothing = true);

// Same fusion with an explicit observation vector.
AlignmentBelief fuse(const AlignmentBelief& belief, std::span<const double> observation);

// Sum over t of t * pi[t], positions 1-based.
double expected_position(std::span<const double> posterior);

// m + 1 iff m < M and the expected position is past b_m.
int maybe_switch(int segment, std::span<const double> posterior, const SegmentPlan& plan);

// ---------------------------------------------------------------------------
// Aligner variants used by the ablation study.

enum class AlignerVariant { Msa, MaxGreedy, TopkGreedy, MaxheadMsa, RandomSwitch };

const char* to_string(AlignerVariant v);
AlignerVariant parse_variant(const std::string& name);

struct AblationConfig {
    int top_k = 4;
    // Per-step switch probability for RandomSwitch; negative means "M-1 switches
    // expected over the planned total budget".
    double switch_prob = -1.0;
};

// Mean attention mass of a head over the text, F = (1/T) sum_t A[t], with A
// the unnormalized (mass-scaled) attention.
double mean_attention_score(const AttentionObservation& obs, int layer, int head);

struct AlignerState {
    AlignerVariant variant = AlignerVariant::Msa;
    AlignmentBelief belief;
    int hard_index = 1;  // greedy variants: active text position
    int segment = 1;
    int step = 0;
};

// Result of one step, in the shape of the JSONL trace export.
struct AlignStepInfo {
    int step = 0;
    std::vector<double> prior;
    std::vector<double> posterior;
    HeadChoice head;
    double expected_pos = 0.0;
    int segment = 1;
};

AlignerState init_aligner(AlignerVariant variant, int text_len);

// One alignment step (including segment switching) under the state's variant.
AlignStepInfo align_step_ablation(AlignerVariant variant, AlignerState& state, const AttentionObservation& obs,
                                  const SegmentPlan& plan, const MsaConfig& cfg, const AblationConfig& ablation,
                                  Rng& rng);

nlohmann::json to_json(const AlignStepInfo& info);

}  // namespace segctl
