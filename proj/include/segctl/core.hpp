// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace segctl {

enum class ErrorCode {
    BoundaryOrder,
    BoundaryRange,
    EmptyBudget,
    OutOfRange,
    MissingBudgets,
    NonPositive,
    SegMismatch,
    EmptyText,
    BadVariant,
    NoTermination,
    ParseError,
    Empty,
    TooFew,
    BackendUnavailable,
    InvalidConfig,
};

const char* to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

// Rounds half away from zero. Every rounding in the library goes through here.
int64_t round_half_away(double x);

// Locale-independent "%.*g" formatting for CSV/text outputs.
std::string format_real(double x, int precision = 10);

// Closed range of 1-based text positions.
struct SegmentSpan {
    int first = 1;
    int last = 1;

    int length() const { return last - first + 1; }
    bool contains(int t) const { return t >= first && t <= last; }
};

// Text length, segment boundaries, condition block length and optional
// per-segment token budgets. Immutable once built; see build_plan().
class SegmentPlan {
public:
    int text_len() const { return text_len_; }
    int num_segments() const { return static_cast<int>(boundaries_.size()) + 1; }
    int cond_block_len() const { return cond_block_len_; }

    // Inclusive last text position of segments 1..M-1.
    const std::vector<int>& boundaries() const { return boundaries_; }
    const std::optional<std::vector<int64_t>>& duration_budgets() const { return budgets_; }
    bool has_budgets() const { return budgets_.has_value(); }

    // Last text position of segment m (1-based); b_M == T.
    int boundary(int m) const;
    SegmentSpan span(int m) const;
    int64_t budget(int m) const;

    bool operator==(const SegmentPlan&) const = default;

private:
    friend SegmentPlan build_plan(int, std::vector<int>, int, std::optional<std::vector<int64_t>>);

    int text_len_ = 0;
    std::vector<int> boundaries_;
    int cond_block_len_ = 1;
    std::optional<std::vector<int64_t>> budgets_;
};

SegmentPlan build_plan(int text_len, std::vector<int> boundaries, int cond_block_len,
                       std::optional<std::vector<int64_t>> duration_budgets = std::nullopt);

// Same plan with every budget multiplied by `factor` (rounded, minimum 1).
SegmentPlan scale_budgets(const SegmentPlan& plan, double factor);

// seg_x[t] = 1 + #{r : t > b_r}
int segment_of_text(const SegmentPlan& plan, int t);

// Prefix sums of the duration budgets.
std::vector<int64_t> cumulative_budgets(const SegmentPlan& plan);

inline constexpr double kDefaultTokenRate = 25.0;

int64_t seconds_to_tokens(double seconds, double token_rate = kDefaultTokenRate);

void to_json(nlohmann::json& j, const SegmentPlan& plan);
void from_json(const nlohmann::json& j, SegmentPlan& plan);
SegmentPlan plan_from_json(const nlohmann::json& j);

// Opaque per-segment condition tokens. payload_id is bookkeeping only: the
// duration steering re-query bumps it to the index of the new target.
struct ConditionBlock {
    int segment_index = 1;
    int length = 1;
    int64_t payload_id = 0;
};

std::vector<ConditionBlock> make_condition_blocks(const SegmentPlan& plan);

// Attention from the current semantic token to the T text tokens, for every
// (layer, head). values is laid out [layer][head][t]; each slice sums to 1.
// text_mass holds, per head, the share of the full attention row that fell on
// the text region before renormalization (1 when unknown).
struct AttentionObservation {
    int layers = 0;
    int heads = 0;
    int text_len = 0;
    std::vector<double> values;
    std::vector<double> text_mass;

    AttentionObservation() = default;
    AttentionObservation(int layers, int heads, int text_len);

    std::span<double> slice(int layer, int head);
    std::span<const double> slice(int layer, int head) const;
    double mass(int layer, int head) const;
    void set_mass(int layer, int head, double m);

    // Max deviation of any slice sum from 1.
    double normalization_error() const;
};

struct AlignmentBelief {
    std::vector<double> prior;
    std::vector<double> posterior;
};

enum class TokenClass { Ordinary, Eos };

struct StepRecord {
    int step = 0;
    int segment = 1;
    TokenClass token = TokenClass::Ordinary;
    std::vector<double> posterior;
    int64_t effective_target = 0;
    double eos_bias = 0.0;
};

struct DecodeTrace {
    std::vector<StepRecord> steps;

    // Segment ids nondecreasing, at most one EOS and only last.
    bool well_formed() const;
};

}  // namespace segctl
