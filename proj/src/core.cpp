// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/core.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace segctl {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::BoundaryOrder: return "BoundaryOrder";
        case ErrorCode::BoundaryRange: return "BoundaryRange";
        case ErrorCode::EmptyBudget: return "EmptyBudget";
        case ErrorCode::OutOfRange: return "OutOfRange";
        case ErrorCode::MissingBudgets: return "MissingBudgets";
        case ErrorCode::NonPositive: return "NonPositive";
        case ErrorCode::SegMismatch: return "SegMismatch";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::BadVariant: return "BadVariant";
        case ErrorCode::NoTermination: return "NoTermination";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::Empty: return "Empty";
        case ErrorCode::TooFew: return "TooFew";
        case ErrorCode::BackendUnavailable: return "BackendUnavailable";
        case ErrorCode::InvalidConfig: return "InvalidConfig";
    }
    return "Unknown";
}

int64_t round_half_away(double x) {
    return static_cast<int64_t>(std::round(x));  // std::round rounds halfway cases away from zero
}

std::string format_real(double x, int precision) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", precision, x);
    return buf;
}

int SegmentPlan::boundary(int m) const {
    if (m < 1 || m > num_segments()) {
        throw Error(ErrorCode::OutOfRange, "segment " + std::to_string(m));
    }
    return m == num_segments() ? text_len_ : boundaries_[m - 1];
}

SegmentSpan SegmentPlan::span(int m) const {
    const int last = boundary(m);
    const int first = m == 1 ? 1 : boundaries_[m - 2] + 1;
    return {first, last};
}

int64_t SegmentPlan::budget(int m) const {
    if (!budgets_) {
        throw Error(ErrorCode::MissingBudgets, "plan has no duration budgets");
    }
    if (m < 1 || m > num_segments()) {
        throw Error(ErrorCode::OutOfRange, "segment " + std::to_string(m));
    }
    return (*budgets_)[m - 1];
}

SegmentPlan build_plan(int text_len, std::vector<int> boundaries, int cond_block_len,
                       std::optional<std::vector<int64_t>> duration_budgets) {
    if (text_len < 1) {
        throw Error(ErrorCode::EmptyText, "text_len must be >= 1");
    }
    if (cond_block_len < 1) {
        throw Error(ErrorCode::NonPositive, "cond_block_len must be >= 1");
    }
    for (size_t r = 0; r < boundaries.size(); ++r) {
        if (r > 0 && boundaries[r] <= boundaries[r - 1]) {
            throw Error(ErrorCode::BoundaryOrder, "boundaries must be strictly increasing");
        }
    }
    for (int b : boundaries) {
        if (b < 1 || b >= text_len) {
            throw Error(ErrorCode::BoundaryRange,
                        "boundary " + std::to_string(b) + " outside [1, " + std::to_string(text_len - 1) + "]");
        }
    }
    if (duration_budgets) {
        if (duration_budgets->size() != boundaries.size() + 1) {
            throw Error(ErrorCode::SegMismatch, "expected one duration budget per segment");
        }
        for (int64_t d : *duration_budgets) {
            if (d < 1) {
                throw Error(ErrorCode::EmptyBudget, "duration budgets must be >= 1");
            }
        }
    }
    SegmentPlan plan;
    plan.text_len_ = text_len;
    plan.boundaries_ = std::move(boundaries);
    plan.cond_block_len_ = cond_block_len;
    plan.budgets_ = std::move(duration_budgets);
    return plan;
}

SegmentPlan scale_budgets(const SegmentPlan& plan, double factor) {
    if (!plan.has_budgets()) {
        throw Error(ErrorCode::MissingBudgets, "plan has no duration budgets");
    }
    if (!(factor > 0.0)) {
        throw Error(ErrorCode::NonPositive, "scale factor must be > 0");
    }
    std::vector<int64_t> scaled;
    for (int64_t d : *plan.duration_budgets()) {
        scaled.push_back(std::max<int64_t>(1, round_half_away(static_cast<double>(d) * factor)));
    }
    return build_plan(plan.text_len(), plan.boundaries(), plan.cond_block_len(), std::move(scaled));
}

int segment_of_text(const SegmentPlan& plan, int t) {
    if (t < 1 || t > plan.text_len()) {
        throw Error(ErrorCode::OutOfRange, "text position " + std::to_string(t));
    }
    int seg = 1;
    for (int b : plan.boundaries()) {
        seg += t > b ? 1 : 0;
    }
    return seg;
}

std::vector<int64_t> cumulative_budgets(const SegmentPlan& plan) {
    if (!plan.has_budgets()) {
        throw Error(ErrorCode::MissingBudgets, "plan has no duration budgets");
    }
    const auto& d = *plan.duration_budgets();
    std::vector<int64_t> out(d.size());
    std::partial_sum(d.begin(), d.end(), out.begin());
    return out;
}

int64_t seconds_to_tokens(double seconds, double token_rate) {
    if (!(seconds > 0.0) || !(token_rate > 0.0)) {
        throw Error(ErrorCode::NonPositive, "seconds and token rate must be > 0");
    }
    return std::max<int64_t>(1, round_half_away(seconds * token_rate));
}

void to_json(nlohmann::json& j, const SegmentPlan& plan) {
    j = nlohmann::json{{"text_len", plan.text_len()},
                       {"boundaries", plan.boundaries()},
                       {"cond_block_len", plan.cond_block_len()}};
    if (plan.has_budgets()) {
        j["duration_budgets"] = *plan.duration_budgets();
    } else {
        j["duration_budgets"] = nullptr;
    }
}

SegmentPlan plan_from_json(const nlohmann::json& j) {
    try {
        std::optional<std::vector<int64_t>> budgets;
        if (j.contains("duration_budgets") && !j.at("duration_budgets").is_null()) {
            budgets = j.at("duration_budgets").get<std::vector<int64_t>>();
        }
        std::vector<int> boundaries;
        if (j.contains("boundaries")) {
            boundaries = j.at("boundaries").get<std::vector<int>>();
        }
        return build_plan(j.at("text_len").get<int>(), std::move(boundaries),
                          j.value("cond_block_len", 1), std::move(budgets));
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("plan: ") + e.what());
    }
}

void from_json(const nlohmann::json& j, SegmentPlan& plan) { plan = plan_from_json(j); }

std::vector<ConditionBlock> make_condition_blocks(const SegmentPlan& plan) {
    std::vector<ConditionBlock> blocks;
    const bool budgets = plan.has_budgets();
    const auto cumulative = budgets ? cumulative_budgets(plan) : std::vector<int64_t>{};
    for (int m = 1; m <= plan.num_segments(); ++m) {
        blocks.push_back({m, plan.cond_block_len(), budgets ? cumulative[m - 1] : 0});
    }
    return blocks;
}

AttentionObservation::AttentionObservation(int layers_, int heads_, int text_len_)
    : layers(layers_), heads(heads_), text_len(text_len_),
      values(static_cast<size_t>(layers_) * heads_ * text_len_, 0.0),
      text_mass(static_cast<size_t>(layers_) * heads_, 1.0) {}

std::span<double> AttentionObservation::slice(int layer, int head) {
    const size_t off = (static_cast<size_t>(layer) * heads + head) * text_len;
    return {values.data() + off, static_cast<size_t>(text_len)};
}

std::span<const double> AttentionObservation::slice(int layer, int head) const {
    const size_t off = (static_cast<size_t>(layer) * heads + head) * text_len;
    return {values.data() + off, static_cast<size_t>(text_len)};
}

double AttentionObservation::mass(int layer, int head) const {
    return text_mass[static_cast<size_t>(layer) * heads + head];
}

void AttentionObservation::set_mass(int layer, int head, double m) {
    text_mass[static_cast<size_t>(layer) * heads + head] = m;
}

double AttentionObservation::normalization_error() const {
    double worst = 0.0;
    for (int l = 0; l < layers; ++l) {
        for (int h = 0; h < heads; ++h) {
            const auto s = slice(l, h);
            worst = std::max(worst, std::abs(std::accumulate(s.begin(), s.end(), 0.0) - 1.0));
        }
    }
    return worst;
}

bool DecodeTrace::well_formed() const {
    for (size_t i = 0; i < steps.size(); ++i) {
        if (i > 0 && steps[i].segment < steps[i - 1].segment) {
            return false;
        }
        if (steps[i].token == TokenClass::Eos && i + 1 != steps.size()) {
            return false;
        }
    }
    return true;
}

}  // namespace segctl
