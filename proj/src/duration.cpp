// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/duration.hpp"

#include <algorithm>
#include <cmath>

#include "segctl/msa.hpp"

namespace segctl {

void SteerConfig::validate() const {
    if (!(gain > 0.0) || !(deadband >= 0.0) || max_step < 1 || update_period < 1) {
        throw Error(ErrorCode::InvalidConfig, "need gain > 0, deadband >= 0, max_step >= 1, update_period >= 1");
    }
    if (!(conservative_ratio > 1.0 && conservative_ratio < emergency_ratio)) {
        throw Error(ErrorCode::InvalidConfig, "need 1 < conservative_ratio < emergency_ratio");
    }
    if (!(eos.bias_min < 0.0 && eos.bias_max > 0.0)) {
        throw Error(ErrorCode::InvalidConfig, "need bias_min < 0 < bias_max");
    }
    if (!(eos.rho_lo < eos.rho_neutral_lo && eos.rho_neutral_lo < eos.rho_neutral_hi &&
          eos.rho_neutral_hi < eos.rho_hi)) {
        throw Error(ErrorCode::InvalidConfig, "EOS ratio anchors must be strictly increasing");
    }
}

const char* to_string(Regime r) {
    switch (r) {
        case Regime::Normal: return "normal";
        case Regime::Conservative: return "conservative";
        case Regime::Emergency: return "emergency";
    }
    return "unknown";
}

SteeringState SteeringState::init(const SegmentPlan& plan) {
    const auto cumulative = cumulative_budgets(plan);
    SteeringState s;
    for (int m = 1; m <= plan.num_segments(); ++m) {
        SegmentSteer seg;
        seg.planned_budget = plan.budget(m);
        seg.planned_target = cumulative[m - 1];
        seg.effective_target = seg.planned_target;
        seg.payload_id = seg.planned_target;
        s.segments_.push_back(seg);
    }
    return s;
}

void SteeringState::on_token() {
    ++cursor_;
    ++segments_[active_ - 1].generated;
}

void SteeringState::activate(int m) {
    if (m < active_ || m > static_cast<int>(segments_.size())) {
        throw Error(ErrorCode::OutOfRange, "cannot activate segment " + std::to_string(m));
    }
    if (m == active_) {
        return;
    }
    auto& left = segments_[active_ - 1];
    left.effective_target = left.planned_target;
    left.payload_id = left.planned_target;
    active_ = m;
    segments_[active_ - 1].start_cursor = cursor_;
}

Progress progress(const SegmentPlan& plan, const SteeringState& state, std::span<const double> posterior) {
    const SegmentSpan span = plan.span(state.active());
    const auto& seg = state.current();
    Progress p;
    const double pos = expected_position(posterior);
    p.r_text = std::clamp((pos - span.first + 1.0) / span.length(), 0.0, 1.0);
    p.r_sem = std::max(0.0, static_cast<double>(seg.generated) / static_cast<double>(seg.planned_budget));
    p.delta_r = p.r_text - p.r_sem;
    return p;
}

int64_t correction(double delta_r, const SteerConfig& cfg, double gain) {
    if (std::abs(delta_r) <= cfg.deadband) {
        return 0;
    }
    return std::clamp(round_half_away(gain * delta_r), -cfg.max_step, cfg.max_step);
}

int64_t correction(double delta_r, const SteerConfig& cfg) { return correction(delta_r, cfg, cfg.gain); }

int64_t emergency_cap(const SteeringState& state, const SteerConfig& cfg) {
    const auto& seg = state.current();
    return std::max<int64_t>(1, round_half_away(cfg.emergency_ratio * static_cast<double>(seg.planned_budget)));
}

bool hard_cap_reached(const SteeringState& state, const SteerConfig& cfg) {
    return state.current().generated >= emergency_cap(state, cfg);
}

SteerStepInfo steer_step(SteeringState& state, const SegmentPlan& plan, std::span<const double> posterior,
                         int64_t step_index, const SteerConfig& cfg) {
    SteerStepInfo info;
    auto& seg = state.mutable_current();
    const double budget = static_cast<double>(seg.planned_budget);
    const double generated = static_cast<double>(seg.generated);

    if (generated > cfg.emergency_ratio * budget || hard_cap_reached(state, cfg)) {
        if (seg.regime != Regime::Emergency) {
            seg.regime = Regime::Emergency;
            seg.effective_target = seg.start_cursor + emergency_cap(state, cfg);
        }
    } else if (generated > cfg.conservative_ratio * budget && seg.regime == Regime::Normal) {
        seg.regime = Regime::Conservative;
    }
    info.gain = seg.regime == Regime::Conservative ? 0.5 * cfg.gain : cfg.gain;

    if (seg.regime != Regime::Emergency && step_index % cfg.update_period == 0) {
        info.updated = true;
        info.progress = progress(plan, state, posterior);
        info.correction = correction(info.progress.delta_r, cfg, info.gain);
        seg.effective_target += info.correction;
    }

    // adaptive lower bound: the target always leaves room for at least one more token
    seg.effective_target = std::max(seg.effective_target, state.cursor() + 1);
    seg.payload_id = seg.effective_target;
    return info;
}

double eos_schedule(double rho, const EosScheduleConfig& c) {
    if (rho <= c.rho_lo) {
        return c.bias_min;
    }
    if (rho < c.rho_neutral_lo) {
        return c.bias_min * (c.rho_neutral_lo - rho) / (c.rho_neutral_lo - c.rho_lo);
    }
    if (rho <= c.rho_neutral_hi) {
        return 0.0;
    }
    if (rho < c.rho_hi) {
        return c.bias_max * (rho - c.rho_neutral_hi) / (c.rho_hi - c.rho_neutral_hi);
    }
    return c.bias_max;
}

double eos_bias(const SteeringState& state, const SegmentPlan& plan, const SteerConfig& cfg) {
    if (state.active() < plan.num_segments()) {
        return cfg.eos.suppress_bias;
    }
    const auto& seg = state.current();
    const double rho = static_cast<double>(seg.generated) / static_cast<double>(seg.planned_budget);
    return eos_schedule(rho, cfg.eos);
}

std::string steer_trace_csv_header() {
    return "step,segment,r_text,r_sem,delta_r,correction,effective_target,regime,eos_bias\n";
}

std::string steer_trace_csv_row(const SteerTraceRow& row) {
    std::string out = std::to_string(row.step) + "," + std::to_string(row.segment) + ",";
    out += format_real(row.progress.r_text) + "," + format_real(row.progress.r_sem) + "," +
           format_real(row.progress.delta_r) + ",";
    out += std::to_string(row.correction) + "," + std::to_string(row.effective_target) + ",";
    out += std::string(to_string(row.regime)) + "," + format_real(row.eos_bias) + "\n";
    return out;
}

}  // namespace segctl
