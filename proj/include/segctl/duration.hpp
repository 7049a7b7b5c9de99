// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <vector>

#include "segctl/core.hpp"

namespace segctl {

// Final-segment EOS bias as a function of rho = generated / budget.
// Piecewise linear through the anchors:
//   rho <= lo                     bias_min
//   lo .. neutral_lo              bias_min -> 0
//   neutral_lo .. neutral_hi      0
//   neutral_hi .. hi              0 -> bias_max
//   rho >= hi                     bias_max
struct EosScheduleConfig {
    double suppress_bias = -1e4;  // non-final segments
    double bias_min = -5.0;
    double bias_max = 15.0;
    double rho_lo = 0.5;
    double rho_neutral_lo = 0.8;
    double rho_neutral_hi = 1.1;
    double rho_hi = 1.2;
};

struct SteerConfig {
    double gain = 25.0;
    double deadband = 0.01;
    int64_t max_step = 10;
    int update_period = 5;
    double conservative_ratio = 1.2;
    double emergency_ratio = 1.5;
    EosScheduleConfig eos;

    void validate() const;
};

enum class Regime { Normal, Conservative, Emergency };

const char* to_string(Regime r);

struct SegmentSteer {
    int64_t planned_budget = 0;    // d_m
    int64_t planned_target = 0;    // D_m, cumulative
    int64_t effective_target = 0;  // D'_m
    int64_t generated = 0;         // tokens emitted while this segment was active
    int64_t start_cursor = 0;      // global token count when the segment became active
    int64_t payload_id = 0;        // duration-table index currently conditioning the segment
    Regime regime = Regime::Normal;
};

// Owned by one decode loop.
class SteeringState {
public:
    static SteeringState init(const SegmentPlan& plan);

    int active() const { return active_; }
    int64_t cursor() const { return cursor_; }
    const SegmentSteer& segment(int m) const { return segments_.at(m - 1); }
    const std::vector<SegmentSteer>& segments() const { return segments_; }
    const SegmentSteer& current() const { return segments_[active_ - 1]; }

    // Records one emitted semantic token against the active segment.
    void on_token();
    // Moves to segment m (>= active). The segment left behind returns to its
    // planned target.
    void activate(int m);

    // Test hooks: put the controller in a given situation directly.
    void set_generated(int64_t generated) { mutable_current().generated = generated; }
    void set_cursor(int64_t cursor) { cursor_ = cursor; }

    SegmentSteer& mutable_current() { return segments_[active_ - 1]; }

private:
    std::vector<SegmentSteer> segments_;
    int active_ = 1;
    int64_t cursor_ = 0;
};

struct Progress {
    double r_text = 0.0;
    double r_sem = 0.0;
    double delta_r = 0.0;
};

Progress progress(const SegmentPlan& plan, const SteeringState& state, std::span<const double> posterior);

// 0 inside the deadband, else clip(round(gain * dr), -max_step, max_step).
int64_t correction(double delta_r, const SteerConfig& cfg);
int64_t correction(double delta_r, const SteerConfig& cfg, double gain);

struct SteerStepInfo {
    bool updated = false;
    Progress progress;
    int64_t correction = 0;
    double gain = 0.0;
};

SteerStepInfo steer_step(SteeringState& state, const SegmentPlan& plan, std::span<const double> posterior,
                         int64_t step_index, const SteerConfig& cfg);

// Token count at which the active segment is cut off in the emergency regime.
int64_t emergency_cap(const SteeringState& state, const SteerConfig& cfg);
bool hard_cap_reached(const SteeringState& state, const SteerConfig& cfg);

double eos_schedule(double rho, const EosScheduleConfig& cfg);
double eos_bias(const SteeringState& state, const SegmentPlan& plan, const SteerConfig& cfg);

// CSV export of per-step steering decisions.
struct SteerTraceRow {
    int64_t step = 0;
    int segment = 1;
    Progress progress;
    int64_t correction = 0;
    int64_t effective_target = 0;
    Regime regime = Regime::Normal;
    double eos_bias = 0.0;
};

std::string steer_trace_csv_header();
std::string steer_trace_csv_row(const SteerTraceRow& row);

}  // namespace segctl
