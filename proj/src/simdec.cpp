// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/simdec.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/distributions/students_t.hpp>

#include "segctl/mask.hpp"

namespace segctl {

namespace {

enum HeadKind { kReliable = 0, kUniform = 1, kDiffuse = 2, kDistractor = 3 };

constexpr double kAttentionFloor = 1e-4;

// Text token t covers coordinates (t - 1, t].
int text_index(double x, int text_len) {
    return static_cast<int>(std::clamp<double>(std::ceil(x), 1.0, static_cast<double>(text_len)));
}

double gaussian(double t, double center, double sigma) {
    const double d = t - center;
    return std::exp(-d * d / (2.0 * sigma * sigma));
}

}  // namespace

const char* to_string(NoiseModel m) {
    switch (m) {
        case NoiseModel::Uniform: return "uniform";
        case NoiseModel::Diffuse: return "diffuse_gaussian";
        case NoiseModel::Distractor: return "nonmonotonic_distractor";
        case NoiseModel::Mixed: return "mixed";
    }
    return "unknown";
}

NoiseModel parse_noise_model(const std::string& name) {
    for (auto m : {NoiseModel::Uniform, NoiseModel::Diffuse, NoiseModel::Distractor, NoiseModel::Mixed}) {
        if (name == to_string(m)) {
            return m;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown noise model '" + name + "'");
}

void SimConfig::validate() const {
    if (layers < 1 || heads < 1) {
        throw Error(ErrorCode::InvalidConfig, "layers and heads must be >= 1");
    }
    if (reliable_heads.empty()) {
        throw Error(ErrorCode::InvalidConfig, "at least one reliable head is required");
    }
    for (const auto& h : reliable_heads) {
        if (h.layer < 0 || h.layer >= layers || h.head < 0 || h.head >= heads) {
            throw Error(ErrorCode::InvalidConfig, "reliable head out of range");
        }
    }
    if (!(speed_mean > 0.0) || speed_jitter < 0.0 || step_jitter < 0.0 || noise_level < 0.0) {
        throw Error(ErrorCode::InvalidConfig, "speeds must be > 0 and jitters >= 0");
    }
    if (!(sigma_true > 0.0) || !(diffuse_sigma > 0.0) || adherence < 0.0 || adherence > 1.0) {
        throw Error(ErrorCode::InvalidConfig, "sigmas must be > 0 and adherence within [0, 1]");
    }
    if (!(duration_scale > 0.0) || uniform_fraction < 0.0 || uniform_fraction > 1.0) {
        throw Error(ErrorCode::InvalidConfig, "duration_scale must be > 0, uniform_fraction within [0, 1]");
    }
    msa.validate();
    steer.validate();
}

SimConfig noise_free(SimConfig c) {
    c.noise_model = NoiseModel::Uniform;
    c.noise_level = 0.0;
    c.mass_jitter = 0.0;
    c.speed_jitter = 0.0;
    c.step_jitter = 0.0;
    c.eos_offset_jitter = 0.0;
    c.eos_noise = 0.0;
    return c;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

nlohmann::json mass_json(const MassRange& r) { return nlohmann::json::array({r.lo, r.hi}); }

MassRange mass_from(const nlohmann::json& j, const MassRange& def) {
    if (j.is_null()) {
        return def;
    }
    return {j.at(0).get<double>(), j.at(1).get<double>()};
}

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key) && !j.at(key).is_null()) {
        out = j.at(key).get<T>();
    }
}

}  // namespace

void to_json(nlohmann::json& j, const SimConfig& c) {
    nlohmann::json heads = nlohmann::json::array();
    for (const auto& h : c.reliable_heads) {
        heads.push_back({h.layer, h.head});
    }
    j = nlohmann::json{
        {"seed", c.seed},
        {"layers", c.layers},
        {"heads", c.heads},
        {"reliable_heads", heads},
        {"noise_model", to_string(c.noise_model)},
        {"uniform_fraction", c.uniform_fraction},
        {"noise_level", c.noise_level},
        {"sigma_true", c.sigma_true},
        {"diffuse_sigma", c.diffuse_sigma},
        {"distractor_jump_prob", c.distractor_jump_prob},
        {"reliable_mass", mass_json(c.reliable_mass)},
        {"uniform_mass", mass_json(c.uniform_mass)},
        {"distractor_mass", mass_json(c.distractor_mass)},
        {"mass_jitter", c.mass_jitter},
        {"speed_mean", c.speed_mean},
        {"speed_jitter", c.speed_jitter},
        {"step_jitter", c.step_jitter},
        {"adherence", c.adherence},
        {"duration_scale", c.duration_scale},
        {"eos_text_slope", c.eos_text_slope},
        {"eos_offset_jitter", c.eos_offset_jitter},
        {"eos_drift", c.eos_drift},
        {"eos_noise", c.eos_noise},
        {"msa",
         {{"advance_prob", c.msa.advance_prob},
          {"smoothing_sigma", c.msa.smoothing_sigma},
          {"log_floor", c.msa.log_floor},
          {"kernel_radius", c.msa.kernel_radius}}},
        {"steer",
         {{"gain", c.steer.gain},
          {"deadband", c.steer.deadband},
          {"max_step", c.steer.max_step},
          {"update_period", c.steer.update_period},
          {"conservative_ratio", c.steer.conservative_ratio},
          {"emergency_ratio", c.steer.emergency_ratio},
          {"eos",
           {{"suppress_bias", c.steer.eos.suppress_bias},
            {"bias_min", c.steer.eos.bias_min},
            {"bias_max", c.steer.eos.bias_max},
            {"rho_lo", c.steer.eos.rho_lo},
            {"rho_neutral_lo", c.steer.eos.rho_neutral_lo},
            {"rho_neutral_hi", c.steer.eos.rho_neutral_hi},
            {"rho_hi", c.steer.eos.rho_hi}}}}},
        {"ablation", {{"top_k", c.ablation.top_k}, {"switch_prob", c.ablation.switch_prob}}},
    };
}

void from_json(const nlohmann::json& j, SimConfig& c) {
    try {
        read_opt(j, "seed", c.seed);
        read_opt(j, "layers", c.layers);
        read_opt(j, "heads", c.heads);
        if (j.contains("reliable_heads")) {
            c.reliable_heads.clear();
            for (const auto& h : j.at("reliable_heads")) {
                c.reliable_heads.push_back({h.at(0).get<int>(), h.at(1).get<int>()});
            }
        }
        if (j.contains("noise_model")) {
            c.noise_model = parse_noise_model(j.at("noise_model").get<std::string>());
        }
        read_opt(j, "uniform_fraction", c.uniform_fraction);
        read_opt(j, "noise_level", c.noise_level);
        read_opt(j, "sigma_true", c.sigma_true);
        read_opt(j, "diffuse_sigma", c.diffuse_sigma);
        read_opt(j, "distractor_jump_prob", c.distractor_jump_prob);
        c.reliable_mass = mass_from(j.value("reliable_mass", nlohmann::json()), c.reliable_mass);
        c.uniform_mass = mass_from(j.value("uniform_mass", nlohmann::json()), c.uniform_mass);
        c.distractor_mass = mass_from(j.value("distractor_mass", nlohmann::json()), c.distractor_mass);
        read_opt(j, "mass_jitter", c.mass_jitter);
        read_opt(j, "speed_mean", c.speed_mean);
        read_opt(j, "speed_jitter", c.speed_jitter);
        read_opt(j, "step_jitter", c.step_jitter);
        read_opt(j, "adherence", c.adherence);
        read_opt(j, "duration_scale", c.duration_scale);
        read_opt(j, "eos_text_slope", c.eos_text_slope);
        read_opt(j, "eos_offset_jitter", c.eos_offset_jitter);
        read_opt(j, "eos_drift", c.eos_drift);
        read_opt(j, "eos_noise", c.eos_noise);
        if (j.contains("msa")) {
            const auto& m = j.at("msa");
            read_opt(m, "advance_prob", c.msa.advance_prob);
            read_opt(m, "smoothing_sigma", c.msa.smoothing_sigma);
            read_opt(m, "log_floor", c.msa.log_floor);
            read_opt(m, "kernel_radius", c.msa.kernel_radius);
        }
        if (j.contains("steer")) {
            const auto& s = j.at("steer");
            read_opt(s, "gain", c.steer.gain);
            read_opt(s, "deadband", c.steer.deadband);
            read_opt(s, "max_step", c.steer.max_step);
            read_opt(s, "update_period", c.steer.update_period);
            read_opt(s, "conservative_ratio", c.steer.conservative_ratio);
            read_opt(s, "emergency_ratio", c.steer.emergency_ratio);
            if (s.contains("eos")) {
                const auto& e = s.at("eos");
                read_opt(e, "suppress_bias", c.steer.eos.suppress_bias);
                read_opt(e, "bias_min", c.steer.eos.bias_min);
                read_opt(e, "bias_max", c.steer.eos.bias_max);
                read_opt(e, "rho_lo", c.steer.eos.rho_lo);
                read_opt(e, "rho_neutral_lo", c.steer.eos.rho_neutral_lo);
                read_opt(e, "rho_neutral_hi", c.steer.eos.rho_neutral_hi);
                read_opt(e, "rho_hi", c.steer.eos.rho_hi);
            }
        }
        if (j.contains("ablation")) {
            read_opt(j.at("ablation"), "top_k", c.ablation.top_k);
            read_opt(j.at("ablation"), "switch_prob", c.ablation.switch_prob);
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("sim config: ") + e.what());
    }
}

std::string steering_name(SteeringFlags f) {
    if (f.local && f.eos) return "full";
    if (f.eos) return "no_local";
    if (f.local) return "no_eos";
    return "baseline";
}

SteeringFlags parse_steering(const std::string& name) {
    for (SteeringFlags f : {SteeringFlags{true, true}, SteeringFlags{false, true}, SteeringFlags{true, false},
                            SteeringFlags{false, false}}) {
        if (name == steering_name(f)) {
            return f;
        }
    }
    throw Error(ErrorCode::InvalidConfig, "unknown steering set '" + name + "'");
}

// ---------------------------------------------------------------------------
// Decoder

SyntheticDecoder::SyntheticDecoder(const SegmentPlan& plan, const SimConfig& cfg)
    : plan_(plan), cfg_(cfg), rng_(cfg.seed * 0x9E3779B97F4A7C15ULL + 0x5EED) {
    const int M = plan.num_segments();
    for (int m = 0; m < M; ++m) {
        speeds_.push_back(cfg.speed_mean * std::max(0.3, 1.0 + cfg.speed_jitter * rng_.normal()));
    }

    const int n = cfg.layers * cfg.heads;
    kinds_.assign(n, kUniform);
    std::vector<int> others;
    for (int idx = 0; idx < n; ++idx) {
        const HeadId id{idx / cfg.heads, idx % cfg.heads};
        if (std::find(cfg.reliable_heads.begin(), cfg.reliable_heads.end(), id) != cfg.reliable_heads.end()) {
            kinds_[idx] = kReliable;
        } else {
            others.push_back(idx);
        }
    }
    switch (cfg.noise_model) {
        case NoiseModel::Uniform:
            break;
        case NoiseModel::Diffuse:
            for (int idx : others) kinds_[idx] = kDiffuse;
            break;
        case NoiseModel::Distractor:
            for (int idx : others) kinds_[idx] = kDistractor;
            break;
        case NoiseModel::Mixed: {
            const auto n_distract = static_cast<size_t>(
                round_half_away((1.0 - cfg.uniform_fraction) * static_cast<double>(others.size())));
            for (size_t j = others.size(); j > 1; --j) {
                std::swap(others[j - 1], others[rng_.below(j)]);
            }
            for (size_t j = 0; j < std::min(n_distract, others.size()); ++j) {
                kinds_[others[j]] = kDistractor;
            }
            break;
        }
    }

    for (int idx = 0; idx < n; ++idx) {
        const MassRange& r = kinds_[idx] == kReliable     ? cfg.reliable_mass
                             : kinds_[idx] == kDistractor ? cfg.distractor_mass
                                                          : cfg.uniform_mass;
        masses_.push_back(rng_.uniform(r.lo, r.hi));
        anchors_.push_back(rng_.uniform(1.0, static_cast<double>(plan.text_len())));
    }
    total_budget_ = plan.has_budgets() ? cumulative_budgets(plan).back() : 0;
    eos_offset_ = cfg.eos_offset_jitter * rng_.normal();
}

int SyntheticDecoder::segment_at(double x) const {
    const int T = plan_.text_len();
    if (x > T) {
        return plan_.num_segments();
    }
    return segment_of_text(plan_, text_index(x, T));
}

AttentionObservation SyntheticDecoder::observe(double x) {
    const int T = plan_.text_len();
    const double xc = std::clamp(x, 1.0, static_cast<double>(T));
    AttentionObservation obs(cfg_.layers, cfg_.heads, T);
    for (int l = 0; l < cfg_.layers; ++l) {
        for (int h = 0; h < cfg_.heads; ++h) {
            const int idx = l * cfg_.heads + h;
            auto a = obs.slice(l, h);
            double center = xc;
            double sigma = cfg_.sigma_true;
            if (kinds_[idx] == kDistractor) {
                if (rng_.bernoulli(cfg_.distractor_jump_prob)) {
                    anchors_[idx] = rng_.uniform(1.0, static_cast<double>(T));
                }
                center = anchors_[idx];
            } else if (kinds_[idx] == kDiffuse) {
                sigma = cfg_.diffuse_sigma;
            }
            double sum = 0.0;
            for (int t = 1; t <= T; ++t) {
                double w = kinds_[idx] == kUniform ? 1.0 : gaussian(t, center, sigma) + kAttentionFloor;
                if (cfg_.noise_level > 0.0) {
                    w *= std::exp(cfg_.noise_level * rng_.normal());
                }
                a[t - 1] = w;
                sum += w;
            }
            for (double& v : a) {
                v /= sum;
            }
            double mass = masses_[idx];
            if (cfg_.mass_jitter > 0.0) {
                mass *= std::exp(cfg_.mass_jitter * rng_.normal());
            }
            obs.set_mass(l, h, std::min(mass, 1.0));
        }
    }
    return obs;
}

StreamStep SyntheticDecoder::step(int segment, int64_t target) {
    if (segment != conditioned_segment_) {
        conditioned_segment_ = segment;
        segment_start_ = emitted_;
    }
    const double s_nat = speeds_[segment_at(x_) - 1];
    double speed = s_nat;
    if (target > 0 && cfg_.adherence > 0.0) {
        // pace implied by the conditioning, followed open loop
        const double implied = static_cast<double>(target - segment_start_) / plan_.span(segment).length();
        speed = (1.0 - cfg_.adherence) * s_nat + cfg_.adherence * std::clamp(implied, 0.5 * s_nat, 2.0 * s_nat);
    }
    const double jitter = cfg_.step_jitter > 0.0 ? std::max(0.0, 1.0 + cfg_.step_jitter * rng_.normal()) : 1.0;
    x_ += jitter / speed;
    ++emitted_;

    StreamStep out;
    out.obs = observe(x_);
    out.true_coordinate = x_;
    out.true_position = text_index(x_, plan_.text_len());
    return out;
}

double SyntheticDecoder::eos_logit() {
    const double past_end = x_ - plan_.text_len() - eos_offset_;
    double logit = cfg_.eos_text_slope * past_end;
    if (total_budget_ > 0) {
        logit += cfg_.eos_drift *
                 std::max(0.0, static_cast<double>(emitted_) / static_cast<double>(total_budget_) - 0.5);
    }
    if (cfg_.eos_noise > 0.0) {
        logit += cfg_.eos_noise * rng_.normal();
    }
    return logit;
}

std::vector<StreamStep> gen_stream(const SegmentPlan& plan, const SimConfig& cfg, int steps) {
    cfg.validate();
    SyntheticDecoder dec(plan, cfg);
    const auto cumulative = plan.has_budgets() ? cumulative_budgets(plan) : std::vector<int64_t>{};
    std::vector<StreamStep> out;
    out.reserve(steps);
    for (int i = 0; i < steps; ++i) {
        const int m = dec.segment_at(dec.coordinate());
        out.push_back(dec.step(m, cumulative.empty() ? 0 : cumulative[m - 1]));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Decode loop

SimResult run_trace(const SegmentPlan& ref_plan, const SimConfig& cfg, AlignerVariant variant,
                    SteeringFlags steering) {
    cfg.validate();
    const SegmentPlan plan = scale_budgets(ref_plan, cfg.duration_scale);
    const int M = plan.num_segments();
    const int T = plan.text_len();

    SyntheticDecoder decoder(plan, cfg);
    Rng align_rng(cfg.seed * 0xD1B54A32D192ED03ULL + 0xA11);
    AlignerState aligner = init_aligner(variant, T);
    SteeringState steer = SteeringState::init(plan);
    const int64_t safety_cap = 10 * cumulative_budgets(plan).back();

    SimResult res;
    res.targets = *plan.duration_budgets();
    res.generated.assign(M, 0);
    res.detected_switch_step.assign(M - 1, -1);
    std::vector<double> switch_coordinate(M - 1, std::numeric_limits<double>::quiet_NaN());
    std::vector<int> seg_s;

    auto record_switch = [&](int from, int64_t step, double coordinate) {
        res.detected_switch_step[from - 1] = static_cast<int>(step);
        switch_coordinate[from - 1] = coordinate;
    };
    auto finish_with_eos = [&](int64_t step, int segment, double bias) {
        StepRecord rec;
        rec.step = static_cast<int>(step);
        rec.segment = segment;
        rec.token = TokenClass::Eos;
        rec.posterior = aligner.belief.posterior;
        rec.effective_target = steer.current().effective_target;
        rec.eos_bias = bias;
        res.trace.steps.push_back(std::move(rec));
        if (segment < M) {
            res.eos_in_nonfinal = true;
        }
    };

    for (int64_t i = 1;; ++i) {
        if (i > safety_cap) {
            throw Error(ErrorCode::NoTermination, "decode exceeded 10x the total budget");
        }
        const int m = steer.active();

        const auto row = current_semantic_row(plan, seg_s, static_cast<int>(i), m);
        const int Lc = plan.cond_block_len();
        for (int c = 0; c < M * Lc; ++c) {
            const bool own = c >= (m - 1) * Lc && c < m * Lc;
            if ((row[c] == MaskEntry::Visible) != own) {
                ++res.mask_violations;
            }
        }

        const double bias = steering.eos ? eos_bias(steer, plan, cfg.steer)
                                         : (m < M ? cfg.steer.eos.suppress_bias : 0.0);
        if (decoder.eos_logit() + bias > 0.0) {
            finish_with_eos(i, m, bias);
            break;
        }

        const StreamStep st = decoder.step(m, steer.current().effective_target);
        steer.on_token();
        seg_s.push_back(m);
        ++res.generated[decoder.segment_at(st.true_coordinate) - 1];
        res.true_coordinate.push_back(st.true_coordinate);

        AlignStepInfo info =
            align_step_ablation(variant, aligner, st.obs, plan, cfg.msa, cfg.ablation, align_rng);
        const double mass = std::accumulate(info.posterior.begin(), info.posterior.end(), 0.0);
        res.max_posterior_error = std::max(res.max_posterior_error, std::abs(mass - 1.0));
        res.aligned_position.push_back(info.expected_pos);

        if (info.segment > m) {
            steer.activate(info.segment);
            record_switch(m, i, st.true_coordinate);
        }

        SteerStepInfo sinfo;
        if (steering.local) {
            sinfo = steer_step(steer, plan, info.posterior, i, cfg.steer);
        }

        StepRecord rec;
        rec.step = static_cast<int>(i);
        rec.segment = m;
        rec.posterior = info.posterior;
        rec.effective_target = steer.current().effective_target;
        rec.eos_bias = bias;
        res.trace.steps.push_back(std::move(rec));

        SteerTraceRow srow;
        srow.step = i;
        srow.segment = steer.active();
        srow.progress = sinfo.updated ? sinfo.progress : progress(plan, steer, info.posterior);
        srow.correction = sinfo.correction;
        srow.effective_target = steer.current().effective_target;
        srow.regime = steer.current().regime;
        srow.eos_bias = bias;
        res.steer_rows.push_back(srow);
        res.align_steps.push_back(std::move(info));

        if (steering.local && hard_cap_reached(steer, cfg.steer)) {
            const int cur = steer.active();
            if (cur < M) {
                steer.activate(cur + 1);
                aligner.segment = cur + 1;
                record_switch(cur, i, st.true_coordinate);
            } else {
                res.terminated_by_cap = true;
                finish_with_eos(i + 1, cur, bias);
                break;
            }
        }
    }

    double mae = 0.0;
    const double last_coordinate = res.true_coordinate.empty() ? 0.0 : res.true_coordinate.back();
    for (int r = 1; r < M; ++r) {
        const double detected = std::isnan(switch_coordinate[r - 1]) ? last_coordinate : switch_coordinate[r - 1];
        mae += std::abs(detected - plan.boundary(r)) / plan.span(r).length();
    }
    res.boundary_mae = M > 1 ? mae / (M - 1) : 0.0;

    double err = 0.0;
    for (int m = 0; m < M; ++m) {
        err += std::abs(static_cast<double>(res.generated[m] - res.targets[m])) / static_cast<double>(res.targets[m]);
    }
    res.token_error_rate = 100.0 * err / M;
    return res;
}

// ---------------------------------------------------------------------------
// Suite

SegmentPlan random_plan(const PlanGenerator& gen, double speed_mean, Rng& rng) {
    const int M = gen.segments_min + static_cast<int>(rng.below(gen.segments_max - gen.segments_min + 1));
    const int T_min = std::max(gen.text_len_min, M * gen.min_segment_len);
    const int T = T_min + static_cast<int>(rng.below(std::max(gen.text_len_max - T_min, 0) + 1));
    const int extra = T - M * gen.min_segment_len;
    std::vector<int> cuts;
    for (int r = 0; r < M - 1; ++r) {
        cuts.push_back(static_cast<int>(rng.below(extra + 1)));
    }
    std::sort(cuts.begin(), cuts.end());
    std::vector<int> boundaries;
    std::vector<int64_t> budgets;
    int prev = 0;
    for (int r = 0; r < M - 1; ++r) {
        boundaries.push_back((r + 1) * gen.min_segment_len + cuts[r]);
    }
    for (int m = 0; m < M; ++m) {
        const int end = m < M - 1 ? boundaries[m] : T;
        budgets.push_back(std::max<int64_t>(1, round_half_away((end - prev) * speed_mean)));
        prev = end;
    }
    return build_plan(T, boundaries, gen.cond_block_len, budgets);
}

SegmentPlan suite_plan(const SuiteConfig& cfg, size_t seed_index) {
    if (!cfg.fixed_plans.empty()) {
        return cfg.fixed_plans[seed_index % cfg.fixed_plans.size()];
    }
    Rng rng(cfg.seeds.at(seed_index) * 0xBF58476D1CE4E5B9ULL + 0x91A7);
    return random_plan(cfg.plans, cfg.sim.speed_mean, rng);
}

void to_json(nlohmann::json& j, const SuiteConfig& c) {
    nlohmann::json variants = nlohmann::json::array();
    for (auto v : c.align_variants) variants.push_back(to_string(v));
    nlohmann::json steering = nlohmann::json::array();
    for (auto s : c.steering_sets) steering.push_back(steering_name(s));
    nlohmann::json plans = nlohmann::json::array();
    for (const auto& p : c.fixed_plans) plans.push_back(p);
    j = nlohmann::json{{"sim", c.sim},
                       {"seeds", c.seeds},
                       {"align_variants", variants},
                       {"steering_sets", steering},
                       {"scalings", c.scalings},
                       {"plan_generator",
                        {{"text_len", {c.plans.text_len_min, c.plans.text_len_max}},
                         {"segments", {c.plans.segments_min, c.plans.segments_max}},
                         {"min_segment_len", c.plans.min_segment_len},
                         {"cond_block_len", c.plans.cond_block_len}}},
                       {"plans", plans}};
}

SuiteConfig suite_from_json(const nlohmann::json& j) {
    SuiteConfig c;
    try {
        if (j.contains("sim")) {
            from_json(j.at("sim"), c.sim);
        }
        if (j.contains("seeds")) {
            c.seeds = j.at("seeds").get<std::vector<uint64_t>>();
        }
        if (j.contains("align_variants")) {
            c.align_variants.clear();
            for (const auto& v : j.at("align_variants")) c.align_variants.push_back(parse_variant(v.get<std::string>()));
        }
        if (j.contains("steering_sets")) {
            c.steering_sets.clear();
            for (const auto& s : j.at("steering_sets")) c.steering_sets.push_back(parse_steering(s.get<std::string>()));
        }
        read_opt(j, "scalings", c.scalings);
        if (j.contains("plan_generator")) {
            const auto& g = j.at("plan_generator");
            if (g.contains("text_len")) {
                c.plans.text_len_min = g.at("text_len").at(0).get<int>();
                c.plans.text_len_max = g.at("text_len").at(1).get<int>();
            }
            if (g.contains("segments")) {
                c.plans.segments_min = g.at("segments").at(0).get<int>();
                c.plans.segments_max = g.at("segments").at(1).get<int>();
            }
            read_opt(g, "min_segment_len", c.plans.min_segment_len);
            read_opt(g, "cond_block_len", c.plans.cond_block_len);
        }
        if (j.contains("plans")) {
            for (const auto& p : j.at("plans")) c.fixed_plans.push_back(plan_from_json(p));
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::ParseError, std::string("suite config: ") + e.what());
    }
    if (c.plans.segments_min < 1 || c.plans.segments_max < c.plans.segments_min || c.plans.min_segment_len < 1 ||
        c.plans.text_len_max < c.plans.text_len_min) {
        throw Error(ErrorCode::InvalidConfig, "bad plan generator ranges");
    }
    return c;
}

MetricSummary summarize(const std::vector<double>& values) {
    MetricSummary s;
    s.n = static_cast<int>(values.size());
    if (values.empty()) {
        return s;
    }
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / s.n;
    if (s.n > 1) {
        double ss = 0.0;
        for (double v : values) ss += (v - s.mean) * (v - s.mean);
        s.stddev = std::sqrt(ss / (s.n - 1));
    }
    return s;
}

PairedComparison paired_compare(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw Error(ErrorCode::TooFew, "paired comparison needs two equal samples of size >= 2");
    }
    std::vector<double> d(a.size());
    for (size_t k = 0; k < a.size(); ++k) d[k] = a[k] - b[k];
    const MetricSummary s = summarize(d);
    const boost::math::students_t dist(static_cast<double>(s.n - 1));
    const double t = boost::math::quantile(boost::math::complement(dist, 0.025));
    const double half = t * s.stddev / std::sqrt(static_cast<double>(s.n));
    return {s.mean, s.mean - half, s.mean + half, s.n};
}

namespace {

// Runs fn(k) for k in [0, n) on a few threads; results land by index.
template <typename Fn>
void parallel_for(size_t n, int threads, Fn&& fn) {
    const size_t workers =
        std::max<size_t>(1, std::min<size_t>(n, threads > 0 ? threads : std::max(1u, std::thread::hardware_concurrency())));
    std::atomic<size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto body = [&] {
        for (size_t k = next++; k < n; k = next++) {
            try {
                fn(k);
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) failure = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        body();
    } else {
        std::vector<std::jthread> pool;
        for (size_t w = 0; w < workers; ++w) pool.emplace_back(body);
    }
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

SuiteResult run_suite(const SuiteConfig& cfg, bool alignment, bool duration) {
    if (cfg.seeds.empty()) {
        throw Error(ErrorCode::TooFew, "suite needs at least one seed");
    }
    cfg.sim.validate();
    const size_t S = cfg.seeds.size();
    std::vector<SegmentPlan> plans;
    for (size_t k = 0; k < S; ++k) plans.push_back(suite_plan(cfg, k));

    struct Job {
        AlignerVariant variant;
        SteeringFlags steering;
        double scaling;
        size_t seed_index;
    };
    std::vector<Job> jobs;
    if (alignment) {
        for (auto v : cfg.align_variants)
            for (size_t k = 0; k < S; ++k) jobs.push_back({v, {true, true}, 1.0, k});
    }
    if (duration) {
        for (auto f : cfg.steering_sets)
            for (double sc : cfg.scalings)
                for (size_t k = 0; k < S; ++k) jobs.push_back({AlignerVariant::Msa, f, sc, k});
    }

    std::vector<double> metric(jobs.size());
    std::vector<char> eos_bad(jobs.size(), 0);
    std::vector<double> posterior_error(jobs.size(), 0.0);
    parallel_for(jobs.size(), cfg.threads, [&](size_t j) {
        const Job& job = jobs[j];
        SimConfig sim = cfg.sim;
        sim.seed = cfg.seeds[job.seed_index];
        sim.duration_scale = job.scaling;
        const SimResult r = run_trace(plans[job.seed_index], sim, job.variant, job.steering);
        metric[j] = j < (alignment ? cfg.align_variants.size() * S : 0) ? r.boundary_mae : r.token_error_rate;
        eos_bad[j] = r.eos_in_nonfinal ? 1 : 0;
        posterior_error[j] = r.max_posterior_error;
    });

    SuiteResult out;
    out.traces = static_cast<int>(jobs.size());
    out.eos_violations = static_cast<int>(std::count(eos_bad.begin(), eos_bad.end(), 1));
    out.max_posterior_error = *std::max_element(posterior_error.begin(), posterior_error.end());
    size_t j = 0;
    if (alignment) {
        for (auto v : cfg.align_variants) {
            AlignRow row{v, {}, {}};
            for (size_t k = 0; k < S; ++k) row.per_seed_mae.push_back(metric[j++]);
            row.mae = summarize(row.per_seed_mae);
            out.align.push_back(std::move(row));
        }
    }
    if (duration) {
        for (auto f : cfg.steering_sets) {
            for (double sc : cfg.scalings) {
                DurationCell cell{f, sc, {}, {}};
                for (size_t k = 0; k < S; ++k) cell.per_seed_error.push_back(metric[j++]);
                cell.error = summarize(cell.per_seed_error);
                out.duration.push_back(std::move(cell));
            }
        }
    }
    return out;
}

std::string align_table_csv(const SuiteResult& r) {
    std::string out = "variant,mae_mean,mae_std,n\n";
    for (const auto& row : r.align) {
        out += std::string(to_string(row.variant)) + "," + format_real(row.mae.mean) + "," +
               format_real(row.mae.stddev) + "," + std::to_string(row.mae.n) + "\n";
    }
    return out;
}

std::string duration_table_csv(const SuiteResult& r) {
    std::string out = "steering,scaling,error_mean,error_std,n\n";
    for (const auto& c : r.duration) {
        out += steering_name(c.steering) + "," + format_real(c.scaling) + "," + format_real(c.error.mean) + "," +
               format_real(c.error.stddev) + "," + std::to_string(c.error.n) + "\n";
    }
    return out;
}

nlohmann::json suite_to_json(const SuiteResult& r) {
    nlohmann::json j;
    j["traces"] = r.traces;
    j["eos_violations"] = r.eos_violations;
    j["alignment"] = nlohmann::json::array();
    for (const auto& row : r.align) {
        j["alignment"].push_back({{"variant", to_string(row.variant)},
                                  {"mae_mean", row.mae.mean},
                                  {"mae_std", row.mae.stddev},
                                  {"n", row.mae.n}});
    }
    j["duration"] = nlohmann::json::array();
    for (const auto& c : r.duration) {
        j["duration"].push_back({{"steering", steering_name(c.steering)},
                                 {"scaling", c.scaling},
                                 {"error_mean", c.error.mean},
                                 {"error_std", c.error.stddev},
                                 {"n", c.error.n}});
    }
    return j;
}

std::string alignment_paths_csv(const SegmentPlan& plan, const SimConfig& cfg,
                                const std::vector<AlignerVariant>& variants) {
    std::vector<SimResult> runs;
    for (auto v : variants) runs.push_back(run_trace(plan, cfg, v, {true, true}));
    std::string out = "variant,step,true_coordinate,aligned_position,segment\n";
    for (size_t k = 0; k < variants.size(); ++k) {
        const auto& r = runs[k];
        for (size_t i = 0; i < r.aligned_position.size(); ++i) {
            out += std::string(to_string(variants[k])) + "," + std::to_string(i + 1) + "," +
                   format_real(r.true_coordinate[i]) + "," + format_real(r.aligned_position[i]) + "," +
                   std::to_string(r.align_steps[i].segment) + "\n";
        }
    }
    return out;
}

}  // namespace segctl
