// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numeric>

#include "segctl/simdec.hpp"

using namespace segctl;

namespace {

SegmentPlan check_plan() { return build_plan(45, {15, 30}, 2, std::vector<int64_t>{150, 150, 150}); }

int argmax(std::span<const double> a) {
    return static_cast<int>(std::max_element(a.begin(), a.end()) - a.begin()) + 1;
}

std::vector<uint64_t> seed_range(uint64_t n) {
    std::vector<uint64_t> s(n);
    std::iota(s.begin(), s.end(), 0);
    return s;
}

}  // namespace

TEST_CASE("config validation and names") {
    SimConfig c;
    CHECK_NOTHROW(c.validate());
    c.reliable_heads.clear();
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.speed_mean = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = {};
    c.step_jitter = -0.1;
    CHECK_THROWS_AS(c.validate(), Error);

    for (auto m : {NoiseModel::Uniform, NoiseModel::Diffuse, NoiseModel::Distractor, NoiseModel::Mixed}) {
        CHECK(parse_noise_model(to_string(m)) == m);
    }
    CHECK_THROWS_AS(parse_noise_model("pink"), Error);
    for (SteeringFlags f : {SteeringFlags{true, true}, SteeringFlags{false, true}, SteeringFlags{true, false},
                            SteeringFlags{false, false}}) {
        CHECK(parse_steering(steering_name(f)) == f);
    }
    CHECK(steering_name({false, false}) == "baseline");
    CHECK_THROWS_AS(parse_steering("half"), Error);
}

TEST_CASE("config JSON round trip") {
    SimConfig c;
    c.seed = 17;
    c.noise_model = NoiseModel::Diffuse;
    c.reliable_heads = {{0, 1}};
    c.msa.advance_prob = 0.2;
    c.steer.gain = 11.0;
    c.ablation.top_k = 3;
    nlohmann::json j = c;
    SimConfig back = j.get<SimConfig>();
    CHECK(nlohmann::json(back) == j);
    CHECK(back.reliable_heads == c.reliable_heads);

    SuiteConfig s;
    s.seeds = {3, 4};
    s.fixed_plans = {check_plan()};
    s.align_variants = {AlignerVariant::RandomSwitch};
    nlohmann::json js = s;
    CHECK(nlohmann::json(suite_from_json(js)) == js);
    CHECK_THROWS_AS(suite_from_json(nlohmann::json{{"align_variants", {"nope"}}}), Error);
}

TEST_CASE("noise-free reliable head peaks at the true coordinate") {
    SimConfig cfg = noise_free(SimConfig{});
    cfg.reliable_heads = {{0, 0}};
    const auto plan = check_plan();
    const auto stream = gen_stream(plan, cfg, 440);
    double prev = 0.0;
    for (const auto& st : stream) {
        const double xc = std::clamp(st.true_coordinate, 1.0, 45.0);
        const int peak = argmax(st.obs.slice(0, 0));
        REQUIRE(std::abs(peak - xc) <= 0.5 + 1e-9);
        REQUIRE(st.true_coordinate >= prev);
        REQUIRE(st.true_position == std::clamp(static_cast<int>(std::ceil(st.true_coordinate)), 1, 45));
        prev = st.true_coordinate;
        // the other heads are flat
        for (int l = 0; l < cfg.layers; ++l) {
            for (int h = 0; h < cfg.heads; ++h) {
                if (l == 0 && h == 0) continue;
                for (double v : st.obs.slice(l, h)) REQUIRE(std::abs(v - 1.0 / 45) < 1e-6);
            }
        }
        REQUIRE(st.obs.normalization_error() < 1e-12);
    }
    // no jitter: 10 tokens per text position
    CHECK(stream[149].true_coordinate == doctest::Approx(15.0));
}

TEST_CASE("distractor heads look behind the true path") {
    SimConfig cfg;
    cfg.seed = 0;
    cfg.noise_model = NoiseModel::Distractor;
    const auto plan = check_plan();
    const auto stream = gen_stream(plan, cfg, 300);
    int behind = 0;
    for (const auto& st : stream) {
        REQUIRE(st.obs.normalization_error() < 1e-9);
        for (int l = 0; l < cfg.layers; ++l) {
            for (int h = 0; h < cfg.heads; ++h) {
                if (std::find(cfg.reliable_heads.begin(), cfg.reliable_heads.end(), HeadId{l, h}) !=
                    cfg.reliable_heads.end()) {
                    continue;
                }
                if (argmax(st.obs.slice(l, h)) < st.true_position - 3) ++behind;
            }
        }
    }
    CHECK(behind > 0);
}

TEST_CASE("mixed model splits the noise heads") {
    SimConfig cfg;
    const auto plan = check_plan();
    SyntheticDecoder dec(plan, cfg);
    const auto& kinds = dec.head_kinds();
    CHECK(std::count(kinds.begin(), kinds.end(), 0) == 2);
    // 14 noise heads, a quarter of them distractors
    CHECK(std::count(kinds.begin(), kinds.end(), 3) == 4);
    CHECK(std::count(kinds.begin(), kinds.end(), 1) == 10);
}

TEST_CASE("ground truth path is nondecreasing and the decoder follows its conditioning") {
    SimConfig cfg;
    cfg.seed = 4;
    const auto plan = check_plan();
    SyntheticDecoder fast(plan, cfg), slow(plan, cfg);
    double prev = 0.0;
    for (int k = 0; k < 100; ++k) {
        fast.step(1, 60);
        slow.step(1, 300);
        REQUIRE(fast.coordinate() >= prev);
        prev = fast.coordinate();
    }
    CHECK(fast.coordinate() > slow.coordinate());
    CHECK(fast.emitted() == 100);
    CHECK(fast.segment_at(0.2) == 1);
    CHECK(fast.segment_at(15.0) == 1);
    CHECK(fast.segment_at(15.01) == 2);
    CHECK(fast.segment_at(60.0) == 3);
}

TEST_CASE("noise-free full stack is accurate") {
    const SimConfig cfg = noise_free(SimConfig{});
    const auto r = run_trace(check_plan(), cfg, AlignerVariant::Msa, {true, true});
    CHECK(r.boundary_mae < 0.02);
    CHECK(r.token_error_rate < 2.0);
    CHECK(r.trace.well_formed());
    CHECK(r.trace.steps.back().token == TokenClass::Eos);
    CHECK_FALSE(r.eos_in_nonfinal);
    CHECK(r.mask_violations == 0);
}

TEST_CASE("runs are deterministic") {
    SimConfig cfg;
    cfg.seed = 12;
    const auto plan = check_plan();
    const auto a = run_trace(plan, cfg, AlignerVariant::Msa, {true, true});
    const auto b = run_trace(plan, cfg, AlignerVariant::Msa, {true, true});
    CHECK(a.boundary_mae == b.boundary_mae);
    CHECK(a.token_error_rate == b.token_error_rate);
    CHECK(a.true_coordinate == b.true_coordinate);
    CHECK(a.aligned_position == b.aligned_position);
    REQUIRE(a.trace.steps.size() == b.trace.steps.size());
    for (size_t k = 0; k < a.trace.steps.size(); ++k) {
        CHECK(a.trace.steps[k].posterior == b.trace.steps[k].posterior);
        CHECK(a.trace.steps[k].effective_target == b.trace.steps[k].effective_target);
    }
}

TEST_CASE("trace invariants over seeds and steering sets") {
    for (uint64_t seed = 0; seed < 30; ++seed) {
        SimConfig cfg;
        cfg.seed = seed;
        Rng rng(seed);
        const auto plan = random_plan(PlanGenerator{}, cfg.speed_mean, rng);
        for (SteeringFlags f : {SteeringFlags{true, true}, SteeringFlags{false, true}, SteeringFlags{true, false},
                                SteeringFlags{false, false}}) {
            const auto r = run_trace(plan, cfg, AlignerVariant::Msa, f);
            REQUIRE_FALSE(r.eos_in_nonfinal);
            REQUIRE(r.trace.well_formed());
            REQUIRE(r.max_posterior_error < 1e-9);
            REQUIRE(r.mask_violations == 0);
            REQUIRE(r.boundary_mae >= 0.0);
            REQUIRE(std::isfinite(r.token_error_rate));
            int prev = 1;
            for (const auto& s : r.align_steps) {
                REQUIRE(s.segment >= prev);
                REQUIRE(s.segment <= prev + 1);
                prev = s.segment;
            }
            for (const auto& s : r.trace.steps) {
                if (s.token == TokenClass::Eos) REQUIRE(s.segment == plan.num_segments());
            }
            const int64_t total =
                std::accumulate(r.generated.begin(), r.generated.end(), int64_t{0});
            REQUIRE(total == static_cast<int64_t>(r.true_coordinate.size()));
        }
    }
}

TEST_CASE("steering beats the baseline at scaling 1.25") {
    double full = 0.0, base = 0.0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SimConfig cfg;
        cfg.seed = seed;
        cfg.duration_scale = 1.25;
        Rng rng(seed);
        const auto plan = random_plan(PlanGenerator{}, cfg.speed_mean, rng);
        full += run_trace(plan, cfg, AlignerVariant::Msa, {true, true}).token_error_rate;
        base += run_trace(plan, cfg, AlignerVariant::Msa, {false, false}).token_error_rate;
    }
    CHECK(base > full);
}

TEST_CASE("random switching aligns worse than the filter") {
    double msa = 0.0, rnd = 0.0;
    for (uint64_t seed = 0; seed < 20; ++seed) {
        SimConfig cfg;
        cfg.seed = seed;
        Rng rng(seed);
        const auto plan = random_plan(PlanGenerator{}, cfg.speed_mean, rng);
        msa += run_trace(plan, cfg, AlignerVariant::Msa, {true, true}).boundary_mae;
        rnd += run_trace(plan, cfg, AlignerVariant::RandomSwitch, {true, true}).boundary_mae;
    }
    CHECK(rnd > msa);
}

TEST_CASE("no termination without an EOS drive") {
    SimConfig cfg = noise_free(SimConfig{});
    cfg.eos_text_slope = 0.0;
    cfg.eos_drift = 0.0;
    try {
        run_trace(check_plan(), cfg, AlignerVariant::Msa, {false, false});
        FAIL("expected NoTermination");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NoTermination);
    }
}

TEST_CASE("summaries and paired comparison") {
    const auto s = summarize({1.0, 2.0, 3.0, 4.0});
    CHECK(s.mean == 2.5);
    CHECK(s.stddev == doctest::Approx(std::sqrt(5.0 / 3.0)));
    CHECK(summarize({}).n == 0);

    // differences 1, 2, 3, 4, 5: mean 3, sd sqrt(2.5), t(0.975; 4) = 2.776445
    const std::vector<double> a{2, 4, 6, 8, 10}, b{1, 2, 3, 4, 5};
    const auto pc = paired_compare(a, b);
    const double half = 2.776445105 * std::sqrt(2.5) / std::sqrt(5.0);
    CHECK(pc.mean_diff == doctest::Approx(3.0));
    CHECK(pc.ci_low == doctest::Approx(3.0 - half).epsilon(1e-8));
    CHECK(pc.ci_high == doctest::Approx(3.0 + half).epsilon(1e-8));
    CHECK_FALSE(pc.a_less());
    CHECK(paired_compare(b, a).a_less());

    // t(0.975; 99) = 1.9842170
    std::vector<double> x(100), y(100, 0.0);
    for (int k = 0; k < 100; ++k) x[k] = (k % 2 == 0) ? 1.0 : -1.0;
    const auto p99 = paired_compare(x, y);
    const double sd = std::sqrt(100.0 / 99.0);
    CHECK(p99.ci_high == doctest::Approx(1.9842169515 * sd / 10.0).epsilon(1e-8));

    CHECK_THROWS_AS(paired_compare({1.0}, {2.0}), Error);
    CHECK_THROWS_AS(paired_compare({1.0, 2.0}, {2.0}), Error);
}

TEST_CASE("suite tables and determinism") {
    SuiteConfig cfg;
    cfg.seeds = seed_range(3);
    cfg.scalings = {1.0};
    cfg.steering_sets = {{true, true}, {false, false}};
    cfg.threads = 2;
    const auto a = run_suite(cfg);
    cfg.threads = 1;
    const auto b = run_suite(cfg);
    CHECK(align_table_csv(a) == align_table_csv(b));
    CHECK(duration_table_csv(a) == duration_table_csv(b));
    CHECK(a.traces == 3 * 4 + 3 * 2);
    CHECK(a.align.size() == 4);
    CHECK(a.duration.size() == 2);
    CHECK(align_table_csv(a).rfind("variant,mae_mean,mae_std,n\nmsa,", 0) == 0);
    CHECK(duration_table_csv(a).rfind("steering,scaling,error_mean,error_std,n\nfull,1,", 0) == 0);
    const auto j = suite_to_json(a);
    CHECK(j["traces"] == a.traces);
    CHECK(j["alignment"].size() == 4);

    // per-seed values equal standalone runs
    SimConfig sim = cfg.sim;
    sim.seed = 1;
    CHECK(a.align[0].per_seed_mae[1] == run_trace(suite_plan(cfg, 1), sim, AlignerVariant::Msa, {true, true}).boundary_mae);

    cfg.seeds.clear();
    CHECK_THROWS_AS(run_suite(cfg), Error);
}

TEST_CASE("random plans respect the generator") {
    PlanGenerator g;
    Rng rng(1);
    for (int k = 0; k < 200; ++k) {
        const auto p = random_plan(g, 10.0, rng);
        REQUIRE(p.num_segments() >= g.segments_min);
        REQUIRE(p.num_segments() <= g.segments_max);
        REQUIRE(p.text_len() >= g.text_len_min);
        REQUIRE(p.text_len() <= g.text_len_max);
        for (int m = 1; m <= p.num_segments(); ++m) {
            REQUIRE(p.span(m).length() >= g.min_segment_len);
            REQUIRE(p.budget(m) == 10 * p.span(m).length());
        }
    }
}

TEST_CASE("alignment paths export") {
    const auto csv = alignment_paths_csv(check_plan(), noise_free(SimConfig{}), {AlignerVariant::Msa});
    CHECK(csv.rfind("variant,step,true_coordinate,aligned_position,segment\nmsa,1,", 0) == 0);
}
