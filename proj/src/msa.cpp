// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/msa.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace segctl {

void MsaConfig::validate() const {
    if (!(advance_prob > 0.0 && advance_prob < 1.0)) {
        throw Error(ErrorCode::InvalidConfig, "advance_prob must lie in (0, 1)");
    }
    if (!(smoothing_sigma > 0.0) || !(log_floor > 0.0) || kernel_radius < 1) {
        throw Error(ErrorCode::InvalidConfig, "sigma and log_floor must be > 0, kernel_radius >= 1");
    }
}

std::vector<double> TwoTapTransition::apply(std::span<const double> posterior) const {
    const size_t T = posterior.size();
    std::vector<double> prior(T, 0.0);
    for (size_t t = 0; t < T; ++t) {
        prior[t] += (1.0 - p_) * posterior[t];
        if (t + 1 < T) {
            prior[t + 1] += p_ * posterior[t];
        } else {
            prior[t] += p_ * posterior[t];
        }
    }
    return prior;
}

AlignmentBelief init_belief(int text_len) {
    if (text_len < 1) {
        throw Error(ErrorCode::EmptyText, "alignment needs at least one text position");
    }
    AlignmentBelief b;
    b.posterior.assign(text_len, 0.0);
    b.posterior[0] = 1.0;
    return b;
}

AlignmentBelief predict(const AlignmentBelief& belief, const TransitionOperator& op) {
    AlignmentBelief out = belief;
    out.prior = op.apply(belief.posterior);
    return out;
}

AlignmentBelief predict(const AlignmentBelief& belief, const MsaConfig& cfg) {
    return predict(belief, TwoTapTransition(cfg.advance_prob));
}

HeadChoice select_head(std::span<const double> prior, const AttentionObservation& obs, const MsaConfig& cfg) {
    if (static_cast<int>(prior.size()) != obs.text_len) {
        throw Error(ErrorCode::SegMismatch, "prior and observation lengths differ");
    }
    HeadChoice best{0, 0, -std::numeric_limits<double>::infinity()};
    for (int l = 0; l < obs.layers; ++l) {
        for (int h = 0; h < obs.heads; ++h) {
            const auto a = obs.slice(l, h);
            double score = 0.0;
            for (size_t t = 0; t < prior.size(); ++t) {
                if (prior[t] != 0.0) {
                    score += prior[t] * std::log(std::max(a[t], cfg.log_floor));
                }
            }
            if (score > best.score) {
                best = {l, h, score};
            }
        }
    }
    return best;
}

std::vector<double> smooth(std::span<const double> values, const MsaConfig& cfg) {
    const int T = static_cast<int>(values.size());
    const int R = cfg.kernel_radius;
    std::vector<double> kernel(2 * R + 1);
    for (int k = -R; k <= R; ++k) {
        kernel[k + R] = std::exp(-static_cast<double>(k * k) / (2.0 * cfg.smoothing_sigma * cfg.smoothing_sigma));
    }
    std::vector<double> out(T, 0.0);
    for (int t = 0; t < T; ++t) {
        double acc = 0.0;
        double norm = 0.0;
        for (int k = -R; k <= R; ++k) {
            const int s = t + k;
            if (s >= 0 && s < T) {
                acc += kernel[k + R] * values[s];
                norm += kernel[k + R];
            }
        }
        out[t] = acc / norm;
    }
    const double total = std::accumulate(out.begin(), out.end(), 0.0);
    if (total > 0.0) {
        for (double& v : out) {
            v /= total;
        }
    }
    return out;
}

AlignmentBelief fuse(const AlignmentBelief& belief, std::span<const double> observation) {
    AlignmentBelief out = belief;
    const size_t T = belief.prior.size();
    std::vector<double> post(T);
    double z = 0.0;
    for (size_t t = 0; t < T; ++t) {
        post[t] = belief.prior[t] * observation[t];
        z += post[t];
    }
    if (z < 1e-12) {
        out.posterior = belief.prior;
        return out;
    }
    for (double& v : post) {
        v /= z;
    }
    out.posterior = std::move(post);
    return out;
}

AlignmentBelief update(const AlignmentBelief& belief, const AttentionObservation& obs, const HeadChoice& choice,
                       const MsaConfig& cfg, bool smoothing) {
    const auto a = obs.slice(choice.layer, choice.head);
    if (!smoothing) {
        return fuse(belief, a);
    }
    const auto smoothed = smooth(a, cfg);
    return fuse(belief, smoothed);
}

double expected_position(std::span<const double> posterior) {
    double e = 0.0;
    for (size_t t = 0; t < posterior.size(); ++t) {
        e += static_cast<double>(t + 1) * posterior[t];
    }
    return e;
}

int maybe_switch(int segment, std::span<const double> posterior, const SegmentPlan& plan) {
    if (segment < 1 || segment > plan.num_segments()) {
        throw Error(ErrorCode::OutOfRange, "segment " + std::to_string(segment));
    }
    if (segment < plan.num_segments() && expected_position(posterior) > plan.boundary(segment)) {
        return segment + 1;
    }
    return segment;
}

// ---------------------------------------------------------------------------

const char* to_string(AlignerVariant v) {
    switch (v) {
        case AlignerVariant::Msa: return "msa";
        case AlignerVariant::MaxGreedy: return "max_greedy";
        case AlignerVariant::TopkGreedy: return "topk_greedy";
        case AlignerVariant::MaxheadMsa: return "maxhead_msa";
        case AlignerVariant::RandomSwitch: return "random_switch";
    }
    return "unknown";
}

AlignerVariant parse_variant(const std::string& name) {
    for (auto v : {AlignerVariant::Msa, AlignerVariant::MaxGreedy, AlignerVariant::TopkGreedy,
                   AlignerVariant::MaxheadMsa, AlignerVariant::RandomSwitch}) {
        if (name == to_string(v)) {
            return v;
        }
    }
    throw Error(ErrorCode::BadVariant, "unknown aligner variant '" + name + "'");
}

double mean_attention_score(const AttentionObservation& obs, int layer, int head) {
    const auto a = obs.slice(layer, head);
    const double m = obs.mass(layer, head);
    double sum = 0.0;
    for (double v : a) {
        sum += m * v;
    }
    return sum / static_cast<double>(obs.text_len);
}

namespace {

struct ScoredHead {
    int layer;
    int head;
    double score;
};

std::vector<ScoredHead> heads_by_mean_attention(const AttentionObservation& obs) {
    std::vector<ScoredHead> heads;
    for (int l = 0; l < obs.layers; ++l) {
        for (int h = 0; h < obs.heads; ++h) {
            heads.push_back({l, h, mean_attention_score(obs, l, h)});
        }
    }
    // stable: equal scores keep (layer, head) order
    std::stable_sort(heads.begin(), heads.end(),
                     [](const ScoredHead& a, const ScoredHead& b) { return a.score > b.score; });
    return heads;
}

std::vector<double> one_hot(int text_len, int pos) {
    std::vector<double> v(text_len, 0.0);
    v[pos - 1] = 1.0;
    return v;
}

// argmax over {k, k+1} of the observation, ties stay at k.
int greedy_advance(int k, std::span<const double> a) {
    const int T = static_cast<int>(a.size());
    if (k < T && a[k] > a[k - 1]) {
        return k + 1;
    }
    return k;
}

void check_state(AlignerVariant variant, const AlignerState& state, const AttentionObservation& obs) {
    if (state.variant != variant) {
        throw Error(ErrorCode::BadVariant, std::string("state belongs to ") + to_string(state.variant));
    }
    if (static_cast<int>(state.belief.posterior.size()) != obs.text_len) {
        throw Error(ErrorCode::SegMismatch, "belief and observation lengths differ");
    }
}

}  // namespace

AlignerState init_aligner(AlignerVariant variant, int text_len) {
    AlignerState s;
    s.variant = variant;
    s.belief = init_belief(text_len);
    s.hard_index = 1;
    s.segment = 1;
    return s;
}

AlignStepInfo align_step_ablation(AlignerVariant variant, AlignerState& state, const AttentionObservation& obs,
                                  const SegmentPlan& plan, const MsaConfig& cfg, const AblationConfig& ablation,
                                  Rng& rng) {
    check_state(variant, state, obs);
    AlignStepInfo info;
    info.step = ++state.step;
    const int T = obs.text_len;

    switch (variant) {
        case AlignerVariant::Msa: {
            state.belief = predict(state.belief, cfg);
            info.head = select_head(state.belief.prior, obs, cfg);
            state.belief = update(state.belief, obs, info.head, cfg, true);
            break;
        }
        case AlignerVariant::MaxheadMsa: {
            state.belief = predict(state.belief, cfg);
            const auto top = heads_by_mean_attention(obs).front();
            info.head = {top.layer, top.head, top.score};
            state.belief = update(state.belief, obs, info.head, cfg, false);
            break;
        }
        case AlignerVariant::MaxGreedy: {
            state.belief.prior = state.belief.posterior;
            const auto top = heads_by_mean_attention(obs).front();
            info.head = {top.layer, top.head, top.score};
            state.hard_index = greedy_advance(state.hard_index, obs.slice(top.layer, top.head));
            state.belief.posterior = one_hot(T, state.hard_index);
            break;
        }
        case AlignerVariant::TopkGreedy: {
            state.belief.prior = state.belief.posterior;
            const auto heads = heads_by_mean_attention(obs);
            const size_t k = std::min<size_t>(std::max(ablation.top_k, 1), heads.size());
            std::vector<double> avg(T, 0.0);
            double wsum = 0.0;
            for (size_t j = 0; j < k; ++j) {
                const auto a = obs.slice(heads[j].layer, heads[j].head);
                for (int t = 0; t < T; ++t) {
                    avg[t] += heads[j].score * a[t];
                }
                wsum += heads[j].score;
            }
            if (wsum > 0.0) {
                for (double& v : avg) {
                    v /= wsum;
                }
            }
            info.head = {heads.front().layer, heads.front().head, heads.front().score};
            state.hard_index = greedy_advance(state.hard_index, avg);
            state.belief.posterior = one_hot(T, state.hard_index);
            break;
        }
        case AlignerVariant::RandomSwitch: {
            double p = ablation.switch_prob;
            if (p < 0.0) {
                const auto total = plan.has_budgets() ? cumulative_budgets(plan).back() : 4 * int64_t{T};
                p = static_cast<double>(plan.num_segments() - 1) / static_cast<double>(std::max<int64_t>(total, 1));
            }
            // the draw is taken on every step so the stream does not depend on the segment
            const bool fire = rng.bernoulli(p);
            if (fire && state.segment < plan.num_segments()) {
                ++state.segment;
            }
            state.hard_index = plan.span(state.segment).first;
            state.belief.prior = state.belief.posterior;
            state.belief.posterior = one_hot(T, state.hard_index);
            info.prior = state.belief.prior;
            info.posterior = state.belief.posterior;
            info.expected_pos = expected_position(state.belief.posterior);
            info.segment = state.segment;
            return info;
        }
    }

    state.segment = maybe_switch(state.segment, state.belief.posterior, plan);
    info.prior = state.belief.prior;
    info.posterior = state.belief.posterior;
    info.expected_pos = expected_position(state.belief.posterior);
    info.segment = state.segment;
    return info;
}

nlohmann::json to_json(const AlignStepInfo& info) {
    return nlohmann::json{{"i", info.step},
                          {"prior", info.prior},
                          {"posterior", info.posterior},
                          {"head", {info.head.layer, info.head.head}},
                          {"expected_pos", info.expected_pos},
                          {"segment", info.segment}};
}

}  // namespace segctl
