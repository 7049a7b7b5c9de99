// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "segctl/mask.hpp"
#include "segctl/rng.hpp"

using namespace segctl;

namespace {

SegmentPlan plan_with_segments(Rng& rng, int M, int Lc, int T) {
    std::vector<int> cut;
    for (int t = 1; t < T; ++t) cut.push_back(t);
    for (size_t k = cut.size(); k > 1; --k) std::swap(cut[k - 1], cut[rng.below(k)]);
    cut.resize(M - 1);
    std::sort(cut.begin(), cut.end());
    return build_plan(T, cut, Lc);
}

bool is_causal_triangle(const BiasMask& m) {
    for (int u = 0; u < m.size(); ++u) {
        for (int v = 0; v < m.size(); ++v) {
            if (m.visible(u, v) != (v <= u)) return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("single segment degenerates to a causal mask") {
    const auto plan = build_plan(2, {}, 1);
    const auto m = build_mask(plan, {}, 1);
    CHECK(m.size() == 4);
    CHECK(is_causal_triangle(m));
    CHECK(visible_set(m, 1) == std::vector<int>{0, 1});
    CHECK(visible_set(m, 0) == std::vector<int>{0});
}

TEST_CASE("text rows see their own condition block") {
    const auto plan = build_plan(4, {2}, 1);
    const std::vector<int> seg_s{1};
    const auto m = build_mask(plan, seg_s, 2);
    const int row = m.layout().text_row(3);
    CHECK_FALSE(m.visible(row, 0));
    CHECK(m.visible(row, 1));
    CHECK(visible_set(m, m.layout().text_row(1)) == std::vector<int>{0, 2});
}

TEST_CASE("condition blocks are isolated") {
    const auto plan = build_plan(6, {2, 4}, 2);
    const auto m = build_mask(plan, {}, 1);
    for (int row = 2; row < 4; ++row) {
        CHECK(visible_set(m, row) == std::vector<int>{2, 3});
    }
    CHECK(visible_set(m, 0) == std::vector<int>{0, 1});
}

TEST_CASE("last semantic row on a three segment toy") {
    // M=3, L_C=1, T=6, b=[2,4]; step 3 with seg_s=[1,2] and the current token in
    // segment 3. Columns 0..2 are conditions, 3..8 text, 9..11 semantic. The row
    // keeps its causal prefix and drops conditions 0 and 1.
    const auto plan = build_plan(6, {2, 4}, 1);
    const std::vector<int> seg_s{1, 2};
    const auto m = build_mask(plan, seg_s, 3, 3);
    CHECK(m.size() == 12);
    CHECK(visible_set(m, 11) == std::vector<int>{2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
    CHECK(visible_set(m, 10) == std::vector<int>{1, 3, 4, 5, 6, 7, 8, 9, 10});
    CHECK(visible_set(m, 9) == std::vector<int>{0, 3, 4, 5, 6, 7, 8, 9});
    CHECK(visible_set(m, 7) == std::vector<int>{2, 3, 4, 5, 6, 7});
}

TEST_CASE("active defaults to the last generated segment") {
    const auto plan = build_plan(6, {2, 4}, 1);
    const std::vector<int> seg_s{1, 2};
    CHECK(build_mask(plan, seg_s, 3) == build_mask(plan, seg_s, 3, 2));
    CHECK(build_mask(plan, {}, 1) == build_mask(plan, {}, 1, 1));
}

TEST_CASE("segment mismatches are rejected") {
    const auto plan = build_plan(6, {2, 4}, 1);
    auto code = [&](std::vector<int> s, int step, std::optional<int> active = std::nullopt) {
        try {
            build_mask(plan, s, step, active);
        } catch (const Error& e) {
            return e.code();
        }
        return ErrorCode::InvalidConfig;
    };
    CHECK(code({1}, 3) == ErrorCode::SegMismatch);
    CHECK(code({2, 1}, 3) == ErrorCode::SegMismatch);
    CHECK(code({1, 4}, 3) == ErrorCode::SegMismatch);
    CHECK(code({0, 1}, 3) == ErrorCode::SegMismatch);
    CHECK(code({2, 2}, 3, 1) == ErrorCode::SegMismatch);
    CHECK(code({}, 0) == ErrorCode::OutOfRange);

    const auto m = build_mask(plan, {}, 1);
    CHECK_THROWS_AS(visible_set(m, m.size()), Error);
    CHECK_THROWS_AS(visible_set(m, -1), Error);
}

TEST_CASE("exhaustive oracle equivalence on small plans") {
    Rng rng(3);
    int checked = 0;
    for (int M = 1; M <= 4; ++M) {
        for (int Lc = 1; Lc <= 2; ++Lc) {
            for (int T = M; T <= 8; ++T) {
                const auto plan = plan_with_segments(rng, M, Lc, T);
                for (int i = 1; i <= 5; ++i) {
                    const auto seg_s = oracle::random_seg_s(rng, M, i);
                    const std::vector<int> prev(seg_s.begin(), seg_s.end() - 1);
                    const int active = seg_s.back();
                    const auto m = build_mask(plan, prev, i, active);
                    REQUIRE(oracle::mask_matches(m, plan, prev, active, i));
                    ++checked;
                }
            }
        }
    }
    CHECK(checked > 200);
}

TEST_CASE("structural invariants on random plans") {
    Rng rng(17);
    for (int trial = 0; trial < 300; ++trial) {
        const int M = 1 + static_cast<int>(rng.below(5));
        const int Lc = 1 + static_cast<int>(rng.below(3));
        const int T = M + static_cast<int>(rng.below(12));
        const int i = 1 + static_cast<int>(rng.below(10));
        const auto plan = plan_with_segments(rng, M, Lc, T);
        const auto seg_s = oracle::random_seg_s(rng, M, i);
        const std::vector<int> prev(seg_s.begin(), seg_s.end() - 1);
        const auto m = build_mask(plan, prev, i, seg_s.back());
        const auto& lay = m.layout();

        for (int u = lay.text_begin(); u < lay.size(); ++u) {
            // causality and a visible diagonal
            REQUIRE(m.visible(u, u));
            for (int v = u + 1; v < lay.size(); ++v) REQUIRE_FALSE(m.visible(u, v));
            // condition locality
            const int seg = lay.in_text(u) ? segment_of_text(plan, u - lay.text_begin() + 1)
                                           : seg_s[u - lay.sem_begin()];
            for (int v = 0; v < lay.cond_size(); ++v) {
                REQUIRE(m.visible(u, v) == (v / Lc + 1 == seg));
            }
        }
        // condition isolation
        for (int u = 0; u < lay.cond_size(); ++u) {
            for (int v = 0; v < lay.cond_size(); ++v) {
                if (m.visible(u, v)) REQUIRE(v / Lc == u / Lc);
            }
        }
    }
}

TEST_CASE("masks grow monotonically with the step") {
    Rng rng(23);
    for (int trial = 0; trial < 200; ++trial) {
        const int M = 1 + static_cast<int>(rng.below(4));
        const auto plan = plan_with_segments(rng, M, 1 + static_cast<int>(rng.below(2)), M + 5);
        const int n = 2 + static_cast<int>(rng.below(8));
        const auto seg_s = oracle::random_seg_s(rng, M, n);
        for (int i = 1; i < n; ++i) {
            const std::span<const int> all(seg_s);
            const auto small = build_mask(plan, all.first(i - 1), i, seg_s[i - 1]);
            const auto big = build_mask(plan, all.first(i), i + 1, seg_s[i]);
            for (int u = 0; u < small.size(); ++u) {
                for (int v = 0; v < small.size(); ++v) REQUIRE(small.at(u, v) == big.at(u, v));
            }
        }
    }
}

TEST_CASE("current_semantic_row matches the last mask row") {
    Rng rng(29);
    for (int trial = 0; trial < 100; ++trial) {
        const int M = 1 + static_cast<int>(rng.below(4));
        const auto plan = plan_with_segments(rng, M, 2, M + 4);
        const int i = 1 + static_cast<int>(rng.below(6));
        const auto seg_s = oracle::random_seg_s(rng, M, i);
        const std::span<const int> prev(seg_s.data(), i - 1);
        const auto m = build_mask(plan, prev, i, seg_s.back());
        const auto row = current_semantic_row(plan, prev, i, seg_s.back());
        REQUIRE(static_cast<int>(row.size()) == m.size());
        for (int v = 0; v < m.size(); ++v) REQUIRE(row[v] == m.at(m.size() - 1, v));
    }
}

TEST_CASE("bias rendering") {
    const auto m = build_mask(build_plan(2, {}, 1), {}, 1);
    CHECK(m.bias(1, 0) == 0.0);
    CHECK(std::isinf(m.bias(0, 1)));
    CHECK(m.bias(0, 1) < 0.0);
}

TEST_CASE("dumps show one isolated diagonal block per condition") {
    for (int M = 2; M <= 5; ++M) {
        std::vector<int> b;
        for (int r = 1; r < M; ++r) b.push_back(2 * r);
        const auto plan = build_plan(2 * M, b, 2);
        const auto m = build_mask(plan, {}, 1);
        const std::string txt = dump_mask_text(m);
        std::istringstream in(txt);
        std::vector<std::string> lines;
        for (std::string line; std::getline(in, line);) lines.push_back(line);
        REQUIRE(static_cast<int>(lines.size()) == m.size());
        const int cond = 2 * M;
        int blocks = 0;
        for (int row = 0; row < cond; row += 2) {
            std::string expected(cond, '.');
            expected[row] = expected[row + 1] = '#';
            CHECK(lines[row].substr(0, cond) == expected);
            CHECK(lines[row + 1].substr(0, cond) == expected);
            ++blocks;
        }
        CHECK(blocks == M);
    }

    const auto single = build_mask(build_plan(3, {}, 1), std::vector<int>{1}, 2);
    CHECK(dump_mask_text(single) == "#.....\n##....\n###...\n####..\n#####.\n######\n");
    CHECK(dump_mask_csv(build_mask(build_plan(1, {}, 1), {}, 1)) == "1,0,0\n1,1,0\n1,1,1\n");
}

TEST_CASE("write_mask_dump file names") {
    const auto dir = std::filesystem::temp_directory_path() / "segctl_test_mask_dump";
    std::filesystem::remove_all(dir);
    const auto m = build_mask(build_plan(4, {2}, 1), std::vector<int>{1, 2}, 3);
    const auto paths = write_mask_dump(m, 3, dir);
    REQUIRE(paths.size() == 2);
    CHECK(paths[0].filename() == "mask_M2_i3.txt");
    CHECK(paths[1].filename() == "mask_M2_i3.csv");
    std::ifstream in(paths[0]);
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == dump_mask_text(m));
    std::filesystem::remove_all(dir);
}
