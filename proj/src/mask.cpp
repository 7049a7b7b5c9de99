// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/mask.hpp"

#include <fstream>
#include <limits>
#include <sstream>

namespace segctl {

BiasMask::BiasMask(const MaskLayout& layout)
    : layout_(layout), entries_(static_cast<size_t>(layout.size()) * layout.size(), MaskEntry::Masked) {}

void BiasMask::fill_row(int row, int col_begin, int col_end, MaskEntry e) {
    for (int c = col_begin; c < col_end; ++c) {
        set(row, c, e);
    }
}

double BiasMask::bias(int row, int col) const {
    return visible(row, col) ? 0.0 : -std::numeric_limits<double>::infinity();
}

namespace {

int check_segments(const SegmentPlan& plan, std::span<const int> seg_s, int step, std::optional<int> active) {
    if (step < 1) {
        throw Error(ErrorCode::OutOfRange, "step must be >= 1");
    }
    if (static_cast<int>(seg_s.size()) != step - 1) {
        throw Error(ErrorCode::SegMismatch, "seg_s must hold step-1 = " + std::to_string(step - 1) +
                                                " entries, got " + std::to_string(seg_s.size()));
    }
    const int M = plan.num_segments();
    int prev = 1;
    for (int s : seg_s) {
        if (s < 1 || s > M || s < prev) {
            throw Error(ErrorCode::SegMismatch, "seg_s entries must be nondecreasing within 1..M");
        }
        prev = s;
    }
    const int current = active.value_or(prev);
    if (current < prev || current > M) {
        throw Error(ErrorCode::SegMismatch, "active segment out of order");
    }
    return current;
}

MaskLayout layout_for(const SegmentPlan& plan, int step) {
    return {plan.num_segments(), plan.cond_block_len(), plan.text_len(), step};
}

}  // namespace

BiasMask build_mask(const SegmentPlan& plan, std::span<const int> seg_s, int step, std::optional<int> active) {
    const int current = check_segments(plan, seg_s, step, active);
    const MaskLayout lay = layout_for(plan, step);
    const int q = lay.size();
    const int Lc = lay.cond_block_len;
    BiasMask mask(lay);

    // 1.1 causal
    for (int u = 0; u < q; ++u) {
        mask.fill_row(u, 0, u + 1, MaskEntry::Visible);
    }

    // 1.2 text rows see only their own segment's condition block
    for (int t = 1; t <= lay.text_len; ++t) {
        const int row = lay.text_row(t);
        const int m = segment_of_text(plan, t);
        mask.fill_row(row, 0, lay.cond_size(), MaskEntry::Masked);
        mask.fill_row(row, lay.cond_block_begin(m), lay.cond_block_begin(m) + Lc, MaskEntry::Visible);
    }

    // 1.3 semantic rows likewise, keyed by seg_s (current row by the active segment)
    for (int r = 1; r <= step; ++r) {
        const int row = lay.sem_row(r);
        const int m = r < step ? seg_s[r - 1] : current;
        mask.fill_row(row, 0, lay.cond_size(), MaskEntry::Masked);
        mask.fill_row(row, lay.cond_block_begin(m), lay.cond_block_begin(m) + Lc, MaskEntry::Visible);
    }

    // 1.4 condition blocks isolated from each other
    for (int u = 1; u <= lay.num_segments; ++u) {
        const int begin = lay.cond_block_begin(u);
        for (int row = begin; row < begin + Lc; ++row) {
            mask.fill_row(row, 0, lay.cond_size(), MaskEntry::Masked);
            mask.fill_row(row, begin, begin + Lc, MaskEntry::Visible);
        }
    }
    return mask;
}

std::vector<MaskEntry> current_semantic_row(const SegmentPlan& plan, std::span<const int> seg_s, int step,
                                            int active) {
    check_segments(plan, seg_s, step, active);
    const MaskLayout lay = layout_for(plan, step);
    std::vector<MaskEntry> row(lay.size(), MaskEntry::Visible);
    for (int c = 0; c < lay.cond_size(); ++c) {
        row[c] = MaskEntry::Masked;
    }
    for (int c = lay.cond_block_begin(active); c < lay.cond_block_begin(active) + lay.cond_block_len; ++c) {
        row[c] = MaskEntry::Visible;
    }
    return row;
}

std::vector<int> visible_set(const BiasMask& mask, int row) {
    if (row < 0 || row >= mask.size()) {
        throw Error(ErrorCode::OutOfRange, "row " + std::to_string(row));
    }
    std::vector<int> cols;
    for (int c = 0; c < mask.size(); ++c) {
        if (mask.visible(row, c)) {
            cols.push_back(c);
        }
    }
    return cols;
}

std::string dump_mask_text(const BiasMask& mask) {
    std::string out;
    out.reserve(static_cast<size_t>(mask.size()) * (mask.size() + 1));
    for (int r = 0; r < mask.size(); ++r) {
        for (int c = 0; c < mask.size(); ++c) {
            out.push_back(mask.visible(r, c) ? '#' : '.');
        }
        out.push_back('\n');
    }
    return out;
}

std::string dump_mask_csv(const BiasMask& mask) {
    std::string out;
    for (int r = 0; r < mask.size(); ++r) {
        for (int c = 0; c < mask.size(); ++c) {
            if (c > 0) {
                out.push_back(',');
            }
            out.push_back(mask.visible(r, c) ? '1' : '0');
        }
        out.push_back('\n');
    }
    return out;
}

std::vector<std::filesystem::path> write_mask_dump(const BiasMask& mask, int step,
                                                   const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string stem =
        "mask_M" + std::to_string(mask.layout().num_segments) + "_i" + std::to_string(step);
    const auto txt = dir / (stem + ".txt");
    const auto csv = dir / (stem + ".csv");
    std::ofstream(txt, std::ios::binary) << dump_mask_text(mask);
    std::ofstream(csv, std::ios::binary) << dump_mask_csv(mask);
    return {txt, csv};
}

}  // namespace segctl
