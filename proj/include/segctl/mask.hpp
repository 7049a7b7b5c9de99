// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "segctl/core.hpp"

namespace segctl {

enum class MaskEntry : uint8_t { Masked = 0, Visible = 1 };

// Token order is [C_1 .. C_M | x_1 .. x_T | s_1 .. s_i]; all offsets 0-based.
struct MaskLayout {
    int num_segments = 1;
    int cond_block_len = 1;
    int text_len = 0;
    int num_semantic = 0;

    int cond_size() const { return num_segments * cond_block_len; }
    int text_begin() const { return cond_size(); }
    int sem_begin() const { return cond_size() + text_len; }
    int size() const { return sem_begin() + num_semantic; }

    int cond_block_begin(int m) const { return (m - 1) * cond_block_len; }
    int text_row(int t) const { return text_begin() + t - 1; }
    int sem_row(int r) const { return sem_begin() + r - 1; }

    bool in_cond(int idx) const { return idx < cond_size(); }
    bool in_text(int idx) const { return idx >= text_begin() && idx < sem_begin(); }
    bool in_sem(int idx) const { return idx >= sem_begin() && idx < size(); }

    bool operator==(const MaskLayout&) const = default;
};

// q x q additive-bias mask with symbolic entries; bias() renders 0 / -inf.
class BiasMask {
public:
    BiasMask() = default;
    explicit BiasMask(const MaskLayout& layout);

    int size() const { return layout_.size(); }
    const MaskLayout& layout() const { return layout_; }

    MaskEntry at(int row, int col) const { return entries_[index(row, col)]; }
    bool visible(int row, int col) const { return at(row, col) == MaskEntry::Visible; }
    void set(int row, int col, MaskEntry e) { entries_[index(row, col)] = e; }
    void fill_row(int row, int col_begin, int col_end, MaskEntry e);

    double bias(int row, int col) const;

    bool operator==(const BiasMask&) const = default;

private:
    size_t index(int row, int col) const { return static_cast<size_t>(row) * layout_.size() + col; }

    MaskLayout layout_;
    std::vector<MaskEntry> entries_;
};

// Mask for decoding step `step` (1-based). seg_s holds the segment of each of
// the step-1 tokens already generated; the step-th row uses `active`, which
// defaults to the last entry of seg_s (or 1 at the first step).
BiasMask build_mask(const SegmentPlan& plan, std::span<const int> seg_s, int step,
                    std::optional<int> active = std::nullopt);

// Row of the current semantic token only, identical to the last row of
// build_mask() for the same arguments. Used by the decode loop.
std::vector<MaskEntry> current_semantic_row(const SegmentPlan& plan, std::span<const int> seg_s, int step,
                                            int active);

std::vector<int> visible_set(const BiasMask& mask, int row);

// '#' visible, '.' masked, one row per line.
std::string dump_mask_text(const BiasMask& mask);
// 1 visible, 0 masked, comma separated, one row per line.
std::string dump_mask_csv(const BiasMask& mask);

// Writes mask_M{M}_i{i}.txt and .csv into dir; returns the paths written.
std::vector<std::filesystem::path> write_mask_dump(const BiasMask& mask, int step,
                                                   const std::filesystem::path& dir);

}  // namespace segctl
