// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "segctl/core.hpp"

namespace segctl::medqc {

enum class Language { EN, ZH };
enum class Category { VividDescriptive, EmotionalDialogue, ObservationalPhrase };

const char* to_string(Language l);
const char* to_string(Category c);
std::optional<Language> parse_language(const std::string& s);
std::optional<Category> parse_category(const std::string& s);

const std::vector<std::string>& emotion_vocabulary();

struct SegmentEntry {
    std::string text;  // lines_seg
    std::string emotion;
    std::string description;
    double seconds = 0.0;
};

struct DatasetRecord {
    std::string id;
    std::string text;  // original_text
    Language language = Language::EN;
    Category category = Category::VividDescriptive;
    std::vector<SegmentEntry> segments;
    // Declared emotion sequence; empty when the record does not carry one.
    std::vector<std::string> emotion_sequence;

    std::vector<std::string> emotions() const;
    double total_seconds() const;
};

// Accepts a number or a string such as "2.5", "2.5s", "2.5 seconds".
std::optional<double> parse_seconds(const nlohmann::json& v);

// Throws ParseError when a required field is missing or has the wrong type.
DatasetRecord record_from_json(const nlohmann::json& j);
nlohmann::json record_to_json(const DatasetRecord& r);

struct Window {
    double lo = 0.0;
    double hi = 0.0;
    bool contains(double v) const { return v >= lo && v <= hi; }
};

struct QcConfig {
    Window en_text_words{15, 25};
    Window zh_text_chars{15, 25};
    Window en_description_words{5, 25};
    Window zh_description_chars{5, 30};
    Window segment_count{2, 3};
    Window segment_seconds{0.3, 8.0};
    Window total_seconds{5, 13};
    Window seconds_per_word{0.18, 0.30};  // warning only
    double overall_threshold = 0.85;
    double opening_threshold = 0.5;
    int opening_tokens = 5;
};

// Rule ids, in the order they are checked.
inline constexpr const char* kRuleJsonComplete = "json_complete";
inline constexpr const char* kRuleTextLength = "text_length";
inline constexpr const char* kRuleSegmentCount = "segment_count";
inline constexpr const char* kRuleEmotionVocab = "emotion_vocab";
inline constexpr const char* kRuleSegmentOrder = "segment_order";
inline constexpr const char* kRuleReconstruction = "reconstruction";
inline constexpr const char* kRuleDescriptionLength = "description_length";
inline constexpr const char* kRuleSegDuration = "seg_duration";
inline constexpr const char* kRuleTotalDuration = "total_duration";
inline constexpr const char* kRuleWordRate = "word_rate";

struct Violation {
    std::string rule;
    std::string detail;
};

struct ValidationReport {
    std::string id;
    bool pass = true;
    std::vector<Violation> violations;
    std::vector<Violation> warnings;
};

nlohmann::json to_json(const ValidationReport& r);

// Length in the language's unit: whitespace words (EN) or non-whitespace
// code points (ZH).
int text_units(const std::string& text, Language lang);
std::vector<std::string> tokenize(const std::string& text, Language lang);
std::vector<std::string> utf8_chars(const std::string& text);

ValidationReport validate(const DatasetRecord& r, const QcConfig& cfg = {});
// Starts with the completeness check on the raw object; a record that fails it
// is not checked further.
ValidationReport validate_json(const nlohmann::json& j, const QcConfig& cfg = {});

// 2 * matched / (|a| + |b|) over the matching blocks of a longest-match
// recursion, no junk heuristics. The recursion is run in both argument orders
// and the larger total is used, so the score is symmetric.
double similarity(const std::vector<std::string>& a, const std::vector<std::string>& b);
int matched_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

enum class DropReason { Exact, Overall, Opening };
const char* to_string(DropReason r);

struct DroppedRecord {
    size_t index = 0;  // position in the input
    std::string id;
    DropReason reason = DropReason::Exact;
    std::string matched_id;
    double score = 1.0;
};

struct DedupResult {
    std::vector<DatasetRecord> kept;
    std::vector<DroppedRecord> dropped;
};

DedupResult dedup(const std::vector<DatasetRecord>& records, const QcConfig& cfg = {});
std::string dropped_csv(const std::vector<DroppedRecord>& dropped);

struct EmotionStats {
    int64_t segments = 0;
    int64_t en_segments = 0;
    int64_t zh_segments = 0;
    double en_mean_words = 0.0;
    double zh_mean_chars = 0.0;
};

struct DatasetStats {
    int64_t records = 0;
    std::map<std::string, int64_t> by_language;
    std::map<std::string, int64_t> by_category;
    std::map<int, int64_t> by_segment_count;
    std::map<std::string, EmotionStats> by_emotion;
    double total_seconds = 0.0;
    double total_hours() const { return total_seconds / 3600.0; }
};

DatasetStats stats(const std::vector<DatasetRecord>& records);
nlohmann::json to_json(const DatasetStats& s);
std::string stats_table(const DatasetStats& s);

struct StratumKey {
    Language language;
    Category category;
    int segments;
    auto operator<=>(const StratumKey&) const = default;
};

std::string to_string(const StratumKey& k);

struct StratumAllocation {
    StratumKey key;
    int available = 0;
    int allocated = 0;
};

struct SampleResult {
    std::vector<size_t> indices;  // ascending input positions
    std::vector<StratumAllocation> allocation;
};

// Spreads n as evenly as possible over the non-empty strata; strata too small
// for their share give the rest to the others. Throws TooFew if n exceeds the
// record count.
SampleResult sample_for_review(const std::vector<DatasetRecord>& records, int n, uint64_t seed);

// ---------------------------------------------------------------------------
// Candidate generation

struct RecordRequest {
    Language language = Language::EN;
    Category category = Category::VividDescriptive;
    std::vector<std::string> emotion_sequence;
};

class GenerationBackend {
public:
    virtual ~GenerationBackend() = default;
    virtual std::string generate(const std::string& prompt, const RecordRequest& request) = 0;
};

// Offline backend answering from a fixed list of canned records.
class StubBackend : public GenerationBackend {
public:
    StubBackend();
    explicit StubBackend(std::vector<std::string> canned);
    std::string generate(const std::string& prompt, const RecordRequest& request) override;

private:
    std::vector<std::string> canned_;
};

// Fills {language}, {category}, {emotion_sequence} and {segment_count}.
std::string render_prompt(const std::string& tmpl, const RecordRequest& request);

std::string generation_client(GenerationBackend* backend, const std::string& prompt_template,
                              const RecordRequest& request);

// JSON lines helpers. Blank lines are skipped; line numbers are 1-based.
struct JsonlLine {
    int line = 0;
    nlohmann::json value;
};

std::vector<JsonlLine> read_jsonl(const std::string& path);

}  // namespace segctl::medqc
