// Copyright (C) 2026 The segctl Authors
// SPDX-License-Identifier: Apache-2.0

#include "segctl/medqc.hpp"

#include <algorithm>
#include <array>
#include <cstdlib>
#include <fstream>

#include "segctl/rng.hpp"

namespace segctl::medqc {

namespace {

const std::vector<std::string> kEmotions = {"happy",   "sad",       "angry",  "surprised",
                                            "fearful", "disgusted", "neutral"};

bool is_ascii_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_space_char(const std::string& ch) {
    return (ch.size() == 1 && is_ascii_space(static_cast<unsigned char>(ch[0]))) || ch == "\xE3\x80\x80";
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (size_t k = 0; k < parts.size(); ++k) {
        if (k > 0) out += sep;
        out += parts[k];
    }
    return out;
}

std::string fmt(double v) { return format_real(v, 6); }

}  // namespace

const char* to_string(Language l) { return l == Language::EN ? "EN" : "ZH"; }

const char* to_string(Category c) {
    switch (c) {
        case Category::VividDescriptive: return "vivid_descriptive";
        case Category::EmotionalDialogue: return "emotional_dialogue";
        case Category::ObservationalPhrase: return "observational_phrase";
    }
    return "unknown";
}

std::optional<Language> parse_language(const std::string& s) {
    if (s == "EN") return Language::EN;
    if (s == "ZH") return Language::ZH;
    return std::nullopt;
}

std::optional<Category> parse_category(const std::string& s) {
    for (auto c : {Category::VividDescriptive, Category::EmotionalDialogue, Category::ObservationalPhrase}) {
        if (s == to_string(c)) return c;
    }
    return std::nullopt;
}

const std::vector<std::string>& emotion_vocabulary() { return kEmotions; }

std::vector<std::string> DatasetRecord::emotions() const {
    std::vector<std::string> out;
    for (const auto& s : segments) out.push_back(s.emotion);
    return out;
}

double DatasetRecord::total_seconds() const {
    double total = 0.0;
    for (const auto& s : segments) total += s.seconds;
    return total;
}

std::optional<double> parse_seconds(const nlohmann::json& v) {
    if (v.is_number()) {
        return v.get<double>();
    }
    if (!v.is_string()) {
        return std::nullopt;
    }
    const std::string s = v.get<std::string>();
    const char* begin = s.c_str();
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin) {
        return std::nullopt;
    }
    std::string rest(end);
    rest.erase(std::remove_if(rest.begin(), rest.end(), [](unsigned char c) { return is_ascii_space(c); }),
               rest.end());
    if (rest.empty() || rest == "s" || rest == "sec" || rest == "seconds") {
        return value;
    }
    return std::nullopt;
}

namespace {

// Empty when the object has every field with the right type.
std::string completeness_problem(const nlohmann::json& j) {
    if (!j.is_object()) return "record is not an object";
    auto need_string = [&](const nlohmann::json& o, const char* key) -> std::string {
        if (!o.contains(key)) return std::string("missing ") + key;
        if (!o.at(key).is_string()) return std::string(key) + " is not a string";
        return "";
    };
    for (const char* key : {"original_text", "language", "text_category"}) {
        if (auto p = need_string(j, key); !p.empty()) return p;
    }
    if (!parse_language(j.at("language").get<std::string>())) return "unknown language";
    if (!parse_category(j.at("text_category").get<std::string>())) return "unknown text_category";
    if (!j.contains("segments")) return "missing segments";
    if (!j.at("segments").is_array()) return "segments is not an array";
    for (const auto& seg : j.at("segments")) {
        if (!seg.is_object()) return "segment is not an object";
        for (const char* key : {"lines_seg", "emotion", "emotion_description"}) {
            if (auto p = need_string(seg, key); !p.empty()) return "segment: " + p;
        }
        if (!seg.contains("time")) return "segment: missing time";
        if (!parse_seconds(seg.at("time"))) return "segment: unreadable time";
    }
    if (j.contains("emotion_sequence")) {
        const auto& es = j.at("emotion_sequence");
        if (!es.is_array() || !std::all_of(es.begin(), es.end(), [](const auto& e) { return e.is_string(); })) {
            return "emotion_sequence is not a list of strings";
        }
    }
    return "";
}

std::string id_of(const nlohmann::json& j) {
    if (j.is_object() && j.contains("id")) {
        const auto& v = j.at("id");
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number_integer()) return std::to_string(v.get<int64_t>());
    }
    return "";
}

}  // namespace

DatasetRecord record_from_json(const nlohmann::json& j) {
    if (const auto p = completeness_problem(j); !p.empty()) {
        throw Error(ErrorCode::ParseError, p);
    }
    DatasetRecord r;
    r.id = id_of(j);
    r.text = j.at("original_text").get<std::string>();
    r.language = *parse_language(j.at("language").get<std::string>());
    r.category = *parse_category(j.at("text_category").get<std::string>());
    for (const auto& seg : j.at("segments")) {
        r.segments.push_back({seg.at("lines_seg").get<std::string>(), seg.at("emotion").get<std::string>(),
                              seg.at("emotion_description").get<std::string>(), *parse_seconds(seg.at("time"))});
    }
    if (j.contains("emotion_sequence")) {
        r.emotion_sequence = j.at("emotion_sequence").get<std::vector<std::string>>();
    }
    return r;
}

nlohmann::json record_to_json(const DatasetRecord& r) {
    nlohmann::json segs = nlohmann::json::array();
    for (const auto& s : r.segments) {
        segs.push_back({{"lines_seg", s.text},
                        {"emotion", s.emotion},
                        {"emotion_description", s.description},
                        {"time", s.seconds}});
    }
    nlohmann::json j{{"id", r.id},
                     {"original_text", r.text},
                     {"language", to_string(r.language)},
                     {"text_category", to_string(r.category)},
                     {"segments", segs}};
    if (!r.emotion_sequence.empty()) {
        j["emotion_sequence"] = r.emotion_sequence;
    }
    return j;
}

nlohmann::json to_json(const ValidationReport& r) {
    auto list = [](const std::vector<Violation>& vs) {
        nlohmann::json a = nlohmann::json::array();
        for (const auto& v : vs) a.push_back({{"rule", v.rule}, {"detail", v.detail}});
        return a;
    };
    return nlohmann::json{{"id", r.id},
                          {"verdict", r.pass ? "pass" : "fail"},
                          {"violations", list(r.violations)},
                          {"warnings", list(r.warnings)}};
}

std::vector<std::string> utf8_chars(const std::string& text) {
    std::vector<std::string> out;
    for (size_t k = 0; k < text.size();) {
        const auto c = static_cast<unsigned char>(text[k]);
        size_t n = 1;
        if (c >= 0xF0) n = 4;
        else if (c >= 0xE0) n = 3;
        else if (c >= 0xC0) n = 2;
        n = std::min(n, text.size() - k);
        out.push_back(text.substr(k, n));
        k += n;
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& text, Language lang) {
    std::vector<std::string> out;
    if (lang == Language::ZH) {
        for (auto& ch : utf8_chars(text)) {
            if (!is_space_char(ch)) out.push_back(std::move(ch));
        }
        return out;
    }
    std::string cur;
    for (unsigned char c : text) {
        if (is_ascii_space(c)) {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur.push_back(static_cast<char>(c));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

int text_units(const std::string& text, Language lang) { return static_cast<int>(tokenize(text, lang).size()); }

ValidationReport validate(const DatasetRecord& r, const QcConfig& cfg) {
    ValidationReport rep;
    rep.id = r.id;
    auto fail = [&](const char* rule, const std::string& detail) { rep.violations.push_back({rule, detail}); };
    const Language lang = r.language;
    const char* unit = lang == Language::EN ? "words" : "chars";

    const int len = text_units(r.text, lang);
    const Window& text_window = lang == Language::EN ? cfg.en_text_words : cfg.zh_text_chars;
    if (!text_window.contains(len)) {
        fail(kRuleTextLength, std::to_string(len) + " " + unit + " outside [" + fmt(text_window.lo) + ", " +
                                  fmt(text_window.hi) + "]");
    }

    const auto n = static_cast<double>(r.segments.size());
    if (!cfg.segment_count.contains(n)) {
        fail(kRuleSegmentCount, std::to_string(r.segments.size()) + " segments");
    }

    for (const auto& s : r.segments) {
        if (std::find(kEmotions.begin(), kEmotions.end(), s.emotion) == kEmotions.end()) {
            fail(kRuleEmotionVocab, "unknown emotion '" + s.emotion + "'");
            break;
        }
    }

    if (!r.emotion_sequence.empty() && r.emotion_sequence != r.emotions()) {
        fail(kRuleSegmentOrder,
             "segments [" + join(r.emotions(), ",") + "] vs sequence [" + join(r.emotion_sequence, ",") + "]");
    }

    std::vector<std::string> spans;
    for (const auto& s : r.segments) spans.push_back(s.text);
    if (join(spans, "") != r.text && join(spans, " ") != r.text) {
        fail(kRuleReconstruction, "segments do not reconstruct original_text");
    }

    const Window& desc_window = lang == Language::EN ? cfg.en_description_words : cfg.zh_description_chars;
    for (size_t k = 0; k < r.segments.size(); ++k) {
        const int d = text_units(r.segments[k].description, lang);
        if (!desc_window.contains(d)) {
            fail(kRuleDescriptionLength, "segment " + std::to_string(k + 1) + ": " + std::to_string(d) + " " + unit);
            break;
        }
    }

    for (size_t k = 0; k < r.segments.size(); ++k) {
        if (!cfg.segment_seconds.contains(r.segments[k].seconds)) {
            fail(kRuleSegDuration, "segment " + std::to_string(k + 1) + ": " + fmt(r.segments[k].seconds) + " s");
            break;
        }
    }

    const double total = r.total_seconds();
    if (!cfg.total_seconds.contains(total)) {
        fail(kRuleTotalDuration, fmt(total) + " s");
    }

    if (lang == Language::EN && len > 0) {
        const double rate = total / len;
        if (!cfg.seconds_per_word.contains(rate)) {
            rep.warnings.push_back({kRuleWordRate, fmt(rate) + " s/word"});
        }
    }

    rep.pass = rep.violations.empty();
    return rep;
}

ValidationReport validate_json(const nlohmann::json& j, const QcConfig& cfg) {
    if (const auto p = completeness_problem(j); !p.empty()) {
        ValidationReport rep;
        rep.id = id_of(j);
        rep.pass = false;
        rep.violations.push_back({kRuleJsonComplete, p});
        return rep;
    }
    return validate(record_from_json(j), cfg);
}

// ---------------------------------------------------------------------------
// Similarity

namespace {

struct Match {
    int i;
    int j;
    int size;
};

// Longest common block in a[alo, ahi) x b[blo, bhi); ties go to the earliest
// start in a, then in b.
Match longest_match(const std::vector<std::string>& a, const std::vector<std::string>& b, int alo, int ahi, int blo,
                    int bhi) {
    Match best{alo, blo, 0};
    std::vector<int> prev(bhi - blo + 1, 0), cur(bhi - blo + 1, 0);
    for (int i = alo; i < ahi; ++i) {
        for (int j = blo; j < bhi; ++j) {
            const int col = j - blo + 1;
            cur[col] = a[i] == b[j] ? prev[col - 1] + 1 : 0;
            if (cur[col] > best.size) {
                best = {i - cur[col] + 1, j - cur[col] + 1, cur[col]};
            }
        }
        std::swap(prev, cur);
    }
    return best;
}

}  // namespace

int matched_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    int total = 0;
    std::vector<std::array<int, 4>> queue{{0, static_cast<int>(a.size()), 0, static_cast<int>(b.size())}};
    while (!queue.empty()) {
        const auto [alo, ahi, blo, bhi] = queue.back();
        queue.pop_back();
        const Match m = longest_match(a, b, alo, ahi, blo, bhi);
        if (m.size == 0) continue;
        total += m.size;
        if (alo < m.i && blo < m.j) queue.push_back({alo, m.i, blo, m.j});
        if (m.i + m.size < ahi && m.j + m.size < bhi) queue.push_back({m.i + m.size, ahi, m.j + m.size, bhi});
    }
    return total;
}

double similarity(const std::vector<std::string>& a, const std::vector<std::string>& b) {
    if (a.empty() || b.empty()) {
        throw Error(ErrorCode::Empty, "similarity needs non-empty token lists");
    }
    const int matched = std::max(matched_length(a, b), matched_length(b, a));
    return 2.0 * matched / static_cast<double>(a.size() + b.size());
}

// ---------------------------------------------------------------------------
// Dedup

const char* to_string(DropReason r) {
    switch (r) {
        case DropReason::Exact: return "exact";
        case DropReason::Overall: return "overall";
        case DropReason::Opening: return "opening";
    }
    return "unknown";
}

DedupResult dedup(const std::vector<DatasetRecord>& records, const QcConfig& cfg) {
    DedupResult out;
    std::vector<std::vector<std::string>> kept_tokens;
    std::vector<std::string> kept_groups;
    for (size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        std::optional<DroppedRecord> drop;
        for (const auto& kept : out.kept) {
            if (kept.text == r.text) {
                drop = DroppedRecord{k, r.id, DropReason::Exact, kept.id, 1.0};
                break;
            }
        }
        const auto tokens = tokenize(r.text, r.language);
        const std::string group = join(r.emotions(), ",");
        for (size_t q = 0; !drop && q < out.kept.size(); ++q) {
            if (kept_groups[q] != group || tokens.empty() || kept_tokens[q].empty()) continue;
            const double overall = similarity(tokens, kept_tokens[q]);
            if (overall >= cfg.overall_threshold) {
                drop = DroppedRecord{k, r.id, DropReason::Overall, out.kept[q].id, overall};
                break;
            }
            const auto w = static_cast<size_t>(cfg.opening_tokens);
            const std::vector<std::string> oa(tokens.begin(), tokens.begin() + std::min(w, tokens.size()));
            const std::vector<std::string> ob(kept_tokens[q].begin(),
                                              kept_tokens[q].begin() + std::min(w, kept_tokens[q].size()));
            const double opening = similarity(oa, ob);
            if (opening >= cfg.opening_threshold) {
                drop = DroppedRecord{k, r.id, DropReason::Opening, out.kept[q].id, opening};
            }
        }
        if (drop) {
            out.dropped.push_back(*drop);
        } else {
            out.kept.push_back(r);
            kept_tokens.push_back(tokens);
            kept_groups.push_back(group);
        }
    }
    return out;
}

std::string dropped_csv(const std::vector<DroppedRecord>& dropped) {
    std::string out = "index,id,reason,matched_id,score\n";
    for (const auto& d : dropped) {
        out += std::to_string(d.index) + "," + d.id + "," + to_string(d.reason) + "," + d.matched_id + "," +
               format_real(d.score, 6) + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Stats

DatasetStats stats(const std::vector<DatasetRecord>& records) {
    DatasetStats s;
    std::map<std::string, int64_t> en_units, zh_units;
    for (const auto& r : records) {
        ++s.records;
        ++s.by_language[to_string(r.language)];
        ++s.by_category[to_string(r.category)];
        ++s.by_segment_count[static_cast<int>(r.segments.size())];
        for (const auto& seg : r.segments) {
            auto& e = s.by_emotion[seg.emotion];
            ++e.segments;
            const int units = text_units(seg.text, r.language);
            if (r.language == Language::EN) {
                ++e.en_segments;
                en_units[seg.emotion] += units;
            } else {
                ++e.zh_segments;
                zh_units[seg.emotion] += units;
            }
            s.total_seconds += seg.seconds;
        }
    }
    for (auto& [emotion, e] : s.by_emotion) {
        if (e.en_segments > 0) e.en_mean_words = static_cast<double>(en_units[emotion]) / e.en_segments;
        if (e.zh_segments > 0) e.zh_mean_chars = static_cast<double>(zh_units[emotion]) / e.zh_segments;
    }
    return s;
}

nlohmann::json to_json(const DatasetStats& s) {
    nlohmann::json emotions = nlohmann::json::object();
    for (const auto& [name, e] : s.by_emotion) {
        emotions[name] = {{"segments", e.segments},
                          {"en_segments", e.en_segments},
                          {"zh_segments", e.zh_segments},
                          {"en_mean_words", e.en_mean_words},
                          {"zh_mean_chars", e.zh_mean_chars}};
    }
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [n, c] : s.by_segment_count) counts[std::to_string(n)] = c;
    return nlohmann::json{{"records", s.records},
                          {"by_language", s.by_language},
                          {"by_category", s.by_category},
                          {"by_segment_count", counts},
                          {"by_emotion", emotions},
                          {"total_seconds", s.total_seconds},
                          {"total_hours", s.total_hours()}};
}

std::string stats_table(const DatasetStats& s) {
    std::string out = "records " + std::to_string(s.records) + "\n";
    out += "total_hours " + format_real(s.total_hours(), 6) + "\n\n";
    for (const auto& [k, v] : s.by_language) out += "language " + k + " " + std::to_string(v) + "\n";
    for (const auto& [k, v] : s.by_category) out += "category " + k + " " + std::to_string(v) + "\n";
    for (const auto& [k, v] : s.by_segment_count) out += "segments " + std::to_string(k) + " " + std::to_string(v) + "\n";
    out += "\nemotion      segments  en_mean_words  zh_mean_chars\n";
    for (const auto& [name, e] : s.by_emotion) {
        char line[128];
        std::snprintf(line, sizeof(line), "%-12s %8lld  %13.2f  %13.2f\n", name.c_str(),
                      static_cast<long long>(e.segments), e.en_mean_words, e.zh_mean_chars);
        out += line;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling

std::string to_string(const StratumKey& k) {
    return std::string(to_string(k.language)) + "/" + to_string(k.category) + "/" + std::to_string(k.segments);
}

SampleResult sample_for_review(const std::vector<DatasetRecord>& records, int n, uint64_t seed) {
    if (n < 0 || static_cast<size_t>(n) > records.size()) {
        throw Error(ErrorCode::TooFew, "asked for " + std::to_string(n) + " of " + std::to_string(records.size()) +
                                           " records");
    }
    std::map<StratumKey, std::vector<size_t>> strata;
    for (size_t k = 0; k < records.size(); ++k) {
        const auto& r = records[k];
        strata[{r.language, r.category, static_cast<int>(r.segments.size())}].push_back(k);
    }

    SampleResult out;
    for (const auto& [key, members] : strata) {
        out.allocation.push_back({key, static_cast<int>(members.size()), 0});
    }
    int remaining = n;
    while (remaining > 0) {
        std::vector<StratumAllocation*> open;
        for (auto& a : out.allocation) {
            if (a.allocated < a.available) open.push_back(&a);
        }
        const int share = remaining / static_cast<int>(open.size());
        if (share == 0) {
            for (int k = 0; k < remaining; ++k) ++open[k]->allocated;
            break;
        }
        for (auto* a : open) {
            const int give = std::min(share, a->available - a->allocated);
            a->allocated += give;
            remaining -= give;
        }
    }

    Rng rng(seed);
    size_t s = 0;
    for (auto& [key, members] : strata) {
        auto order = members;
        for (size_t k = order.size(); k > 1; --k) {
            std::swap(order[k - 1], order[rng.below(k)]);
        }
        const int take = out.allocation[s++].allocated;
        out.indices.insert(out.indices.end(), order.begin(), order.begin() + take);
    }
    std::sort(out.indices.begin(), out.indices.end());
    return out;
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::vector<std::string> kCannedRecords = {
    R"({"id":"stub-1","language":"EN","text_category":"emotional_dialogue","original_text":"I finally got the letter today and I cannot stop smiling, but then I read the last line twice.","segments":[{"lines_seg":"I finally got the letter today and I cannot stop smiling,","emotion":"happy","emotion_description":"bright and quick with a rising lift","time":3.0},{"lines_seg":"but then I read the last line twice.","emotion":"surprised","emotion_description":"slowing down with a sharp breath","time":2.6}]})",
    R"({"id":"stub-2","language":"EN","text_category":"vivid_descriptive","original_text":"The old lighthouse stood silent over the grey water, and every broken window seemed to stare back at me.","segments":[{"lines_seg":"The old lighthouse stood silent over the grey water,","emotion":"sad","emotion_description":"low and heavy with long pauses","time":3.0},{"lines_seg":"and every broken window seemed to stare back at me.","emotion":"fearful","emotion_description":"hushed and trembling near the end","time":2.6}]})",
};

}  // namespace

StubBackend::StubBackend() : canned_(kCannedRecords) {}

StubBackend::StubBackend(std::vector<std::string> canned) : canned_(std::move(canned)) {
    if (canned_.empty()) {
        throw Error(ErrorCode::Empty, "stub backend needs at least one canned record");
    }
}

std::string StubBackend::generate(const std::string& prompt, const RecordRequest&) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : prompt) {
        h = (h ^ c) * 1099511628211ULL;
    }
    return canned_[h % canned_.size()];
}

std::string render_prompt(const std::string& tmpl, const RecordRequest& request) {
    const std::vector<std::pair<std::string, std::string>> fields = {
        {"{language}", to_string(request.language)},
        {"{category}", to_string(request.category)},
        {"{emotion_sequence}", join(request.emotion_sequence, ", ")},
        {"{segment_count}", std::to_string(request.emotion_sequence.size())},
    };
    std::string out = tmpl;
    for (const auto& [key, value] : fields) {
        for (size_t pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
            out.replace(pos, key.size(), value);
        }
    }
    return out;
}

std::string generation_client(GenerationBackend* backend, const std::string& prompt_template,
                              const RecordRequest& request) {
    if (backend == nullptr) {
        throw Error(ErrorCode::BackendUnavailable, "no generation backend configured");
    }
    return backend->generate(render_prompt(prompt_template, request), request);
}

std::vector<JsonlLine> read_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::ParseError, "cannot open " + path);
    }
    std::vector<JsonlLine> out;
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return is_ascii_space(c); })) continue;
        try {
            out.push_back({number, nlohmann::json::parse(line)});
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(ErrorCode::ParseError, path + ":" + std::to_string(number) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace segctl::medqc
