#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/vocab.hpp"

namespace fuseatlas {

enum class LabelPresence : std::uint8_t { labeled, unlabeled, mixed };

template <>
struct EnumNames<LabelPresence> {
    static constexpr std::array<std::string_view, 3> names{"labeled", "unlabeled", "mixed"};
};

enum class AnnotationType : std::uint8_t { landmark, mask, box, polygon, keypoints, class_label, text, other };

template <>
struct EnumNames<AnnotationType> {
    static constexpr std::array<std::string_view, 8> names{
        "landmark", "mask", "box", "polygon", "keypoints", "class_label", "text", "other"};
};

/// Labeled or mixed: the dataset ships usable annotations.
inline bool has_annotations(LabelPresence p) { return p != LabelPresence::unlabeled; }

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

enum class Severity : std::uint8_t { error, warning };

struct Diagnostic {
    Severity severity = Severity::error;
    std::string field;
    std::string message;
    std::size_t line_no = 0;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

struct ValidationReport {
    std::vector<Diagnostic> diagnostics;

    /// True iff no error-severity diagnostic is present.
    bool ok() const {
        return std::none_of(diagnostics.begin(), diagnostics.end(),
                            [](const Diagnostic& d) { return d.severity == Severity::error; });
    }

    std::size_t error_count() const {
        return static_cast<std::size_t>(std::count_if(diagnostics.begin(), diagnostics.end(),
                                                      [](const Diagnostic& d) { return d.severity == Severity::error; }));
    }

    std::size_t warning_count() const { return diagnostics.size() - error_count(); }

    void error(std::string field, std::string message, std::size_t line_no) {
        diagnostics.push_back({Severity::error, std::move(field), std::move(message), line_no});
    }

    void warning(std::string field, std::string message, std::size_t line_no) {
        diagnostics.push_back({Severity::warning, std::move(field), std::move(message), line_no});
    }

    void merge(const ValidationReport& other) {
        diagnostics.insert(diagnostics.end(), other.diagnostics.begin(), other.diagnostics.end());
    }
};

inline std::string format_diagnostic(const Diagnostic& d) {
    return "line " + std::to_string(d.line_no) + ": " +
           (d.severity == Severity::error ? "error" : "warning") + ": " + d.field + ": " + d.message;
}

/// A parsed value or the diagnostics explaining why there is none. Warnings
/// may accompany a value.
template <typename T>
struct ParseResult {
    std::optional<T> value;
    ValidationReport report;
};

template <typename T>
struct Numbered {
    T value;
    std::size_t line_no = 0;
};

// ---------------------------------------------------------------------------
// Dataset-level record
// ---------------------------------------------------------------------------

struct PartialDate {
    int year = 0;
    std::optional<int> month;
    std::optional<int> day;

    friend bool operator==(const PartialDate&, const PartialDate&) = default;
};

inline std::string to_string(const PartialDate& d) {
    char buf[16];
    if (d.day) {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", d.year, d.month.value_or(1), *d.day);
    } else if (d.month) {
        std::snprintf(buf, sizeof buf, "%04d-%02d", d.year, *d.month);
    } else {
        std::snprintf(buf, sizeof buf, "%04d", d.year);
    }
    return buf;
}

inline bool is_leap_year(int y) { return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0; }

/// YYYY, YYYY-MM or YYYY-MM-DD with calendar-valid month/day.
inline std::optional<PartialDate> parse_partial_date(std::string_view s) {
    auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
        if (pos + n > s.size()) return std::nullopt;
        int v = 0;
        for (std::size_t i = pos; i < pos + n; ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    if (s.size() != 4 && s.size() != 7 && s.size() != 10) return std::nullopt;
    PartialDate d;
    auto y = digits(0, 4);
    if (!y || *y < 1800 || *y > 2200) return std::nullopt;
    d.year = *y;
    if (s.size() >= 7) {
        if (s[4] != '-') return std::nullopt;
        auto m = digits(5, 2);
        if (!m || *m < 1 || *m > 12) return std::nullopt;
        d.month = *m;
    }
    if (s.size() == 10) {
        if (s[7] != '-') return std::nullopt;
        auto day = digits(8, 2);
        static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
        int max_day = kDays[*d.month - 1] + (*d.month == 2 && is_leap_year(d.year) ? 1 : 0);
        if (!day || *day < 1 || *day > max_day) return std::nullopt;
        d.day = *day;
    }
    return d;
}

inline constexpr std::array<std::string_view, 3> kSplitNames{"train", "val", "test"};

/// A total count with optional train/val/test splits. `total` unknown is nullopt.
struct CountSpec {
    std::optional<std::int64_t> total;
    std::map<std::string, std::int64_t> splits;

    bool known() const { return total.has_value(); }
    std::int64_t value_or_zero() const { return total.value_or(0); }

    /// Sum of splits when all three are present.
    std::optional<std::int64_t> split_sum() const {
        if (splits.size() != kSplitNames.size()) return std::nullopt;
        std::int64_t s = 0;
        for (const auto& [k, v] : splits) s += v;
        return s;
    }

    friend bool operator==(const CountSpec&, const CountSpec&) = default;
};

/// One dataset's metadata row. Vocabulary-bearing fields hold the raw terms;
/// harmonization produces the normalized forms.
struct DatasetRecord {
    std::string dataset_name;
    std::optional<PartialDate> release_date;
    std::optional<std::string> homepage_url;
    std::vector<std::string> organization;
    std::optional<std::string> challenge_series;
    std::string license;
    std::string dataset_description;
    std::vector<std::string> modality_primary;  // sorted, unique
    std::optional<std::string> modality_secondary;
    std::vector<std::string> anatomical_structure;
    std::optional<std::string> disease;
    CountSpec data_volume;
    CountSpec valid_image_n;
    LabelPresence label_presence = LabelPresence::labeled;
    std::vector<std::string> task_type;  // sorted, unique
    std::map<std::string, nlohmann::json> num_classes_per_task;
    // Extension fields.
    std::optional<double> storage_size_gb;
    std::vector<std::string> dimension;  // sorted, unique
    std::optional<std::string> notes;

    friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

// ---------------------------------------------------------------------------
// Annotation-level entry
// ---------------------------------------------------------------------------

struct AnnotationRecordBlock {
    std::string dataset_name;
    std::string image_path;
    std::optional<std::string> sample_id;

    friend bool operator==(const AnnotationRecordBlock&, const AnnotationRecordBlock&) = default;
};

struct AnnotationContext {
    std::optional<std::string> subject_id, age, sex, site, modality, anatomy;
    nlohmann::json extra = nlohmann::json::object();
    std::optional<std::string> free_text;

    friend bool operator==(const AnnotationContext&, const AnnotationContext&) = default;
};

struct MediaGeometry {
    Task task_type = Task::classification;
    std::string leaf_task;
    AnnotationType annotation_type = AnnotationType::other;
    Dimension dimension = Dimension::D2;
    std::optional<nlohmann::json> pixel_spacing, orientation, slice_index, frame_index, timestamp, camera;

    friend bool operator==(const MediaGeometry&, const MediaGeometry&) = default;
};

struct TaskPayload {
    std::optional<std::string> schema_variant;
    nlohmann::json payload = nlohmann::json::object();

    friend bool operator==(const TaskPayload&, const TaskPayload&) = default;
};

struct AnnotationEntry {
    AnnotationRecordBlock record;
    AnnotationContext context;
    MediaGeometry media_geometry;
    std::map<std::string, TaskPayload> tasks;

    friend bool operator==(const AnnotationEntry&, const AnnotationEntry&) = default;
};

// ---------------------------------------------------------------------------
// Field decoding helpers
// ---------------------------------------------------------------------------

namespace detail {

inline constexpr std::size_t kMaxNesting = 64;

/// Bracket depth outside string literals; guards later recursive walks.
inline std::size_t nesting_depth(std::string_view text) {
    std::size_t depth = 0, max_depth = 0;
    bool in_string = false, escaped = false;
    for (char c : text) {
        if (in_string) {
            if (escaped) escaped = false;
            else if (c == '\\') escaped = true;
            else if (c == '"') in_string = false;
            continue;
        }
        if (c == '"') in_string = true;
        else if (c == '[' || c == '{') max_depth = std::max(max_depth, ++depth);
        else if ((c == ']' || c == '}') && depth > 0) --depth;
    }
    return max_depth;
}

inline bool is_na(const nlohmann::json& v) {
    return v.is_null() || (v.is_string() && detail::trim(v.get_ref<const std::string&>()) == "NA");
}

/// Decodes a document line; on failure records a "$" diagnostic and returns nullopt.
inline std::optional<nlohmann::json> decode_object(std::string_view text, std::size_t line_no, ValidationReport& report) {
    if (nesting_depth(text) > kMaxNesting) {
        report.error("$", "nesting deeper than " + std::to_string(kMaxNesting) + " levels", line_no);
        return std::nullopt;
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        report.error("$", "malformed record at byte " + std::to_string(e.byte) + ": " + e.what(), line_no);
        return std::nullopt;
    }
    if (!doc.is_object()) {
        report.error("$", "record must be an object", line_no);
        return std::nullopt;
    }
    return doc;
}

class FieldReader {
public:
    FieldReader(const nlohmann::json& obj, std::string prefix, std::size_t line_no, ValidationReport& report)
        : obj_(obj), prefix_(std::move(prefix)), line_no_(line_no), report_(report) {}

    std::string path(std::string_view key) const {
        return prefix_.empty() ? std::string(key) : prefix_ + "." + std::string(key);
    }

    const nlohmann::json* find(std::string_view key) const {
        auto it = obj_.find(std::string(key));
        return it == obj_.end() ? nullptr : &*it;
    }

    void fail(std::string_view key, std::string message) { report_.error(path(key), std::move(message), line_no_); }
    void warn(std::string_view key, std::string message) { report_.warning(path(key), std::move(message), line_no_); }

    std::optional<std::string> required_string(std::string_view key) {
        const auto* v = find(key);
        if (!v) {
            fail(key, "required field missing");
            return std::nullopt;
        }
        if (!v->is_string()) {
            fail(key, "expected a string");
            return std::nullopt;
        }
        auto s = std::string(trim(v->get_ref<const std::string&>()));
        if (s.empty()) {
            fail(key, "must not be empty");
            return std::nullopt;
        }
        return s;
    }

    /// String, "NA", null or absent. Absent/NA map to nullopt.
    std::optional<std::string> optional_string(std::string_view key, bool& ok) {
        const auto* v = find(key);
        if (!v || is_na(*v)) return std::nullopt;
        if (!v->is_string()) {
            fail(key, "expected a string or NA");
            ok = false;
            return std::nullopt;
        }
        return std::string(v->get_ref<const std::string&>());
    }

    /// String or number (numbers keep their JSON rendering); used by annotation context.
    std::optional<std::string> optional_scalar(std::string_view key, bool& ok) {
        const auto* v = find(key);
        if (!v || v->is_null()) return std::nullopt;
        if (v->is_string()) return v->get<std::string>();
        if (v->is_number() || v->is_boolean()) return v->dump();
        fail(key, "expected a string or number");
        ok = false;
        return std::nullopt;
    }

    /// A string (split by `splitter`) or an array of strings.
    template <typename Splitter>
    std::optional<std::vector<std::string>> string_list(std::string_view key, Splitter splitter) {
        const auto* v = find(key);
        if (!v) return std::vector<std::string>{};
        std::vector<std::string> out;
        if (v->is_null()) return out;
        if (v->is_string()) {
            out = splitter(v->get_ref<const std::string&>());
            return out;
        }
        if (!v->is_array()) {
            fail(key, "expected a string or an array of strings");
            return std::nullopt;
        }
        for (const auto& item : *v) {
            if (!item.is_string()) {
                fail(key, "array elements must be strings");
                return std::nullopt;
            }
            auto s = std::string(trim(item.get_ref<const std::string&>()));
            if (!s.empty()) out.push_back(std::move(s));
        }
        return out;
    }

    std::optional<std::int64_t> non_negative_integer(const nlohmann::json& v, std::string_view key) {
        if (v.is_number_unsigned()) {
            auto u = v.get<std::uint64_t>();
            if (u > static_cast<std::uint64_t>(INT64_MAX)) {
                fail(key, "count out of range");
                return std::nullopt;
            }
            return static_cast<std::int64_t>(u);
        }
        if (v.is_number_integer()) {
            auto i = v.get<std::int64_t>();
            if (i < 0) {
                fail(key, "count must be non-negative");
                return std::nullopt;
            }
            return i;
        }
        fail(key, "expected a non-negative integer");
        return std::nullopt;
    }

    /// Bare integer, {"total":..,"train":..,"val":..,"test":..}, null or NA.
    std::optional<CountSpec> count_spec(std::string_view key) {
        const auto* v = find(key);
        CountSpec out;
        if (!v || is_na(*v)) return out;
        if (v->is_number()) {
            auto n = non_negative_integer(*v, key);
            if (!n) return std::nullopt;
            out.total = *n;
            return out;
        }
        if (!v->is_object()) {
            fail(key, "expected an integer or a {total, train, val, test} object");
            return std::nullopt;
        }
        bool ok = true;
        for (const auto& [k, item] : v->items()) {
            const std::string sub = std::string(key) + "." + k;
            if (k == "total") {
                if (item.is_null()) continue;
                auto n = non_negative_integer(item, sub);
                if (!n) ok = false;
                else out.total = *n;
            } else if (std::find(kSplitNames.begin(), kSplitNames.end(), k) != kSplitNames.end()) {
                auto n = non_negative_integer(item, sub);
                if (!n) ok = false;
                else out.splits[k] = *n;
            } else {
                fail(sub, "unknown count key");
                ok = false;
            }
        }
        if (!ok) return std::nullopt;
        return out;
    }

private:
    const nlohmann::json& obj_;
    std::string prefix_;
    std::size_t line_no_;
    ValidationReport& report_;
};

inline std::vector<std::string> sorted_unique(std::vector<std::string> v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    return v;
}

/// Six significant digits, the canonical precision of real-valued fields.
inline double round_sig6(double v) {
    if (v == 0.0 || !std::isfinite(v)) return v;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return std::strtod(buf, nullptr);
}

inline bool looks_like_url(std::string_view s) {
    for (char c : s) {
        if (is_space(c)) return false;
    }
    for (std::string_view scheme : {"http://", "https://", "ftp://", "doi:"}) {
        if (s.size() > scheme.size() && to_lower(s.substr(0, scheme.size())) == scheme) return true;
    }
    // Bare DOI: 10.<registrant>/<suffix>
    return s.size() > 3 && s.substr(0, 3) == "10." && s.find('/') != std::string_view::npos;
}

}  // namespace detail

inline constexpr std::array<std::string_view, 16> kDataMetaFields{
    "dataset_name", "release_date", "homepage_url", "organization", "challenge_series",
    "license", "dataset_description", "modality_primary", "modality_secondary",
    "anatomical_structure", "disease", "data_volume", "valid_image_n", "label_presence",
    "task_type", "num_classes_per_task"};

inline constexpr std::array<std::string_view, 3> kDataMetaExtensionFields{"storage_size_gb", "dimension", "notes"};

// ---------------------------------------------------------------------------
// Line parsers
// ---------------------------------------------------------------------------

/// Decodes one data-meta.jsonl line. Every field error is reported (not just
/// the first); the record is returned only when no error was found.
inline ParseResult<DatasetRecord> parse_dataset_meta_line(std::string_view text, std::size_t line_no) {
    ParseResult<DatasetRecord> result;
    auto& report = result.report;
    auto doc = detail::decode_object(text, line_no, report);
    if (!doc) return result;

    detail::FieldReader r(*doc, "", line_no, report);
    DatasetRecord rec;
    bool ok = true;

    for (const auto& [key, value] : doc->items()) {
        bool known = std::find(kDataMetaFields.begin(), kDataMetaFields.end(), key) != kDataMetaFields.end() ||
                     std::find(kDataMetaExtensionFields.begin(), kDataMetaExtensionFields.end(), key) !=
                         kDataMetaExtensionFields.end();
        if (!known) r.warn(key, "unknown field ignored");
    }

    if (auto name = r.required_string("dataset_name")) rec.dataset_name = *name;
    else ok = false;

    if (const auto* v = r.find("release_date"); v && !detail::is_na(*v)) {
        if (!v->is_string()) {
            r.fail("release_date", "expected YYYY, YYYY-MM, YYYY-MM-DD or NA");
            ok = false;
        } else if (auto d = parse_partial_date(detail::trim(v->get_ref<const std::string&>()))) {
            rec.release_date = *d;
        } else {
            r.fail("release_date", "invalid date '" + v->get<std::string>() + "'");
            ok = false;
        }
    }

    if (auto url = r.optional_string("homepage_url", ok)) {
        auto trimmed = std::string(detail::trim(*url));
        if (!detail::looks_like_url(trimmed)) {
            r.fail("homepage_url", "not a URL or DOI: '" + *url + "'");
            ok = false;
        } else {
            rec.homepage_url = trimmed;
        }
    }

    if (auto orgs = r.string_list("organization", [](const std::string& s) {
            auto t = std::string(detail::trim(s));
            return t.empty() || t == "NA" ? std::vector<std::string>{} : std::vector<std::string>{t};
        })) {
        rec.organization = *orgs;
    } else {
        ok = false;
    }

    rec.challenge_series = r.optional_string("challenge_series", ok);

    if (auto lic = r.required_string("license")) rec.license = *lic;
    else ok = false;

    if (const auto* v = r.find("dataset_description"); v && !v->is_null()) {
        if (!v->is_string()) {
            r.fail("dataset_description", "expected a string");
            ok = false;
        } else {
            rec.dataset_description = v->get<std::string>();
        }
    }

    auto comma_split = [](const std::string& s) { return detail::split_top_level_commas(s); };

    if (!r.find("modality_primary")) {
        r.fail("modality_primary", "required field missing");
        ok = false;
    } else if (auto mods = r.string_list("modality_primary", comma_split)) {
        if (mods->empty()) {
            r.fail("modality_primary", "at least one modality is required");
            ok = false;
        }
        rec.modality_primary = detail::sorted_unique(std::move(*mods));
    } else {
        ok = false;
    }

    rec.modality_secondary = r.optional_string("modality_secondary", ok);

    if (auto anat = r.string_list("anatomical_structure", comma_split)) rec.anatomical_structure = *anat;
    else ok = false;

    rec.disease = r.optional_string("disease", ok);

    if (auto c = r.count_spec("data_volume")) rec.data_volume = *c;
    else ok = false;
    if (auto c = r.count_spec("valid_image_n")) rec.valid_image_n = *c;
    else ok = false;

    if (auto lp = r.required_string("label_presence")) {
        if (auto e = enum_from_string<LabelPresence>(*lp)) {
            rec.label_presence = *e;
        } else {
            r.fail("label_presence", "must be labeled, unlabeled or mixed (got '" + *lp + "')");
            ok = false;
        }
    } else {
        ok = false;
    }

    if (!r.find("task_type")) {
        r.fail("task_type", "required field missing");
        ok = false;
    } else if (auto tasks = r.string_list("task_type", comma_split)) {
        if (tasks->empty()) {
            r.fail("task_type", "at least one task is required");
            ok = false;
        }
        rec.task_type = detail::sorted_unique(std::move(*tasks));
    } else {
        ok = false;
    }

    if (const auto* v = r.find("num_classes_per_task"); v && !detail::is_na(*v)) {
        if (!v->is_object()) {
            r.fail("num_classes_per_task", "expected an object mapping task to class counts");
            ok = false;
        } else {
            for (const auto& [task, spec] : v->items()) {
                const std::string sub = "num_classes_per_task." + task;
                if (spec.is_number()) {
                    if (!r.non_negative_integer(spec, sub)) ok = false;
                    else rec.num_classes_per_task[task] = spec;
                } else if (spec.is_object()) {
                    rec.num_classes_per_task[task] = spec;
                } else {
                    r.fail(sub, "expected a class count or an object");
                    ok = false;
                }
            }
        }
    }

    if (const auto* v = r.find("storage_size_gb"); v && !detail::is_na(*v)) {
        if (!v->is_number() || v->get<double>() < 0.0 || !std::isfinite(v->get<double>())) {
            r.fail("storage_size_gb", "expected a non-negative number");
            ok = false;
        } else {
            rec.storage_size_gb = detail::round_sig6(v->get<double>());
        }
    }

    if (!r.find("dimension")) {
        r.fail("dimension", "required field missing");
        ok = false;
    } else if (auto dims = r.string_list("dimension", comma_split)) {
        if (dims->empty()) {
            r.fail("dimension", "at least one dimension is required");
            ok = false;
        }
        rec.dimension = detail::sorted_unique(std::move(*dims));
    } else {
        ok = false;
    }

    rec.notes = r.optional_string("notes", ok);

    if (ok && report.ok()) result.value = std::move(rec);
    return result;
}

/// Decodes one annotations_{task}.jsonl line (record/context/media_geometry/tasks).
inline ParseResult<AnnotationEntry> parse_annotation_line(std::string_view text, std::size_t line_no) {
    ParseResult<AnnotationEntry> result;
    auto& report = result.report;
    auto doc = detail::decode_object(text, line_no, report);
    if (!doc) return result;

    AnnotationEntry entry;
    bool ok = true;
    detail::FieldReader top(*doc, "", line_no, report);
    for (const auto& [key, value] : doc->items()) {
        if (key != "record" && key != "context" && key != "media_geometry" && key != "tasks") {
            top.warn(key, "unknown block ignored");
        }
    }

    auto block = [&](std::string_view name, bool required) -> const nlohmann::json* {
        const auto* b = top.find(name);
        if (!b || b->is_null()) {
            if (required) {
                top.fail(name, "required block missing");
                ok = false;
            }
            return nullptr;
        }
        if (!b->is_object()) {
            top.fail(name, "block must be an object");
            ok = false;
            return nullptr;
        }
        return b;
    };

    if (const auto* rec = block("record", true)) {
        detail::FieldReader r(*rec, "record", line_no, report);
        if (auto s = r.required_string("dataset_name")) entry.record.dataset_name = *s;
        else ok = false;
        if (auto s = r.required_string("image_path")) entry.record.image_path = *s;
        else ok = false;
        entry.record.sample_id = r.optional_scalar("sample_id", ok);
    }

    if (const auto* ctx = block("context", false)) {
        detail::FieldReader r(*ctx, "context", line_no, report);
        entry.context.subject_id = r.optional_scalar("subject_id", ok);
        entry.context.age = r.optional_scalar("age", ok);
        entry.context.sex = r.optional_scalar("sex", ok);
        entry.context.site = r.optional_scalar("site", ok);
        entry.context.modality = r.optional_scalar("modality", ok);
        entry.context.anatomy = r.optional_scalar("anatomy", ok);
        entry.context.free_text = r.optional_scalar("free_text", ok);
        if (const auto* extra = r.find("extra"); extra && !extra->is_null()) {
            if (!extra->is_object()) {
                r.fail("extra", "expected an object");
                ok = false;
            } else {
                entry.context.extra = *extra;
            }
        }
    }

    std::optional<Task> declared;
    if (const auto* mg = block("media_geometry", true)) {
        detail::FieldReader r(*mg, "media_geometry", line_no, report);
        if (auto s = r.required_string("task_type")) {
            if (auto t = enum_from_string<Task>(detail::to_lower(*s))) {
                entry.media_geometry.task_type = *t;
                declared = *t;
            } else {
                r.fail("task_type", "not one of the 12 task categories: '" + *s + "'");
                ok = false;
            }
        } else {
            ok = false;
        }
        if (const auto* lt = r.find("leaf_task"); lt && !lt->is_null()) {
            if (!lt->is_string()) {
                r.fail("leaf_task", "expected a string");
                ok = false;
            } else {
                entry.media_geometry.leaf_task = lt->get<std::string>();
            }
        }
        if (auto s = r.required_string("annotation_type")) {
            if (auto a = enum_from_string<AnnotationType>(detail::to_lower(*s))) {
                entry.media_geometry.annotation_type = *a;
            } else {
                r.fail("annotation_type", "unknown annotation type '" + *s + "'");
                ok = false;
            }
        } else {
            ok = false;
        }
        if (auto s = r.required_string("dimension")) {
            try {
                entry.media_geometry.dimension = parse_single_dimension(*s);
            } catch (const Error&) {
                r.fail("dimension", "expected exactly one of 2D, 3D, video (got '" + *s + "')");
                ok = false;
            }
        } else {
            ok = false;
        }
        auto passthrough = [&](std::string_view key, std::optional<nlohmann::json>& slot) {
            if (const auto* v = r.find(key); v && !v->is_null()) slot = *v;
        };
        passthrough("pixel_spacing", entry.media_geometry.pixel_spacing);
        passthrough("orientation", entry.media_geometry.orientation);
        passthrough("slice_index", entry.media_geometry.slice_index);
        passthrough("frame_index", entry.media_geometry.frame_index);
        passthrough("timestamp", entry.media_geometry.timestamp);
        passthrough("camera", entry.media_geometry.camera);
    }

    if (const auto* tasks = block("tasks", true)) {
        detail::FieldReader r(*tasks, "tasks", line_no, report);
        for (const auto& [name, payload] : tasks->items()) {
            if (!enum_from_string<Task>(name)) {
                r.fail(name, "unknown task key");
                ok = false;
                continue;
            }
            if (!payload.is_object()) {
                r.fail(name, "task payload must be an object");
                ok = false;
                continue;
            }
            TaskPayload p;
            p.payload = payload;
            if (auto it = payload.find("schema_variant"); it != payload.end() && !it->is_null()) {
                if (!it->is_string()) {
                    r.fail(name + ".schema_variant", "expected a string");
                    ok = false;
                    continue;
                }
                p.schema_variant = it->get<std::string>();
            }
            entry.tasks.emplace(name, std::move(p));
        }
        if (declared && !entry.tasks.contains(std::string(to_string(*declared)))) {
            r.fail(to_string(*declared), "task payload missing for declared task_type");
            ok = false;
        }
    }

    if (ok && report.ok()) result.value = std::move(entry);
    return result;
}

// ---------------------------------------------------------------------------
// Catalog validation
// ---------------------------------------------------------------------------

struct CatalogCheckOptions {
    /// Disabled by build_catalog, which resolves duplicate names by dedupe.
    bool check_unique_names = true;
};

/// Cross-record checks. Never fail-fast: every problem becomes a diagnostic.
inline ValidationReport validate_catalog(std::span<const Numbered<DatasetRecord>> records,
                                         std::span<const Numbered<AnnotationEntry>> annotations,
                                         const Vocabulary& vocab, CatalogCheckOptions options = {}) {
    ValidationReport report;
    std::set<std::string> names;
    for (const auto& [rec, line_no] : records) {
        if (!names.insert(rec.dataset_name).second && options.check_unique_names) {
            report.error("dataset_name", "duplicate dataset_name '" + rec.dataset_name + "'", line_no);
        }

        for (const auto& [field, spec] : {std::pair{"data_volume", &rec.data_volume},
                                          std::pair{"valid_image_n", &rec.valid_image_n}}) {
            if (auto sum = spec->split_sum(); sum && spec->total && *sum != *spec->total) {
                report.warning(field, "SplitMismatch: splits sum to " + std::to_string(*sum) + " but total is " +
                                          std::to_string(*spec->total),
                               line_no);
            }
        }
        if (rec.valid_image_n.total && rec.data_volume.total && *rec.valid_image_n.total > *rec.data_volume.total) {
            report.error("valid_image_n",
                         "valid_image_n total " + std::to_string(*rec.valid_image_n.total) + " exceeds data_volume total " +
                             std::to_string(*rec.data_volume.total),
                         line_no);
        }

        for (const auto& raw : rec.modality_primary) {
            for (const auto& term : detail::split_top_level_commas(raw)) {
                if (auto m = vocab.normalize_modality(term); m.diagnostic) {
                    report.warning("modality_primary", "unmapped modality '" + term + "' recorded as OTHER", line_no);
                }
            }
        }
        for (const auto& raw : rec.task_type) {
            for (const auto& term : detail::split_top_level_commas(raw)) {
                try {
                    (void)vocab.normalize_task(term);
                } catch (const UnknownTask& e) {
                    report.error("task_type", e.what(), line_no);
                }
            }
        }
        for (const auto& raw : rec.dimension) {
            try {
                (void)normalize_dimension(raw);
            } catch (const InvalidDimensionToken& e) {
                report.error("dimension", e.what(), line_no);
            } catch (const InvalidInput& e) {
                report.error("dimension", e.what(), line_no);
            }
        }
    }
    for (const auto& [entry, line_no] : annotations) {
        if (!names.contains(entry.record.dataset_name)) {
            report.error("record.dataset_name", "dangling reference to unknown dataset '" + entry.record.dataset_name + "'",
                         line_no);
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Canonical serialization
// ---------------------------------------------------------------------------

namespace detail {

inline nlohmann::ordered_json count_to_json(const CountSpec& c) {
    if (!c.total && c.splits.empty()) return nullptr;
    nlohmann::ordered_json out;
    out["total"] = c.total ? nlohmann::ordered_json(*c.total) : nlohmann::ordered_json(nullptr);
    for (auto split : kSplitNames) {
        if (auto it = c.splits.find(std::string(split)); it != c.splits.end()) out[std::string(split)] = it->second;
    }
    return out;
}

inline nlohmann::ordered_json na_or(const std::optional<std::string>& v) {
    return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json("NA");
}

inline nlohmann::ordered_json real_to_json(double v) {
    double r = round_sig6(v);
    if (std::nearbyint(r) == r && std::fabs(r) < 1e15) return static_cast<std::int64_t>(r);
    return r;
}

inline std::string dump_line(const nlohmann::ordered_json& j) {
    return j.dump(-1, ' ', false, nlohmann::ordered_json::error_handler_t::replace);
}

}  // namespace detail

/// Structured form of a record with keys in the fixed field order
/// (16 core fields, then storage_size_gb, dimension, notes).
inline nlohmann::ordered_json record_to_json(const DatasetRecord& r) {
    nlohmann::ordered_json j;
    j["dataset_name"] = r.dataset_name;
    j["release_date"] = r.release_date ? to_string(*r.release_date) : std::string("NA");
    j["homepage_url"] = detail::na_or(r.homepage_url);
    j["organization"] = r.organization;
    j["challenge_series"] = detail::na_or(r.challenge_series);
    j["license"] = r.license;
    j["dataset_description"] = r.dataset_description;
    j["modality_primary"] = detail::sorted_unique(r.modality_primary);
    j["modality_secondary"] = detail::na_or(r.modality_secondary);
    j["anatomical_structure"] = r.anatomical_structure;
    j["disease"] = detail::na_or(r.disease);
    j["data_volume"] = detail::count_to_json(r.data_volume);
    j["valid_image_n"] = detail::count_to_json(r.valid_image_n);
    j["label_presence"] = std::string(to_string(r.label_presence));
    j["task_type"] = detail::sorted_unique(r.task_type);
    nlohmann::ordered_json classes = nlohmann::ordered_json::object();
    for (const auto& [task, spec] : r.num_classes_per_task) {
        classes[task] = nlohmann::ordered_json::parse(spec.dump());
    }
    j["num_classes_per_task"] = std::move(classes);
    if (r.storage_size_gb) j["storage_size_gb"] = detail::real_to_json(*r.storage_size_gb);
    j["dimension"] = detail::sorted_unique(r.dimension);
    if (r.notes) j["notes"] = *r.notes;
    return j;
}

/// One line, deterministic bytes: parse_dataset_meta_line(canonical_serialize(r)) == r.
inline std::string canonical_serialize(const DatasetRecord& r) { return detail::dump_line(record_to_json(r)); }

}  // namespace fuseatlas
