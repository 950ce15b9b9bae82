#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/schema.hpp"
#include "fuseatlas/vocab.hpp"

namespace fuseatlas {

inline constexpr std::string_view kManifestVersion = "fuseatlas-manifest/1";

/// A validated record with its normalized vocabulary terms attached. `base`
/// keeps every raw field so nothing is lost to harmonization.
struct HarmonizedRecord {
    DatasetRecord base;
    std::vector<ModalityCode> modalities;  // sorted, unique
    std::set<Dimension> dimensions;
    std::set<Task> tasks;
    std::vector<AnatomyPath> anatomy_paths;
    std::set<ClinicalApplication> clinical_applications;
    std::optional<int> release_year;
    std::set<std::string> org_tokens;
    /// annotation_type values observed in the dataset's annotation entries.
    std::set<AnnotationType> annotation_types;
    std::string notes;

    const std::string& name() const { return base.dataset_name; }

    std::set<Modality> modality_codes() const {
        std::set<Modality> out;
        for (const auto& m : modalities) out.insert(m.code);
        return out;
    }

    std::set<std::string> anatomy_roots() const {
        std::set<std::string> out;
        for (const auto& p : anatomy_paths) out.insert(p.root());
        return out;
    }

    friend bool operator==(const HarmonizedRecord&, const HarmonizedRecord&) = default;
};

enum class DuplicateReason : std::uint8_t { exact_name, same_homepage, declared_overlap };

template <>
struct EnumNames<DuplicateReason> {
    static constexpr std::array<std::string_view, 3> names{"exact_name", "same_homepage", "declared_overlap"};
};

/// exact_name entries merge (`dropped` set); the other reasons only flag a
/// pair, naming the second dataset in `related`, and both records stay.
struct DuplicateEntry {
    std::string kept;
    std::optional<std::string> dropped;
    std::optional<std::string> related;
    DuplicateReason reason = DuplicateReason::exact_name;
    std::string detail;

    friend bool operator==(const DuplicateEntry&, const DuplicateEntry&) = default;
    friend auto operator<=>(const DuplicateEntry& a, const DuplicateEntry& b) {
        return std::tie(a.reason, a.kept, a.dropped, a.related, a.detail) <=>
               std::tie(b.reason, b.kept, b.dropped, b.related, b.detail);
    }
};

struct CatalogManifest {
    std::string version{kManifestVersion};
    std::string vocab_version;
    std::string generated_at;
    std::vector<HarmonizedRecord> datasets;  // sorted by dataset_name
    std::vector<DuplicateEntry> duplicate_report;

    const HarmonizedRecord* find(std::string_view name) const {
        auto it = std::lower_bound(datasets.begin(), datasets.end(), name,
                                   [](const HarmonizedRecord& r, std::string_view n) { return r.name() < n; });
        return it != datasets.end() && it->name() == name ? &*it : nullptr;
    }

    friend bool operator==(const CatalogManifest&, const CatalogManifest&) = default;
};

// ---------------------------------------------------------------------------
// Phase 2: clinical alignment
// ---------------------------------------------------------------------------

inline std::set<ClinicalApplication> clinical_applications_for(Task task) {
    using CA = ClinicalApplication;
    switch (task) {
        case Task::classification:
            return {CA::diagnosis, CA::severity_grading, CA::treatment_response};
        case Task::segmentation:
            return {CA::lesion_delineation, CA::volumetric_quantification, CA::therapy_planning};
        case Task::detection:
            return {CA::disease_screening};
        case Task::regression:
            return {CA::biomarker_quantification};
        default:
            return {CA::other};
    }
}

/// Union of the per-task clinical applications. Requires a non-empty task set.
inline std::set<ClinicalApplication> align_clinical(const std::set<Task>& tasks) {
    if (tasks.empty()) throw ContractError("align_clinical requires at least one task");
    std::set<ClinicalApplication> out;
    for (Task t : tasks) out.merge(clinical_applications_for(t));
    return out;
}

inline std::set<ClinicalApplication> align_clinical(const HarmonizedRecord& rec) { return align_clinical(rec.tasks); }

// ---------------------------------------------------------------------------
// Phase 1: per-record harmonization
// ---------------------------------------------------------------------------

struct HarmonizeOptions {
    /// Unmapped modality terms become errors instead of warnings.
    bool strict = false;
    int min_year = 1990;
    int max_year = 2100;
};

/// Lowercased, whitespace-collapsed organization tokens; "," and ";" both separate.
inline std::set<std::string> organization_tokens(std::span<const std::string> organization) {
    std::set<std::string> out;
    for (const auto& entry : organization) {
        for (const auto& piece : detail::split_any(entry, ",;")) {
            auto token = detail::fold_key(piece);
            if (!token.empty() && token != "na") out.insert(std::move(token));
        }
    }
    return out;
}

struct HarmonizeResult {
    std::optional<HarmonizedRecord> value;
    ValidationReport report;
};

inline HarmonizeResult harmonize_record(const DatasetRecord& raw, const Vocabulary& vocab, std::size_t line_no = 0,
                                        const HarmonizeOptions& options = {}) {
    HarmonizeResult result;
    auto& report = result.report;
    HarmonizedRecord rec;
    rec.base = raw;
    std::vector<std::string> notes;
    if (raw.notes) notes.push_back(*raw.notes);

    for (const auto& entry : raw.modality_primary) {
        for (const auto& term : detail::split_top_level_commas(entry)) {
            auto match = vocab.normalize_modality(term);
            if (match.diagnostic) {
                const std::string msg = "unmapped modality '" + term + "' recorded as OTHER";
                if (options.strict) report.error("modality_primary", msg, line_no);
                else report.warning("modality_primary", msg, line_no);
            }
            rec.modalities.push_back(std::move(match.modality));
        }
    }
    std::sort(rec.modalities.begin(), rec.modalities.end());
    rec.modalities.erase(std::unique(rec.modalities.begin(), rec.modalities.end()), rec.modalities.end());
    if (rec.modalities.empty()) report.error("modality_primary", "no modality after normalization", line_no);

    for (const auto& entry : raw.dimension) {
        try {
            rec.dimensions.merge(normalize_dimension(entry));
        } catch (const Error& e) {
            report.error("dimension", e.what(), line_no);
        }
    }
    if (rec.dimensions.empty()) report.error("dimension", "no dimension after normalization", line_no);

    std::string context = raw.disease.value_or("");
    for (const auto& s : raw.anatomical_structure) context += " " + s;
    for (const auto& entry : raw.task_type) {
        for (const auto& term : detail::split_top_level_commas(entry)) {
            try {
                auto match = vocab.normalize_task(term, context);
                if (match.note) {
                    report.warning("task_type", *match.note, line_no);
                    notes.push_back(*match.note);
                }
                rec.tasks.insert(match.task);
            } catch (const Error& e) {
                report.error("task_type", e.what(), line_no);
            }
        }
    }
    if (rec.tasks.empty()) report.error("task_type", "no task after normalization", line_no);

    for (const auto& entry : raw.anatomical_structure) {
        for (auto& path : vocab.classify_anatomy_all(entry)) rec.anatomy_paths.push_back(std::move(path));
    }
    if (rec.anatomy_paths.empty()) rec.anatomy_paths.push_back(vocab.classify_anatomy("NA"));

    if (raw.release_date) {
        int y = raw.release_date->year;
        if (y < options.min_year || y > options.max_year) {
            report.error("release_date",
                         "release year " + std::to_string(y) + " outside [" + std::to_string(options.min_year) + ", " +
                             std::to_string(options.max_year) + "]",
                         line_no);
        } else {
            rec.release_year = y;
        }
    }

    rec.org_tokens = organization_tokens(raw.organization);
    if (!rec.tasks.empty()) rec.clinical_applications = align_clinical(rec.tasks);
    rec.notes = detail::join(notes, "; ");

    if (report.ok()) result.value = std::move(rec);
    return result;
}

// ---------------------------------------------------------------------------
// Deduplication
// ---------------------------------------------------------------------------

/// Case-folded name with any trailing "(duplicate)" markers removed.
inline std::string dedupe_key(std::string_view name) {
    std::string key = detail::fold_key(name);
    constexpr std::string_view kSuffix = "(duplicate)";
    while (key.size() >= kSuffix.size() && key.compare(key.size() - kSuffix.size(), kSuffix.size(), kSuffix) == 0) {
        key = std::string(detail::trim(std::string_view(key).substr(0, key.size() - kSuffix.size())));
    }
    return key;
}

inline std::string homepage_key(std::string_view url) {
    std::string key = detail::to_lower(detail::trim(url));
    for (std::string_view prefix : {"https://", "http://"}) {
        if (key.starts_with(prefix)) {
            key.erase(0, prefix.size());
            break;
        }
    }
    if (key.starts_with("www.")) key.erase(0, 4);
    while (!key.empty() && key.back() == '/') key.pop_back();
    return key;
}

/// Keep priority among exact-name duplicates: annotated (labeled or mixed)
/// first, then larger valid_image_n, then lexicographic name. Canonical bytes
/// break any remaining tie so the choice never depends on input order.
inline bool keep_before(const HarmonizedRecord& a, const HarmonizedRecord& b) {
    bool la = has_annotations(a.base.label_presence), lb = has_annotations(b.base.label_presence);
    if (la != lb) return la;
    auto na = a.base.valid_image_n.total.value_or(-1), nb = b.base.valid_image_n.total.value_or(-1);
    if (na != nb) return na > nb;
    if (a.name() != b.name()) return a.name() < b.name();
    return canonical_serialize(a.base) < canonical_serialize(b.base);
}

struct DedupeResult {
    std::vector<HarmonizedRecord> records;  // sorted by dataset_name
    std::vector<DuplicateEntry> duplicate_report;
};

using OverlapHint = std::pair<std::string, std::string>;

inline DedupeResult dedupe(std::vector<HarmonizedRecord> records, std::span<const OverlapHint> overlap_hints = {}) {
    DedupeResult out;

    std::map<std::string, std::vector<HarmonizedRecord>> by_key;
    for (auto& r : records) by_key[dedupe_key(r.name())].push_back(std::move(r));
    for (auto& [key, group] : by_key) {
        std::sort(group.begin(), group.end(), keep_before);
        for (std::size_t i = 1; i < group.size(); ++i) {
            DuplicateEntry e;
            e.kept = group.front().name();
            e.dropped = group[i].name();
            e.reason = DuplicateReason::exact_name;
            if (detail::fold_key(group[i].name()) != key || detail::fold_key(group.front().name()) != key) {
                e.detail = "suffix_stripped";
            }
            out.duplicate_report.push_back(std::move(e));
        }
        out.records.push_back(std::move(group.front()));
    }
    std::sort(out.records.begin(), out.records.end(),
              [](const HarmonizedRecord& a, const HarmonizedRecord& b) { return a.name() < b.name(); });

    std::map<std::string, std::vector<std::string>> by_homepage;
    for (const auto& r : out.records) {
        if (r.base.homepage_url) by_homepage[homepage_key(*r.base.homepage_url)].push_back(r.name());
    }
    for (const auto& [url, names] : by_homepage) {
        for (std::size_t i = 1; i < names.size(); ++i) {
            out.duplicate_report.push_back(
                {names.front(), std::nullopt, names[i], DuplicateReason::same_homepage, "shared homepage " + url});
        }
    }

    auto resolve = [&](const std::string& name) -> const HarmonizedRecord* {
        const auto key = dedupe_key(name);
        for (const auto& r : out.records) {
            if (dedupe_key(r.name()) == key) return &r;
        }
        return nullptr;
    };
    std::set<std::pair<std::string, std::string>> seen;
    for (const auto& [a, b] : overlap_hints) {
        const auto* ra = resolve(a);
        const auto* rb = resolve(b);
        if (!ra || !rb || ra == rb) continue;
        if (!seen.insert({ra->name(), rb->name()}).second) continue;
        out.duplicate_report.push_back(
            {ra->name(), std::nullopt, rb->name(), DuplicateReason::declared_overlap, "declared overlap hint"});
    }

    std::sort(out.duplicate_report.begin(), out.duplicate_report.end());
    return out;
}

// ---------------------------------------------------------------------------
// Catalog build
// ---------------------------------------------------------------------------

/// Splits text into lines, dropping a trailing '\r' from each.
inline std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < text.size()) {
        auto eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        auto line = text.substr(pos, eol - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.emplace_back(line);
        pos = eol + 1;
    }
    return out;
}

/// `name_a<TAB>name_b` per line; blank lines and '#' comments are skipped.
inline std::vector<OverlapHint> parse_overlap_hints(std::string_view text) {
    std::vector<OverlapHint> out;
    std::size_t line_no = 0;
    for (const auto& line : split_lines(text)) {
        ++line_no;
        auto trimmed = detail::trim(line);
        if (trimmed.empty() || trimmed.front() == '#') continue;
        auto tab = line.find('\t');
        if (tab == std::string::npos) {
            throw InvalidInput("overlap hints line " + std::to_string(line_no) + ": expected name_a<TAB>name_b");
        }
        auto a = std::string(detail::trim(std::string_view(line).substr(0, tab)));
        auto b = std::string(detail::trim(std::string_view(line).substr(tab + 1)));
        if (a.empty() || b.empty()) {
            throw InvalidInput("overlap hints line " + std::to_string(line_no) + ": empty dataset name");
        }
        out.emplace_back(std::move(a), std::move(b));
    }
    return out;
}

struct BuildOptions {
    std::string generated_at;
    /// Any error-severity diagnostic aborts the build instead of dropping the record.
    bool strict = false;
};

struct BuildResult {
    std::optional<CatalogManifest> manifest;
    ValidationReport report;
    std::size_t records_read = 0;
    std::size_t annotations_read = 0;
};

/// Extracts the year from an ISO-8601 timestamp ("2024-06-01T00:00:00Z").
inline std::optional<int> timestamp_year(std::string_view ts) {
    if (ts.size() < 4) return std::nullopt;
    int y = 0;
    for (std::size_t i = 0; i < 4; ++i) {
        if (ts[i] < '0' || ts[i] > '9') return std::nullopt;
        y = y * 10 + (ts[i] - '0');
    }
    return y;
}

/// parse -> validate -> harmonize -> dedupe -> sort -> stamp. A pure function
/// of its inputs: the timestamp is a parameter, never the wall clock.
inline BuildResult build_catalog(std::span<const std::string> meta_lines, std::span<const std::string> annotation_lines,
                                 std::span<const OverlapHint> overlap_hints, const Vocabulary& vocab,
                                 const BuildOptions& options) {
    BuildResult result;
    auto& report = result.report;

    std::vector<Numbered<DatasetRecord>> records;
    for (std::size_t i = 0; i < meta_lines.size(); ++i) {
        if (detail::trim(meta_lines[i]).empty()) continue;
        ++result.records_read;
        auto parsed = parse_dataset_meta_line(meta_lines[i], i + 1);
        report.merge(parsed.report);
        if (parsed.value) records.push_back({std::move(*parsed.value), i + 1});
    }
    std::vector<Numbered<AnnotationEntry>> annotations;
    for (std::size_t i = 0; i < annotation_lines.size(); ++i) {
        if (detail::trim(annotation_lines[i]).empty()) continue;
        ++result.annotations_read;
        auto parsed = parse_annotation_line(annotation_lines[i], i + 1);
        report.merge(parsed.report);
        if (parsed.value) annotations.push_back({std::move(*parsed.value), i + 1});
    }

    auto catalog = validate_catalog(records, annotations, vocab, {.check_unique_names = false});
    // Record-level errors drop the record; "record.dataset_name" diagnostics
    // belong to annotation lines.
    std::set<std::size_t> rejected_lines;
    for (const auto& d : catalog.diagnostics) {
        if (d.severity == Severity::error && d.field != "record.dataset_name") rejected_lines.insert(d.line_no);
    }
    report.merge(catalog);

    HarmonizeOptions hopts;
    hopts.strict = options.strict;
    if (auto y = timestamp_year(options.generated_at)) hopts.max_year = *y + 1;

    // One error per (line, field) is enough; harmonize re-derives some of
    // what the catalog check already reported.
    using DiagKey = std::tuple<Severity, std::string, std::string, std::size_t>;
    std::set<DiagKey> seen;
    std::set<std::pair<std::size_t, std::string>> errored;
    for (const auto& d : catalog.diagnostics) {
        seen.emplace(d.severity, d.field, d.message, d.line_no);
        if (d.severity == Severity::error) errored.emplace(d.line_no, d.field);
    }

    std::vector<HarmonizedRecord> harmonized;
    for (const auto& [rec, line_no] : records) {
        auto h = harmonize_record(rec, vocab, line_no, hopts);
        for (auto& d : h.report.diagnostics) {
            if (d.severity == Severity::error && errored.contains({d.line_no, d.field})) continue;
            if (seen.emplace(d.severity, d.field, d.message, d.line_no).second) report.diagnostics.push_back(std::move(d));
        }
        if (h.value && !rejected_lines.contains(line_no)) harmonized.push_back(std::move(*h.value));
    }

    std::map<std::string, std::set<AnnotationType>> observed;
    for (const auto& [entry, line_no] : annotations) observed[entry.record.dataset_name].insert(entry.media_geometry.annotation_type);
    for (auto& h : harmonized) {
        if (auto it = observed.find(h.name()); it != observed.end()) h.annotation_types = it->second;
    }

    if (options.strict && !report.ok()) return result;

    auto deduped = dedupe(std::move(harmonized), overlap_hints);
    CatalogManifest manifest;
    manifest.vocab_version = vocab.version();
    manifest.generated_at = options.generated_at;
    manifest.datasets = std::move(deduped.records);
    manifest.duplicate_report = std::move(deduped.duplicate_report);
    result.manifest = std::move(manifest);
    return result;
}

}  // namespace fuseatlas
