#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/fusion.hpp"
#include "fuseatlas/harmonize.hpp"
#include "fuseatlas/query.hpp"
#include "fuseatlas/schema.hpp"

namespace fuseatlas {

// ---------------------------------------------------------------------------
// Manifest document
// ---------------------------------------------------------------------------

inline constexpr std::array<FacetAxis, 6> kIndexedAxes{FacetAxis::dimension,    FacetAxis::modality,
                                                       FacetAxis::task,         FacetAxis::anatomy_root,
                                                       FacetAxis::label_presence, FacetAxis::year};

/// axis -> value -> sorted dataset names. Only values some dataset carries appear.
inline std::map<std::string, std::map<std::string, std::vector<std::string>>> facet_index(const CatalogManifest& m) {
    std::map<std::string, std::map<std::string, std::vector<std::string>>> out;
    for (auto axis : kIndexedAxes) {
        auto& by_value = out[std::string(to_string(axis))];
        for (const auto& rec : m.datasets) {
            for (const auto& v : axis_values(rec, axis)) by_value[v].push_back(rec.name());
        }
        for (auto& [v, names] : by_value) std::sort(names.begin(), names.end());
    }
    return out;
}

inline nlohmann::ordered_json harmonized_to_json(const HarmonizedRecord& r) {
    using oj = nlohmann::ordered_json;
    oj h;
    h["modalities"] = oj::array();
    for (const auto& m : r.modalities) h["modalities"].push_back({{"code", to_string(m.code)}, {"subtype", m.subtype}});
    h["dimensions"] = oj::array();
    for (auto d : r.dimensions) h["dimensions"].push_back(to_string(d));
    h["tasks"] = oj::array();
    for (auto t : r.tasks) h["tasks"].push_back(to_string(t));
    h["anatomy_paths"] = oj::array();
    for (const auto& p : r.anatomy_paths) h["anatomy_paths"].push_back({{"levels", p.levels}, {"source_term", p.source_term}});
    h["anatomy_roots"] = axis_values(r, FacetAxis::anatomy_root);
    h["clinical_applications"] = oj::array();
    for (auto c : r.clinical_applications) h["clinical_applications"].push_back(to_string(c));
    h["release_year"] = r.release_year ? oj(*r.release_year) : oj(nullptr);
    h["org_tokens"] = r.org_tokens;
    h["annotation_types"] = oj::array();
    for (auto a : r.annotation_types) h["annotation_types"].push_back(to_string(a));
    h["notes"] = r.notes;

    oj j = record_to_json(r.base);
    j["harmonized"] = std::move(h);
    return j;
}

inline nlohmann::ordered_json manifest_to_json(const CatalogManifest& m) {
    using oj = nlohmann::ordered_json;
    oj j;
    j["version"] = m.version;
    j["vocab_version"] = m.vocab_version;
    j["generated_at"] = m.generated_at;
    j["datasets"] = oj::array();
    for (const auto& r : m.datasets) j["datasets"].push_back(harmonized_to_json(r));
    oj index = oj::object();
    for (const auto& [axis, by_value] : facet_index(m)) {
        oj values = oj::object();
        for (const auto& [v, names] : by_value) values[v] = names;
        index[axis] = std::move(values);
    }
    j["facet_index"] = std::move(index);
    j["duplicate_report"] = oj::array();
    for (const auto& e : m.duplicate_report) {
        oj d;
        d["kept"] = e.kept;
        d["dropped"] = e.dropped ? oj(*e.dropped) : oj(nullptr);
        d["related"] = e.related ? oj(*e.related) : oj(nullptr);
        d["reason"] = to_string(e.reason);
        d["detail"] = e.detail;
        j["duplicate_report"].push_back(std::move(d));
    }
    return j;
}

/// Canonical manifest bytes: 2-space indentation, trailing newline.
inline std::string manifest_to_string(const CatalogManifest& m) {
    return manifest_to_json(m).dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

namespace detail {

template <typename E>
E manifest_enum(const nlohmann::json& j, std::string_view what) {
    if (!j.is_string()) throw ManifestError(std::string(what) + ": expected a string");
    auto v = enum_from_string<E>(j.get<std::string>());
    if (!v) throw ManifestError(std::string(what) + ": invalid value '" + j.get<std::string>() + "'");
    return *v;
}

inline HarmonizedRecord harmonized_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("harmonized")) throw ManifestError("dataset entry lacks a harmonized block");
    nlohmann::json raw = j;
    raw.erase("harmonized");
    auto parsed = parse_dataset_meta_line(raw.dump(), 0);
    if (!parsed.value) {
        const auto& d = parsed.report.diagnostics.front();
        throw ManifestError("invalid dataset entry: " + d.field + ": " + d.message);
    }
    HarmonizedRecord r;
    r.base = std::move(*parsed.value);
    const auto& h = j.at("harmonized");
    for (const auto& m : h.at("modalities")) {
        r.modalities.push_back({manifest_enum<Modality>(m.at("code"), "modality"), m.at("subtype").get<std::string>()});
    }
    for (const auto& d : h.at("dimensions")) {
        r.dimensions.insert(manifest_enum<Dimension>(d, "dimension"));
    }
    for (const auto& t : h.at("tasks")) r.tasks.insert(manifest_enum<Task>(t, "task"));
    for (const auto& p : h.at("anatomy_paths")) {
        r.anatomy_paths.push_back({p.at("levels").get<std::vector<std::string>>(), p.at("source_term").get<std::string>()});
    }
    for (const auto& c : h.at("clinical_applications")) {
        r.clinical_applications.insert(manifest_enum<ClinicalApplication>(c, "clinical_application"));
    }
    if (!h.at("release_year").is_null()) r.release_year = h.at("release_year").get<int>();
    for (const auto& o : h.at("org_tokens")) r.org_tokens.insert(o.get<std::string>());
    for (const auto& a : h.at("annotation_types")) r.annotation_types.insert(manifest_enum<AnnotationType>(a, "annotation_type"));
    r.notes = h.at("notes").get<std::string>();
    return r;
}

}  // namespace detail

/// Inverse of manifest_to_string. The facet index is derived data and is
/// rebuilt rather than read back.
inline CatalogManifest parse_manifest(std::string_view text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ManifestError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ManifestError("manifest must be an object");
    if (!j.contains("version") || j["version"] != kManifestVersion) {
        throw ManifestError("unsupported manifest version " + (j.contains("version") ? j["version"].dump() : std::string("(missing)")));
    }
    CatalogManifest m;
    try {
        m.vocab_version = j.at("vocab_version").get<std::string>();
        m.generated_at = j.at("generated_at").get<std::string>();
        for (const auto& d : j.at("datasets")) m.datasets.push_back(detail::harmonized_from_json(d));
        for (const auto& e : j.at("duplicate_report")) {
            DuplicateEntry d;
            d.kept = e.at("kept").get<std::string>();
            if (!e.at("dropped").is_null()) d.dropped = e.at("dropped").get<std::string>();
            if (!e.at("related").is_null()) d.related = e.at("related").get<std::string>();
            d.reason = detail::manifest_enum<DuplicateReason>(e.at("reason"), "reason");
            d.detail = e.at("detail").get<std::string>();
            m.duplicate_report.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ManifestError(std::string("malformed manifest: ") + e.what());
    }
    if (!std::is_sorted(m.datasets.begin(), m.datasets.end(),
                        [](const HarmonizedRecord& a, const HarmonizedRecord& b) { return a.name() < b.name(); })) {
        throw ManifestError("manifest datasets are not sorted by dataset_name");
    }
    return m;
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("error reading '" + path + "'");
    return ss.str();
}

inline std::size_t write_file(const std::string& path, std::string_view bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) throw IoError("error writing '" + path + "'");
    return bytes.size();
}

inline std::size_t export_manifest(const CatalogManifest& m, const std::string& path) {
    return write_file(path, manifest_to_string(m));
}

inline CatalogManifest load_manifest(const std::string& path) { return parse_manifest(read_file(path)); }

// ---------------------------------------------------------------------------
// Audit table
// ---------------------------------------------------------------------------

inline constexpr std::array<std::string_view, 10> kAuditColumns{
    "name", "dimension", "modality", "task", "organ", "images", "year", "organization", "license", "link"};

using AuditRow = std::array<std::string, 10>;

inline AuditRow audit_row(const HarmonizedRecord& r) {
    auto na_if_empty = [](std::string s) { return s.empty() ? std::string("NA") : s; };
    AuditRow row;
    row[0] = r.name();
    row[1] = detail::join(axis_values(r, FacetAxis::dimension), "; ");
    row[2] = detail::join(axis_values(r, FacetAxis::modality), "; ");
    row[3] = detail::join(axis_values(r, FacetAxis::task), "; ");
    row[4] = r.anatomy_paths.empty() ? std::string("NA") : r.anatomy_paths.front().leaf();
    row[5] = r.base.valid_image_n.total ? std::to_string(*r.base.valid_image_n.total) : std::string("NA");
    row[6] = r.release_year ? std::to_string(*r.release_year) : std::string("NA");
    row[7] = na_if_empty(detail::join(r.base.organization, "; "));
    row[8] = r.base.license;
    row[9] = r.base.homepage_url.value_or("NA");
    return row;
}

inline std::vector<AuditRow> audit_rows(const SelectionSet& selection, const CatalogManifest& m) {
    std::vector<AuditRow> rows;
    for (const auto& name : selection.names) {
        const auto* rec = m.find(name);
        if (!rec) throw ContractError("selection names unknown dataset '" + name + "'");
        rows.push_back(audit_row(*rec));
    }
    std::sort(rows.begin(), rows.end());
    return rows;
}

namespace detail {

inline std::string csv_field(std::string_view s) {
    if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

}  // namespace detail

enum class AuditFormat : std::uint8_t { csv, json };

template <>
struct EnumNames<AuditFormat> {
    static constexpr std::array<std::string_view, 2> names{"csv", "json"};
};

inline std::string export_audit(const SelectionSet& selection, const CatalogManifest& m, AuditFormat format) {
    const auto rows = audit_rows(selection, m);
    if (format == AuditFormat::csv) {
        std::string out;
        std::vector<std::string> header(kAuditColumns.begin(), kAuditColumns.end());
        out += detail::join(header, ",") + "\n";
        for (const auto& row : rows) {
            std::vector<std::string> cells;
            for (const auto& c : row) cells.push_back(detail::csv_field(c));
            out += detail::join(cells, ",") + "\n";
        }
        return out;
    }
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& row : rows) {
        nlohmann::ordered_json o;
        for (std::size_t i = 0; i < kAuditColumns.size(); ++i) o[std::string(kAuditColumns[i])] = row[i];
        arr.push_back(std::move(o));
    }
    return arr.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n";
}

// ---------------------------------------------------------------------------
// Statistics
// ---------------------------------------------------------------------------

struct HistogramBin {
    std::string value;
    std::int64_t dataset_count = 0;
    std::int64_t image_sum = 0;

    friend bool operator==(const HistogramBin&, const HistogramBin&) = default;
};

struct Histogram {
    std::string axis;
    std::vector<HistogramBin> bins;  // canonical value order, non-empty bins only
};

inline FacetAxis parse_distribution_axis(std::string_view name) {
    auto axis = enum_from_string<FacetAxis>(name);
    if (!axis || *axis == FacetAxis::year) throw AxisError("unsupported distribution axis '" + std::string(name) + "'");
    return *axis;
}

/// Dataset counts per carried value; image sums under exclusive attribution
/// in canonical order so the bins partition the selection's images.
inline Histogram distribution(const SelectionSet& selection, const CatalogManifest& m, FacetAxis axis) {
    if (axis == FacetAxis::year) throw AxisError("year has no histogram; use yearly_totals");
    std::map<std::string, HistogramBin> bins;
    for (const auto& name : selection.names) {
        const auto* rec = m.find(name);
        if (!rec) throw ContractError("selection names unknown dataset '" + name + "'");
        for (const auto& v : axis_values(*rec, axis)) {
            bins[v].value = v;
            ++bins[v].dataset_count;
        }
        bins[attribute(*rec, axis)].image_sum += rec->base.valid_image_n.value_or_zero();
    }
    Histogram h;
    h.axis = std::string(to_string(axis));
    for (const auto& v : axis_domain(axis, m)) {
        if (auto it = bins.find(v); it != bins.end()) h.bins.push_back(it->second);
    }
    return h;
}

struct YearBin {
    int year = 0;
    std::int64_t image_sum = 0;
    std::int64_t dataset_count = 0;

    friend bool operator==(const YearBin&, const YearBin&) = default;
};

struct YearlyTotals {
    std::vector<YearBin> years;  // ascending
    std::int64_t unknown_image_sum = 0;
    std::int64_t unknown_dataset_count = 0;
};

inline YearlyTotals yearly_totals(const SelectionSet& selection, const CatalogManifest& m) {
    std::map<int, YearBin> by_year;
    YearlyTotals out;
    for (const auto& name : selection.names) {
        const auto* rec = m.find(name);
        if (!rec) throw ContractError("selection names unknown dataset '" + name + "'");
        const auto images = rec->base.valid_image_n.value_or_zero();
        if (rec->release_year) {
            auto& bin = by_year[*rec->release_year];
            bin.year = *rec->release_year;
            bin.image_sum += images;
            ++bin.dataset_count;
        } else {
            out.unknown_image_sum += images;
            ++out.unknown_dataset_count;
        }
    }
    for (const auto& [y, bin] : by_year) out.years.push_back(bin);
    return out;
}

inline std::int64_t selection_image_total(const SelectionSet& selection, const CatalogManifest& m) {
    std::int64_t total = 0;
    for (const auto& name : selection.names) {
        if (const auto* rec = m.find(name)) total += rec->base.valid_image_n.value_or_zero();
    }
    return total;
}

}  // namespace fuseatlas
