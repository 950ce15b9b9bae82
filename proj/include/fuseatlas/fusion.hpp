#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/harmonize.hpp"
#include "fuseatlas/query.hpp"

namespace fuseatlas {

inline constexpr std::string_view kBlueprintVersion = "fuseatlas-blueprint/1";

// ---------------------------------------------------------------------------
// Exclusive attribution
// ---------------------------------------------------------------------------

/// The recipe's declared order for `axis`, as wire strings. Empty when the
/// recipe leaves the axis open.
inline std::vector<std::string> declared_order(const FilterRecipe& r, FacetAxis axis) {
    std::vector<std::string> out;
    switch (axis) {
        case FacetAxis::dimension:
            for (auto d : r.dimensions) out.emplace_back(to_string(d));
            break;
        case FacetAxis::modality:
            for (auto m : r.modalities) out.emplace_back(to_string(m));
            break;
        case FacetAxis::task:
            for (auto t : r.tasks) out.emplace_back(to_string(t));
            break;
        case FacetAxis::anatomy_root:
            out = r.anatomy_roots;
            break;
        case FacetAxis::label_presence:
            for (auto l : r.label_values) out.emplace_back(to_string(l));
            break;
        case FacetAxis::year:
            for (int y : r.years) out.push_back(std::to_string(y));
            break;
    }
    return out;
}

/// The single value a record is attributed to on `axis`: the first value of
/// `priority` the record carries, else its first value in canonical order.
inline std::string attribute(const HarmonizedRecord& rec, FacetAxis axis, const std::vector<std::string>& priority = {}) {
    const auto values = axis_values(rec, axis);
    for (const auto& p : priority) {
        if (std::find(values.begin(), values.end(), p) != values.end()) return p;
    }
    if (values.empty()) throw ContractError("dataset '" + rec.name() + "' carries no value on axis " + std::string(to_string(axis)));
    return values.front();
}

/// Group keys ordered by priority list first, then canonical domain order.
inline std::vector<std::string> group_order(FacetAxis axis, const std::vector<std::string>& priority,
                                            const CatalogManifest& manifest) {
    std::vector<std::string> out = priority;
    for (auto& v : axis_domain(axis, manifest)) detail::push_unique(out, v);
    return out;
}

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

/// k/n rounded half-up to 3 decimals, computed in integers so 0.9525 cannot
/// land on the wrong side through floating-point error.
inline std::string ratio_3dp(std::int64_t k, std::int64_t n) {
    if (n <= 0 || k < 0 || k > n) throw ContractError("ratio_3dp needs 0 <= k <= n, n > 0");
    const std::int64_t thousandths = (2000 * k + n) / (2 * n);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(thousandths / 1000),
                  static_cast<long long>(thousandths % 1000));
    return buf;
}

/// Fraction of members that carry annotations (labeled or mixed).
inline double labeled_ratio(const std::vector<const HarmonizedRecord*>& members) {
    if (members.empty()) throw ContractError("labeled_ratio of an empty group is undefined");
    auto k = std::count_if(members.begin(), members.end(),
                           [](const HarmonizedRecord* r) { return has_annotations(r->base.label_presence); });
    return static_cast<double>(k) / static_cast<double>(members.size());
}

struct GroupSummary {
    std::string key;
    std::int64_t n_datasets = 0;
    std::int64_t sum_image = 0;
    std::int64_t n_orgs = 0;
    std::int64_t n_labeled = 0;
    std::int64_t n_mixed = 0;
    std::int64_t n_unlabeled = 0;
    double storage_gb = 0.0;
    std::int64_t n_storage_known = 0;
    std::vector<std::string> members;

    std::int64_t n_annotated() const { return n_labeled + n_mixed; }

    std::optional<double> labeled_ratio() const {
        if (n_datasets == 0) return std::nullopt;
        return static_cast<double>(n_annotated()) / static_cast<double>(n_datasets);
    }

    /// "0.952"; empty for an empty group.
    std::string labeled_ratio_text() const { return n_datasets == 0 ? std::string() : ratio_3dp(n_annotated(), n_datasets); }

    double storage_known_fraction() const {
        return n_datasets == 0 ? 0.0 : static_cast<double>(n_storage_known) / static_cast<double>(n_datasets);
    }

    friend bool operator==(const GroupSummary&, const GroupSummary&) = default;
};

inline GroupSummary summarize(std::string key, const std::vector<const HarmonizedRecord*>& members) {
    GroupSummary g;
    g.key = std::move(key);
    std::set<std::string> orgs;
    for (const auto* r : members) {
        ++g.n_datasets;
        g.sum_image += r->base.valid_image_n.value_or_zero();
        orgs.insert(r->org_tokens.begin(), r->org_tokens.end());
        switch (r->base.label_presence) {
            case LabelPresence::labeled: ++g.n_labeled; break;
            case LabelPresence::mixed: ++g.n_mixed; break;
            case LabelPresence::unlabeled: ++g.n_unlabeled; break;
        }
        if (r->base.storage_size_gb) {
            g.storage_gb += *r->base.storage_size_gb;
            ++g.n_storage_known;
        }
        g.members.push_back(r->name());
    }
    g.n_orgs = static_cast<std::int64_t>(orgs.size());
    std::sort(g.members.begin(), g.members.end());
    return g;
}

// ---------------------------------------------------------------------------
// Compatibility
// ---------------------------------------------------------------------------

enum class CompatibilityFlag : std::uint8_t { mixed_annotation_types, mixed_dimensions, protocol_heterogeneity };

template <>
struct EnumNames<CompatibilityFlag> {
    static constexpr std::array<std::string_view, 3> names{"mixed_annotation_types", "mixed_dimensions",
                                                           "protocol_heterogeneity"};
};

struct CompatibilityNote {
    std::string group_key;
    CompatibilityFlag flag = CompatibilityFlag::mixed_annotation_types;
    std::string detail;

    friend bool operator==(const CompatibilityNote&, const CompatibilityNote&) = default;
};

inline bool is_spatial(AnnotationType t) {
    switch (t) {
        case AnnotationType::mask:
        case AnnotationType::box:
        case AnnotationType::polygon:
        case AnnotationType::landmark:
        case AnnotationType::keypoints:
            return true;
        default:
            return false;
    }
}

/// Spatial label geometries of a record: observed annotation types when there
/// are any, else the geometries its task families imply.
inline std::set<AnnotationType> label_geometries(const HarmonizedRecord& rec) {
    std::set<AnnotationType> out;
    if (!rec.annotation_types.empty()) {
        for (auto t : rec.annotation_types) {
            if (is_spatial(t)) out.insert(t);
        }
        return out;
    }
    for (auto t : rec.tasks) {
        if (t == Task::segmentation) out.insert(AnnotationType::mask);
        if (t == Task::detection || t == Task::localization) out.insert(AnnotationType::box);
    }
    return out;
}

inline std::vector<CompatibilityNote> compatibility_flags(const std::string& group_key,
                                                          const std::vector<const HarmonizedRecord*>& members,
                                                          FacetAxis axis = FacetAxis::modality) {
    std::vector<CompatibilityNote> out;
    if (members.size() < 2) return out;

    std::set<AnnotationType> geometries;
    for (const auto* r : members) geometries.merge(label_geometries(*r));
    if (geometries.size() > 1) {
        std::vector<std::string> names;
        for (auto g : geometries) names.emplace_back(to_string(g));
        out.push_back({group_key, CompatibilityFlag::mixed_annotation_types, detail::join(names, ", ")});
    }

    std::set<std::set<Dimension>> dim_sets;
    for (const auto* r : members) dim_sets.insert(r->dimensions);
    if (dim_sets.size() > 1) {
        std::vector<std::string> parts;
        for (const auto& s : dim_sets) {
            std::vector<std::string> names;
            for (auto d : s) names.emplace_back(to_string(d));
            parts.push_back("{" + detail::join(names, ",") + "}");
        }
        out.push_back({group_key, CompatibilityFlag::mixed_dimensions, detail::join(parts, " vs ")});
    }

    if (axis == FacetAxis::modality) {
        std::set<std::string> protocols;
        for (const auto* r : members) {
            if (!r->base.modality_secondary) continue;
            auto key = detail::fold_key(*r->base.modality_secondary);
            if (!key.empty() && key != "na") protocols.insert(std::move(key));
        }
        if (protocols.size() > 1) {
            out.push_back({group_key, CompatibilityFlag::protocol_heterogeneity, detail::join(protocols, " vs ")});
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sampling weights
// ---------------------------------------------------------------------------

/// weight_i proportional to sum_image_i^(1/temperature), normalized to 1.
inline std::map<std::string, double> sampling_weights(const std::vector<GroupSummary>& groups, double temperature) {
    if (!(temperature > 0.0) || !std::isfinite(temperature)) {
        throw WeightError("temperature must be a positive finite number");
    }
    std::map<std::string, double> out;
    if (groups.empty()) return out;
    std::vector<double> logs;
    for (const auto& g : groups) {
        if (g.sum_image <= 0) throw WeightError("group '" + g.key + "' has no images");
        logs.push_back(std::log(static_cast<double>(g.sum_image)) / temperature);
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double total = 0.0;
    std::vector<double> raw;
    for (double l : logs) {
        raw.push_back(std::exp(l - top));
        total += raw.back();
    }
    for (std::size_t i = 0; i < groups.size(); ++i) out[groups[i].key] = raw[i] / total;
    return out;
}

// ---------------------------------------------------------------------------
// Blueprint
// ---------------------------------------------------------------------------

struct AttributionNote {
    std::string dataset;
    std::vector<std::string> values;
    std::string attributed_to;

    friend bool operator==(const AttributionNote&, const AttributionNote&) = default;
};

struct BlueprintOptions {
    /// Carried into the document as-is; nothing enforces it.
    std::optional<std::int64_t> per_dataset_cap;
    std::optional<double> temperature;
};

struct FusionBlueprint {
    FilterRecipe recipe;
    FacetAxis group_axis = FacetAxis::modality;
    SelectionSet selection;
    std::vector<GroupSummary> groups;
    GroupSummary totals;
    std::vector<CompatibilityNote> compatibility;
    std::vector<AttributionNote> attribution_notes;
    std::optional<std::int64_t> per_dataset_cap;
    std::optional<double> temperature;
    std::map<std::string, double> sampling_weights;

    const GroupSummary* group(std::string_view key) const {
        for (const auto& g : groups) {
            if (g.key == key) return &g;
        }
        return nullptr;
    }
};

inline bool is_group_axis(FacetAxis axis) {
    return axis == FacetAxis::modality || axis == FacetAxis::task || axis == FacetAxis::anatomy_root ||
           axis == FacetAxis::dimension;
}

inline FacetAxis parse_group_axis(std::string_view name) {
    auto axis = enum_from_string<FacetAxis>(name);
    if (!axis || !is_group_axis(*axis)) throw AxisError("unsupported grouping axis '" + std::string(name) + "'");
    return *axis;
}

inline FusionBlueprint build_blueprint(const FilterRecipe& recipe, const CatalogManifest& manifest, FacetAxis axis,
                                       const BlueprintOptions& options = {}) {
    if (!is_group_axis(axis)) throw AxisError("unsupported grouping axis '" + std::string(to_string(axis)) + "'");
    FusionBlueprint bp;
    bp.recipe = recipe;
    bp.group_axis = axis;
    bp.per_dataset_cap = options.per_dataset_cap;
    bp.temperature = options.temperature;
    bp.selection = evaluate_recipe(recipe, manifest);

    const auto priority = declared_order(recipe, axis);
    std::map<std::string, std::vector<const HarmonizedRecord*>> by_key;
    std::vector<const HarmonizedRecord*> all;
    for (const auto& name : bp.selection.names) {
        const auto* rec = manifest.find(name);
        all.push_back(rec);
        const auto key = attribute(*rec, axis, priority);
        by_key[key].push_back(rec);
        auto values = axis_values(*rec, axis);
        if (values.size() > 1) bp.attribution_notes.push_back({name, std::move(values), key});
    }

    for (const auto& key : group_order(axis, priority, manifest)) {
        auto it = by_key.find(key);
        if (it == by_key.end()) continue;
        bp.groups.push_back(summarize(key, it->second));
        for (auto& note : compatibility_flags(key, it->second, axis)) bp.compatibility.push_back(std::move(note));
    }
    bp.totals = summarize("total", all);
    if (options.temperature) bp.sampling_weights = sampling_weights(bp.groups, *options.temperature);
    return bp;
}

/// Short labels used in the human-readable table.
inline std::string group_label(FacetAxis axis, const std::string& key) {
    if (axis != FacetAxis::modality) return key;
    static const std::map<std::string, std::string> labels{
        {"XRAY", "X-ray"},           {"MRI", "MR"},         {"ULTRASOUND", "Ultrasound"}, {"PATHOLOGY", "Pathology"},
        {"ENDOSCOPY", "Endoscopy"},  {"FUNDUS", "Fundus"},  {"DERMOSCOPY", "Dermoscopy"}, {"MAMMOGRAPHY", "Mammography"},
        {"MICROSCOPY", "Microscopy"}, {"INFRARED", "Infrared"}, {"OTHER", "Other"}};
    auto it = labels.find(key);
    return it == labels.end() ? key : it->second;
}

namespace detail {

inline nlohmann::ordered_json summary_to_json(const GroupSummary& g, FacetAxis axis) {
    nlohmann::ordered_json j;
    j["key"] = g.key;
    j["label"] = g.key == "total" ? std::string("Total") : group_label(axis, g.key);
    j["n_datasets"] = g.n_datasets;
    j["sum_image"] = g.sum_image;
    j["n_orgs"] = g.n_orgs;
    if (g.n_datasets > 0) j["labeled_ratio"] = std::stod(g.labeled_ratio_text());
    else j["labeled_ratio"] = nullptr;
    j["label_breakdown"] = {{"labeled", g.n_labeled}, {"mixed", g.n_mixed}, {"unlabeled", g.n_unlabeled}};
    j["storage_gb"] = real_to_json(g.storage_gb);
    j["storage_known_fraction"] = real_to_json(g.storage_known_fraction());
    j["members"] = g.members;
    return j;
}

}  // namespace detail

inline nlohmann::ordered_json blueprint_to_json(const FusionBlueprint& bp) {
    nlohmann::ordered_json j;
    j["version"] = kBlueprintVersion;
    j["group_by"] = to_string(bp.group_axis);
    j["recipe"] = recipe_to_json(bp.recipe);
    j["selection"] = bp.selection.names;
    nlohmann::ordered_json flags = nlohmann::ordered_json::object();
    for (const auto& [name, f] : bp.selection.flags) flags[name] = f;
    j["selection_flags"] = std::move(flags);
    j["groups"] = nlohmann::ordered_json::array();
    for (const auto& g : bp.groups) j["groups"].push_back(detail::summary_to_json(g, bp.group_axis));
    j["totals"] = detail::summary_to_json(bp.totals, bp.group_axis);
    j["compatibility"] = nlohmann::ordered_json::array();
    for (const auto& c : bp.compatibility) {
        j["compatibility"].push_back({{"group_key", c.group_key}, {"flag", to_string(c.flag)}, {"detail", c.detail}});
    }
    j["attribution_notes"] = nlohmann::ordered_json::array();
    for (const auto& a : bp.attribution_notes) {
        j["attribution_notes"].push_back({{"dataset", a.dataset}, {"values", a.values}, {"attributed_to", a.attributed_to}});
    }
    j["per_dataset_cap"] = bp.per_dataset_cap ? nlohmann::ordered_json(*bp.per_dataset_cap) : nlohmann::ordered_json(nullptr);
    if (bp.temperature) {
        nlohmann::ordered_json weights = nlohmann::ordered_json::object();
        for (const auto& g : bp.groups) weights[g.key] = bp.sampling_weights.at(g.key);
        j["sampling"] = {{"temperature", *bp.temperature}, {"weights", std::move(weights)}};
    } else {
        j["sampling"] = nullptr;
    }
    return j;
}

/// Table in the column order axis, n_datasets, sum_image, n_orgs, labeled_ratio.
/// Numbers print bare so rows can be grepped and diffed.
inline std::string blueprint_table(const FusionBlueprint& bp) {
    std::vector<std::string> labels{std::string(to_string(bp.group_axis))};
    for (const auto& g : bp.groups) labels.push_back(group_label(bp.group_axis, g.key));
    labels.emplace_back("Total");
    std::size_t width = 0;
    for (const auto& l : labels) width = std::max(width, l.size());

    auto line = [&](const std::string& label, const std::vector<std::string>& cells) {
        std::string s = label + std::string(width - label.size() + 2, ' ') + detail::join(cells, "  ");
        return s + "\n";
    };
    auto row = [&](const std::string& label, const GroupSummary& g) {
        return line(label, {std::to_string(g.n_datasets), std::to_string(g.sum_image), std::to_string(g.n_orgs),
                            g.n_datasets ? g.labeled_ratio_text() : std::string("NA")});
    };
    std::string out = line(labels.front(), {"n_datasets", "sum_image", "n_orgs", "labeled_ratio"});
    for (const auto& g : bp.groups) out += row(group_label(bp.group_axis, g.key), g);
    out += row("Total", bp.totals);
    return out;
}

}  // namespace fuseatlas
