#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/harmonize.hpp"
#include "fuseatlas/schema.hpp"
#include "fuseatlas/vocab.hpp"

namespace fuseatlas {

/// Declarative selection recipe. Set-valued fields keep their declared order
/// (fusion uses it as the attribution priority) but never hold duplicates.
/// An empty set means "any".
struct FilterRecipe {
    std::vector<Dimension> dimensions;
    std::vector<Modality> modalities;
    std::vector<Task> tasks;
    std::vector<std::string> anatomy_roots;
    std::vector<std::string> licenses_allow;
    std::int64_t min_valid_image_n = 0;
    std::optional<std::pair<int, int>> year_range;
    /// Accepted label_presence values; empty is "any", {labeled, mixed} is "labeled_only".
    std::set<LabelPresence> label_values;
    /// Accepted release years (facet induction); empty is "any".
    std::set<int> years;
    bool allow_3d_as_2d_sources = false;
    std::string text_query;

    bool labeled_only() const {
        return label_values == std::set<LabelPresence>{LabelPresence::labeled, LabelPresence::mixed};
    }

    friend bool operator==(const FilterRecipe&, const FilterRecipe&) = default;
};

inline std::set<LabelPresence> labeled_only_values() { return {LabelPresence::labeled, LabelPresence::mixed}; }

// ---------------------------------------------------------------------------
// Wire format
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json recipe_to_json(const FilterRecipe& r) {
    auto names = [](const auto& values) {
        nlohmann::ordered_json a = nlohmann::ordered_json::array();
        for (const auto& v : values) a.push_back(std::string(to_string(v)));
        return a;
    };
    nlohmann::ordered_json j;
    j["dimensions"] = names(r.dimensions);
    j["modalities"] = names(r.modalities);
    j["tasks"] = names(r.tasks);
    j["anatomy_roots"] = r.anatomy_roots;
    j["licenses_allow"] = r.licenses_allow;
    j["min_valid_image_n"] = r.min_valid_image_n;
    j["year_range"] = r.year_range ? nlohmann::ordered_json::array({r.year_range->first, r.year_range->second})
                                   : nlohmann::ordered_json(nullptr);
    if (r.label_values.empty()) {
        j["label_presence"] = "any";
    } else if (r.labeled_only()) {
        j["label_presence"] = "labeled_only";
    } else {
        j["label_presence"] = names(r.label_values);
    }
    j["allow_3d_as_2d_sources"] = r.allow_3d_as_2d_sources;
    j["text_query"] = r.text_query;
    if (!r.years.empty()) j["years"] = r.years;
    return j;
}

inline std::string recipe_to_string(const FilterRecipe& r) { return recipe_to_json(r).dump(); }

namespace detail {

template <typename T>
void push_unique(std::vector<T>& v, T value) {
    if (std::find(v.begin(), v.end(), value) == v.end()) v.push_back(std::move(value));
}

inline const nlohmann::json& recipe_array(const nlohmann::json& j, const std::string& field) {
    if (!j.is_array()) throw RecipeFieldError(field, "expected an array");
    for (const auto& e : j) {
        if (!e.is_string()) throw RecipeFieldError(field, "expected an array of strings, got " + e.dump());
    }
    return j;
}

template <typename E>
std::vector<E> recipe_enum_array(const nlohmann::json& j, const std::string& field) {
    std::vector<E> out;
    for (const auto& e : recipe_array(j, field)) {
        auto s = e.get<std::string>();
        auto v = enum_from_string<E>(s);
        if (!v) throw RecipeFieldError(field, "invalid value '" + s + "'");
        push_unique(out, *v);
    }
    return out;
}

inline int recipe_year(const nlohmann::json& j, const std::string& field) {
    if (!j.is_number_integer()) throw RecipeFieldError(field, "expected an integer year, got " + j.dump());
    auto y = j.get<std::int64_t>();
    if (y < 0 || y > 9999) throw RecipeFieldError(field, "year out of range: " + std::to_string(y));
    return static_cast<int>(y);
}

}  // namespace detail

inline constexpr std::array<std::string_view, 11> kRecipeFields{
    "dimensions", "modalities", "tasks", "anatomy_roots", "licenses_allow", "min_valid_image_n",
    "year_range", "label_presence", "allow_3d_as_2d_sources", "text_query", "years"};

/// Decodes recipe text. Absent fields take defaults; unknown keys are appended
/// to `warnings` when given.
inline FilterRecipe parse_recipe(std::string_view text, std::vector<std::string>* warnings = nullptr) {
    if (detail::trim(text).empty()) throw RecipeParseError("recipe text is empty", 0);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw RecipeParseError(e.what(), e.byte);
    }
    if (!j.is_object()) throw RecipeFieldError("$", "recipe must be an object");

    FilterRecipe r;
    for (const auto& [key, value] : j.items()) {
        if (key == "dimensions") {
            for (const auto& e : detail::recipe_array(value, key)) {
                auto s = e.get<std::string>();
                try {
                    detail::push_unique(r.dimensions, parse_single_dimension(s));
                } catch (const Error&) {
                    throw RecipeFieldError(key, "invalid value '" + s + "'");
                }
            }
        } else if (key == "modalities") {
            r.modalities = detail::recipe_enum_array<Modality>(value, key);
        } else if (key == "tasks") {
            r.tasks = detail::recipe_enum_array<Task>(value, key);
        } else if (key == "anatomy_roots") {
            for (const auto& e : detail::recipe_array(value, key)) {
                auto s = e.get<std::string>();
                if (!is_anatomy_root(s)) throw RecipeFieldError(key, "invalid value '" + s + "'");
                detail::push_unique(r.anatomy_roots, s);
            }
        } else if (key == "licenses_allow") {
            for (const auto& e : detail::recipe_array(value, key)) detail::push_unique(r.licenses_allow, e.get<std::string>());
        } else if (key == "min_valid_image_n") {
            if (!value.is_number_integer() || value.get<std::int64_t>() < 0) {
                throw RecipeFieldError(key, "expected a non-negative integer, got " + value.dump());
            }
            r.min_valid_image_n = value.get<std::int64_t>();
        } else if (key == "year_range") {
            if (value.is_null()) continue;
            if (!value.is_array() || value.size() != 2) throw RecipeFieldError(key, "expected null or [min_year, max_year]");
            int lo = detail::recipe_year(value[0], key), hi = detail::recipe_year(value[1], key);
            if (lo > hi) {
                throw RecipeFieldError(key, "inverted range [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            }
            r.year_range = {lo, hi};
        } else if (key == "label_presence") {
            if (value.is_string()) {
                auto s = value.get<std::string>();
                if (s == "any") r.label_values.clear();
                else if (s == "labeled_only") r.label_values = labeled_only_values();
                else throw RecipeFieldError(key, "invalid value '" + s + "'");
            } else if (value.is_array()) {
                for (auto v : detail::recipe_enum_array<LabelPresence>(value, key)) r.label_values.insert(v);
            } else {
                throw RecipeFieldError(key, "expected \"any\", \"labeled_only\" or an array");
            }
        } else if (key == "allow_3d_as_2d_sources") {
            if (!value.is_boolean()) throw RecipeFieldError(key, "expected a boolean, got " + value.dump());
            r.allow_3d_as_2d_sources = value.get<bool>();
        } else if (key == "text_query") {
            if (value.is_null()) continue;
            if (!value.is_string()) throw RecipeFieldError(key, "expected a string, got " + value.dump());
            r.text_query = value.get<std::string>();
        } else if (key == "years") {
            if (!value.is_array()) throw RecipeFieldError(key, "expected an array of years");
            for (const auto& e : value) r.years.insert(detail::recipe_year(e, key));
        } else if (warnings) {
            warnings->push_back("unknown recipe key '" + key + "' ignored");
        }
    }
    return r;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

inline constexpr std::string_view kProjected3dSource = "projected_3d_source";

struct SelectionSet {
    std::vector<std::string> names;  // sorted, unique
    std::string provenance;
    std::map<std::string, std::set<std::string>> flags;

    bool contains(std::string_view name) const { return std::binary_search(names.begin(), names.end(), name); }
    std::size_t size() const { return names.size(); }

    friend bool operator==(const SelectionSet&, const SelectionSet&) = default;
};

/// The recipe's independent predicates. The conjunction law holds over these.
enum class Predicate : std::uint8_t { dimension, modality, task, anatomy, license, min_images, year_range, label, years, text };

inline constexpr std::array<Predicate, 10> kAllPredicates{
    Predicate::dimension, Predicate::modality, Predicate::task,  Predicate::anatomy, Predicate::license,
    Predicate::min_images, Predicate::year_range, Predicate::label, Predicate::years, Predicate::text};

inline bool predicate_active(const FilterRecipe& r, Predicate p) {
    switch (p) {
        case Predicate::dimension: return !r.dimensions.empty();
        case Predicate::modality: return !r.modalities.empty();
        case Predicate::task: return !r.tasks.empty();
        case Predicate::anatomy: return !r.anatomy_roots.empty();
        case Predicate::license: return !r.licenses_allow.empty();
        case Predicate::min_images: return r.min_valid_image_n > 0;
        case Predicate::year_range: return r.year_range.has_value();
        case Predicate::label: return !r.label_values.empty();
        case Predicate::years: return !r.years.empty();
        case Predicate::text: return !r.text_query.empty();
    }
    return false;
}

/// A recipe keeping only predicate `p` of `r`; every other field at its default.
inline FilterRecipe single_predicate(const FilterRecipe& r, Predicate p) {
    FilterRecipe out;
    switch (p) {
        case Predicate::dimension:
            out.dimensions = r.dimensions;
            out.allow_3d_as_2d_sources = r.allow_3d_as_2d_sources;
            break;
        case Predicate::modality: out.modalities = r.modalities; break;
        case Predicate::task: out.tasks = r.tasks; break;
        case Predicate::anatomy: out.anatomy_roots = r.anatomy_roots; break;
        case Predicate::license: out.licenses_allow = r.licenses_allow; break;
        case Predicate::min_images: out.min_valid_image_n = r.min_valid_image_n; break;
        case Predicate::year_range: out.year_range = r.year_range; break;
        case Predicate::label: out.label_values = r.label_values; break;
        case Predicate::years: out.years = r.years; break;
        case Predicate::text: out.text_query = r.text_query; break;
    }
    return out;
}

struct EvaluateOptions {
    /// Require every dataset value on a set axis to be in the recipe set,
    /// instead of a non-empty intersection.
    bool strict_sets = false;
};

namespace detail {

template <typename Values, typename Wanted>
bool set_predicate(const Values& have, const Wanted& wanted, bool strict) {
    if (wanted.empty()) return true;
    auto in_wanted = [&](const auto& v) { return std::find(wanted.begin(), wanted.end(), v) != wanted.end(); };
    if (strict) return !have.empty() && std::all_of(have.begin(), have.end(), in_wanted);
    return std::any_of(have.begin(), have.end(), in_wanted);
}

}  // namespace detail

/// Concatenation of the fields free-text search looks at, one per line.
inline std::string searchable_text(const HarmonizedRecord& rec) {
    std::string s = rec.base.dataset_name;
    s += '\n';
    s += rec.base.dataset_description;
    for (const auto& o : rec.base.organization) s += '\n' + o;
    if (rec.base.disease) s += '\n' + *rec.base.disease;
    if (rec.base.challenge_series) s += '\n' + *rec.base.challenge_series;
    return s;
}

struct Verdict {
    bool selected = false;
    bool projected_3d_source = false;
};

inline Verdict evaluate_record(const FilterRecipe& r, const HarmonizedRecord& rec, const EvaluateOptions& options = {}) {
    Verdict v;
    const bool strict = options.strict_sets;

    if (!r.dimensions.empty()) {
        bool direct = detail::set_predicate(rec.dimensions, r.dimensions, strict);
        if (!direct) {
            const bool wants_2d = std::find(r.dimensions.begin(), r.dimensions.end(), Dimension::D2) != r.dimensions.end();
            if (wants_2d && r.allow_3d_as_2d_sources && rec.dimensions.contains(Dimension::D3)) {
                v.projected_3d_source = true;
            } else {
                return {};
            }
        }
    }
    if (!detail::set_predicate(rec.modality_codes(), r.modalities, strict)) return {};
    if (!detail::set_predicate(rec.tasks, r.tasks, strict)) return {};
    if (!detail::set_predicate(rec.anatomy_roots(), r.anatomy_roots, strict)) return {};
    if (!r.licenses_allow.empty() &&
        std::find(r.licenses_allow.begin(), r.licenses_allow.end(), rec.base.license) == r.licenses_allow.end()) {
        return {};
    }
    if (rec.base.valid_image_n.value_or_zero() < r.min_valid_image_n) return {};
    if (r.year_range) {
        if (!rec.release_year) return {};
        if (*rec.release_year < r.year_range->first || *rec.release_year > r.year_range->second) return {};
    }
    if (!r.label_values.empty() && !r.label_values.contains(rec.base.label_presence)) return {};
    if (!r.years.empty() && !(rec.release_year && r.years.contains(*rec.release_year))) return {};
    if (!r.text_query.empty() && !detail::icontains(searchable_text(rec), r.text_query)) return {};

    v.selected = true;
    return v;
}

inline SelectionSet evaluate_recipe(const FilterRecipe& r, const CatalogManifest& manifest,
                                    const EvaluateOptions& options = {}) {
    SelectionSet out;
    out.provenance = "recipe:" + recipe_to_string(r);
    for (const auto& rec : manifest.datasets) {
        auto v = evaluate_record(r, rec, options);
        if (!v.selected) continue;
        out.names.push_back(rec.name());
        if (v.projected_3d_source) out.flags[rec.name()].insert(std::string(kProjected3dSource));
    }
    std::sort(out.names.begin(), out.names.end());
    out.names.erase(std::unique(out.names.begin(), out.names.end()), out.names.end());
    return out;
}

// ---------------------------------------------------------------------------
// Facets
// ---------------------------------------------------------------------------

enum class FacetAxis : std::uint8_t { dimension, modality, task, anatomy_root, label_presence, year };

template <>
struct EnumNames<FacetAxis> {
    static constexpr std::array<std::string_view, 6> names{"dimension", "modality", "task",
                                                           "anatomy_root", "label_presence", "year"};
};

inline FacetAxis parse_facet_axis(std::string_view name) {
    auto axis = enum_from_string<FacetAxis>(name);
    if (!axis) throw FacetError("unknown facet axis '" + std::string(name) + "'");
    return *axis;
}

using FacetState = std::map<std::string, std::set<std::string>>;

/// Facet state -> recipe. Each axis fills its recipe set, the text fills
/// text_query; facet values are matched case-insensitively.
inline FilterRecipe induce(const FacetState& facets, std::string_view text = {}) {
    FilterRecipe r;
    auto bad = [](std::string_view axis, const std::string& v) {
        return FacetError("invalid value '" + v + "' for facet " + std::string(axis));
    };
    for (const auto& [axis_name, values] : facets) {
        const FacetAxis axis = parse_facet_axis(axis_name);
        for (const auto& v : values) {
            switch (axis) {
                case FacetAxis::dimension: {
                    auto d = enum_from_string<Dimension>(detail::to_lower(v) == "video" ? "video" : detail::to_upper(v));
                    if (!d) throw bad(axis_name, v);
                    detail::push_unique(r.dimensions, *d);
                    break;
                }
                case FacetAxis::modality: {
                    auto m = enum_from_string<Modality>(detail::to_upper(v));
                    if (!m) throw bad(axis_name, v);
                    detail::push_unique(r.modalities, *m);
                    break;
                }
                case FacetAxis::task: {
                    auto t = enum_from_string<Task>(detail::to_lower(v));
                    if (!t) throw bad(axis_name, v);
                    detail::push_unique(r.tasks, *t);
                    break;
                }
                case FacetAxis::anatomy_root: {
                    auto it = std::find_if(kAnatomyRoots.begin(), kAnatomyRoots.end(),
                                           [&](std::string_view root) { return detail::to_lower(root) == detail::to_lower(v); });
                    if (it == kAnatomyRoots.end()) throw bad(axis_name, v);
                    detail::push_unique(r.anatomy_roots, std::string(*it));
                    break;
                }
                case FacetAxis::label_presence: {
                    auto l = enum_from_string<LabelPresence>(detail::to_lower(v));
                    if (!l) throw bad(axis_name, v);
                    r.label_values.insert(*l);
                    break;
                }
                case FacetAxis::year: {
                    int y = 0;
                    auto s = detail::trim(v);
                    if (s.empty() || s.size() > 4 || !std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; })) {
                        throw bad(axis_name, v);
                    }
                    for (char c : s) y = y * 10 + (c - '0');
                    r.years.insert(y);
                    break;
                }
            }
        }
    }
    r.text_query = std::string(text);
    return r;
}

inline SelectionSet facet_filter(const FacetState& facets, std::string_view text, const CatalogManifest& manifest) {
    auto sel = evaluate_recipe(induce(facets, text), manifest);
    nlohmann::ordered_json state = nlohmann::ordered_json::object();
    for (const auto& [axis, values] : facets) state[axis] = values;
    sel.provenance = "facets:" + state.dump() + " text:" + nlohmann::json(std::string(text)).dump();
    return sel;
}

/// Values a record carries on `axis`, as wire strings in canonical order.
inline std::vector<std::string> axis_values(const HarmonizedRecord& rec, FacetAxis axis) {
    std::vector<std::string> out;
    switch (axis) {
        case FacetAxis::dimension:
            for (auto d : rec.dimensions) out.emplace_back(to_string(d));
            break;
        case FacetAxis::modality:
            for (auto m : rec.modality_codes()) out.emplace_back(to_string(m));
            break;
        case FacetAxis::task:
            for (auto t : rec.tasks) out.emplace_back(to_string(t));
            break;
        case FacetAxis::anatomy_root: {
            auto roots = rec.anatomy_roots();
            std::vector<std::string> v(roots.begin(), roots.end());
            std::sort(v.begin(), v.end(), [](const std::string& a, const std::string& b) {
                return anatomy_root_rank(a) < anatomy_root_rank(b);
            });
            out = std::move(v);
            break;
        }
        case FacetAxis::label_presence:
            out.emplace_back(to_string(rec.base.label_presence));
            break;
        case FacetAxis::year:
            out.push_back(rec.release_year ? std::to_string(*rec.release_year) : std::string("unknown"));
            break;
    }
    return out;
}

/// Every value the axis can take, in canonical order. The year axis has no
/// closed domain; it yields the values present in `manifest` plus "unknown".
inline std::vector<std::string> axis_domain(FacetAxis axis, const CatalogManifest& manifest) {
    std::vector<std::string> out;
    switch (axis) {
        case FacetAxis::dimension:
            for (auto v : all_values<Dimension>()) out.emplace_back(to_string(v));
            break;
        case FacetAxis::modality:
            for (auto v : all_values<Modality>()) out.emplace_back(to_string(v));
            break;
        case FacetAxis::task:
            for (auto v : all_values<Task>()) out.emplace_back(to_string(v));
            break;
        case FacetAxis::anatomy_root:
            for (auto v : kAnatomyRoots) out.emplace_back(v);
            break;
        case FacetAxis::label_presence:
            for (auto v : all_values<LabelPresence>()) out.emplace_back(to_string(v));
            break;
        case FacetAxis::year: {
            std::set<int> years;
            for (const auto& rec : manifest.datasets) {
                if (rec.release_year) years.insert(*rec.release_year);
            }
            for (int y : years) out.push_back(std::to_string(y));
            out.emplace_back("unknown");
            break;
        }
    }
    return out;
}

using FacetCounts = std::map<std::string, std::map<std::string, std::size_t>>;

/// Per-axis value counts over the selection. Multi-valued axes count a
/// dataset once per value it carries; zero-count values are listed too.
inline FacetCounts facet_counts(const CatalogManifest& manifest, const SelectionSet& selection) {
    FacetCounts out;
    for (auto axis : all_values<FacetAxis>()) {
        auto& counts = out[std::string(to_string(axis))];
        for (auto& v : axis_domain(axis, manifest)) counts[v] = 0;
    }
    for (const auto& name : selection.names) {
        const auto* rec = manifest.find(name);
        if (!rec) throw ContractError("selection names unknown dataset '" + name + "'");
        for (auto axis : all_values<FacetAxis>()) {
            auto& counts = out[std::string(to_string(axis))];
            for (const auto& v : axis_values(*rec, axis)) ++counts[v];
        }
    }
    return out;
}

}  // namespace fuseatlas
