#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fuseatlas/detail/text.hpp"
#include "fuseatlas/error.hpp"

namespace fuseatlas {

// ---------------------------------------------------------------------------
// Closed enumerations
// ---------------------------------------------------------------------------

enum class Modality : std::uint8_t {
    XRAY, CT, MRI, ULTRASOUND, PET, PATHOLOGY, ENDOSCOPY, FUNDUS, DERMOSCOPY,
    MAMMOGRAPHY, FFA, OCT, MICROSCOPY, INFRARED, ECG, EEG, EMG, DSA, CBCT, OCTA,
    RGB, OTHER
};

enum class Dimension : std::uint8_t { D2, D3, Video };

enum class Task : std::uint8_t {
    segmentation, classification, registration, generation, detection, tracking,
    reconstruction, regression, localization, vqa, captioning, report_generation
};

enum class ClinicalApplication : std::uint8_t {
    diagnosis, severity_grading, treatment_response, lesion_delineation,
    volumetric_quantification, therapy_planning, disease_screening,
    biomarker_quantification, other
};

template <typename E>
struct EnumNames;

template <>
struct EnumNames<Modality> {
    static constexpr std::array<std::string_view, 22> names{
        "XRAY", "CT", "MRI", "ULTRASOUND", "PET", "PATHOLOGY", "ENDOSCOPY", "FUNDUS",
        "DERMOSCOPY", "MAMMOGRAPHY", "FFA", "OCT", "MICROSCOPY", "INFRARED", "ECG",
        "EEG", "EMG", "DSA", "CBCT", "OCTA", "RGB", "OTHER"};
};

template <>
struct EnumNames<Dimension> {
    static constexpr std::array<std::string_view, 3> names{"2D", "3D", "video"};
};

template <>
struct EnumNames<Task> {
    static constexpr std::array<std::string_view, 12> names{
        "segmentation", "classification", "registration", "generation",
        "detection", "tracking", "reconstruction", "regression",
        "localization", "vqa", "captioning", "report_generation"};
};

template <>
struct EnumNames<ClinicalApplication> {
    static constexpr std::array<std::string_view, 9> names{
        "diagnosis", "severity_grading", "treatment_response", "lesion_delineation",
        "volumetric_quantification", "therapy_planning", "disease_screening",
        "biomarker_quantification", "other"};
};

template <typename E>
constexpr std::string_view to_string(E value) {
    return EnumNames<E>::names[static_cast<std::size_t>(value)];
}

/// Exact (case-sensitive) wire-name lookup.
template <typename E>
constexpr std::optional<E> enum_from_string(std::string_view name) {
    const auto& names = EnumNames<E>::names;
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (names[i] == name) return static_cast<E>(i);
    }
    return std::nullopt;
}

template <typename E>
constexpr auto all_values() {
    std::array<E, EnumNames<E>::names.size()> out{};
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<E>(i);
    return out;
}

/// Root regions of the anatomy hierarchy, in canonical order.
inline constexpr std::array<std::string_view, 11> kAnatomyRoots{
    "Eye", "Brain", "HeadNeck", "Thorax", "Abdomen", "Pelvis",
    "Musculoskeletal", "Skin", "Cell", "FullBody", "Unknown"};

inline bool is_anatomy_root(std::string_view label) {
    for (auto r : kAnatomyRoots) {
        if (r == label) return true;
    }
    return false;
}

/// Position in kAnatomyRoots; roots sort in this order, not alphabetically.
inline std::size_t anatomy_root_rank(std::string_view label) {
    for (std::size_t i = 0; i < kAnatomyRoots.size(); ++i) {
        if (kAnatomyRoots[i] == label) return i;
    }
    return kAnatomyRoots.size();
}

// ---------------------------------------------------------------------------
// Value types
// ---------------------------------------------------------------------------

struct ModalityCode {
    Modality code = Modality::OTHER;
    std::string subtype;

    friend bool operator==(const ModalityCode&, const ModalityCode&) = default;
    friend auto operator<=>(const ModalityCode&, const ModalityCode&) = default;
};

struct ModalityMatch {
    ModalityCode modality;
    /// Set to "unmapped" when the raw term fell through to OTHER.
    std::optional<std::string> diagnostic;
};

struct TaskMatch {
    Task task = Task::classification;
    /// Records alias resolutions worth auditing (ambiguous or lossy aliases).
    std::optional<std::string> note;
};

struct AnatomyPath {
    std::vector<std::string> levels;
    std::string source_term;

    const std::string& root() const { return levels.front(); }
    const std::string& leaf() const { return levels.back(); }

    friend bool operator==(const AnatomyPath&, const AnatomyPath&) = default;
    friend auto operator<=>(const AnatomyPath&, const AnatomyPath&) = default;
};

// ---------------------------------------------------------------------------
// Dimension parsing needs no table
// ---------------------------------------------------------------------------

/// "3D, 2D" -> {D2, D3}; "2D+Video" -> {D2, Video}. Throws on any unknown token.
inline std::set<Dimension> normalize_dimension(std::string_view raw) {
    if (detail::trim(raw).empty()) throw InvalidInput("dimension is empty");
    std::set<Dimension> out;
    for (const auto& token : detail::split_any(raw, ",+/")) {
        const auto key = detail::to_lower(token);
        if (key == "2d") {
            out.insert(Dimension::D2);
        } else if (key == "3d") {
            out.insert(Dimension::D3);
        } else if (key == "video") {
            out.insert(Dimension::Video);
        } else {
            throw InvalidDimensionToken(token);
        }
    }
    if (out.empty()) throw InvalidDimensionToken(std::string(raw));
    return out;
}

/// Single-valued form used by annotation entries.
inline Dimension parse_single_dimension(std::string_view raw) {
    auto dims = normalize_dimension(raw);
    if (dims.size() != 1) throw InvalidDimensionToken(std::string(raw));
    return *dims.begin();
}

// ---------------------------------------------------------------------------
// Vocabulary tables
// ---------------------------------------------------------------------------

/// Immutable alias tables loaded from the plain-text mapping format
/// (see data/vocab.tsv). All lookups are const and thread-safe.
class Vocabulary {
public:
    static Vocabulary parse(std::string_view text) {
        Vocabulary v;
        v.version_ = "fnv1a64:" + detail::hex64(detail::fnv1a64(text));
        enum class Section { none, modality, task, measurement, anatomy } section = Section::none;

        std::size_t line_no = 0;
        std::size_t pos = 0;
        while (pos < text.size()) {
            auto eol = text.find('\n', pos);
            if (eol == std::string_view::npos) eol = text.size();
            std::string_view line = text.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_no;
            if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
            auto trimmed = detail::trim(line);
            if (trimmed.empty() || trimmed.front() == '#') continue;
            auto fail = [&](const std::string& why) {
                throw VocabError("vocabulary line " + std::to_string(line_no) + ": " + why);
            };
            if (trimmed.front() == '[') {
                if (trimmed == "[modality]") section = Section::modality;
                else if (trimmed == "[task]") section = Section::task;
                else if (trimmed == "[measurement_terms]") section = Section::measurement;
                else if (trimmed == "[anatomy]") section = Section::anatomy;
                else fail("unknown section " + std::string(trimmed));
                continue;
            }
            std::vector<std::string> cols;
            {
                std::size_t start = 0;
                for (std::size_t i = 0; i <= line.size(); ++i) {
                    if (i == line.size() || line[i] == '\t') {
                        cols.emplace_back(detail::trim(line.substr(start, i - start)));
                        start = i + 1;
                    }
                }
            }
            const std::string key = detail::fold_key(cols[0]);
            if (key.empty()) fail("empty raw term");
            switch (section) {
                case Section::none:
                    fail("entry before any section header");
                    break;
                case Section::modality: {
                    if (cols.size() < 2 || cols.size() > 3) fail("expected raw<TAB>CODE[<TAB>subtype]");
                    auto code = enum_from_string<Modality>(cols[1]);
                    if (!code) fail("unknown modality code " + cols[1]);
                    v.modalities_[key] = ModalityCode{*code, cols.size() == 3 ? cols[2] : std::string{}};
                    break;
                }
                case Section::task: {
                    if (cols.size() < 2 || cols.size() > 3) fail("expected raw<TAB>task[<TAB>context]");
                    auto task = enum_from_string<Task>(cols[1]);
                    if (!task) fail("unknown task " + cols[1]);
                    if (cols.size() == 3) {
                        v.task_context_[key][detail::to_lower(cols[2])] = *task;
                    } else {
                        v.tasks_[key] = *task;
                    }
                    break;
                }
                case Section::measurement:
                    if (cols.size() != 1) fail("expected a single word");
                    v.measurement_terms_.insert(key);
                    break;
                case Section::anatomy: {
                    if (cols.size() != 2) fail("expected raw<TAB>path");
                    auto levels = detail::split_any(cols[1], "/");
                    if (levels.empty()) fail("empty anatomy path");
                    if (!is_anatomy_root(levels.front())) fail("unknown anatomy root " + levels.front());
                    for (std::size_t i = 1; i < levels.size(); ++i) {
                        if (levels[i] == levels[i - 1]) fail("duplicate consecutive anatomy label");
                    }
                    v.anatomy_[key] = std::move(levels);
                    break;
                }
            }
        }

        for (const auto& [key, task] : v.task_context_) {
            if (!v.tasks_.contains(key)) {
                throw VocabError("task alias '" + key + "' has a context mapping but no default");
            }
        }
        // Roots and leaves resolve to themselves so classification is idempotent on leaves.
        for (auto root : kAnatomyRoots) {
            v.anatomy_.try_emplace(detail::fold_key(root), std::vector<std::string>{std::string(root)});
        }
        std::vector<std::pair<std::string, std::vector<std::string>>> leaves;
        for (const auto& [key, levels] : v.anatomy_) leaves.emplace_back(detail::fold_key(levels.back()), levels);
        for (auto& [leaf_key, levels] : leaves) {
            auto [it, inserted] = v.anatomy_.try_emplace(leaf_key, levels);
            if (!inserted && it->second.back() != levels.back()) {
                throw VocabError("anatomy leaf '" + levels.back() + "' resolves to a different leaf");
            }
        }
        return v;
    }

    static Vocabulary load_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open vocabulary file " + path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return parse(ss.str());
    }

    /// Content hash of the mapping text, embedded in manifests.
    const std::string& version() const noexcept { return version_; }

    /// Case-insensitive alias lookup; "Base (Sub)" and "Base:Sub" carry a subtype.
    /// Unknown terms degrade to OTHER with subtype = raw and an "unmapped" diagnostic.
    ModalityMatch normalize_modality(std::string_view raw) const {
        const auto term = detail::trim(raw);
        if (term.empty()) throw InvalidInput("modality is empty");
        if (auto it = modalities_.find(detail::fold_key(term)); it != modalities_.end()) {
            return {it->second, std::nullopt};
        }
        std::string_view base, refinement;
        if (term.back() == ')') {
            auto open = term.rfind('(');
            if (open != std::string_view::npos && open > 0) {
                base = detail::trim(term.substr(0, open));
                refinement = detail::trim(term.substr(open + 1, term.size() - open - 2));
            }
        } else if (auto colon = term.find(':'); colon != std::string_view::npos) {
            base = detail::trim(term.substr(0, colon));
            refinement = detail::trim(term.substr(colon + 1));
        }
        if (!base.empty()) {
            if (auto it = modalities_.find(detail::fold_key(base)); it != modalities_.end()) {
                ModalityCode out{it->second.code, std::string(refinement)};
                return {std::move(out), std::nullopt};
            }
        }
        return {ModalityCode{Modality::OTHER, std::string(term)}, std::string("unmapped")};
    }

    /// Alias lookup for task abbreviations. `context` is free text (disease,
    /// structure) consulted only for context-dependent aliases such as "Reg".
    TaskMatch normalize_task(std::string_view raw, std::string_view context = {}) const {
        const auto term = detail::trim(raw);
        if (term.empty()) throw InvalidInput("task is empty");
        const auto key = detail::fold_key(term);
        auto it = tasks_.find(key);
        if (it == tasks_.end()) {
            if (auto exact = enum_from_string<Task>(key)) return {*exact, std::nullopt};
            throw UnknownTask(std::string(term));
        }
        TaskMatch out{it->second, std::nullopt};
        if (auto ctx = task_context_.find(key); ctx != task_context_.end()) {
            std::string chosen_context;
            if (auto m = ctx->second.find("measurement"); m != ctx->second.end() && is_measurement_context(context)) {
                out.task = m->second;
                chosen_context = "measurement";
            }
            std::string alternatives;
            for (const auto& [name, task] : ctx->second) {
                alternatives += ", " + std::string(to_string(task)) + " (" + name + ")";
            }
            out.note = "ambiguous task alias '" + std::string(term) + "' resolved to " +
                       std::string(to_string(out.task)) +
                       (chosen_context.empty() ? " (default)" : " (" + chosen_context + " context)") +
                       "; candidates: " + std::string(to_string(it->second)) + " (default)" + alternatives;
        } else if (key == "pred" || key == "prediction") {
            out.note = "task alias '" + std::string(term) + "' treated as classification";
        }
        return out;
    }

    bool is_measurement_context(std::string_view context) const {
        for (const auto& w : detail::words(context)) {
            if (measurement_terms_.contains(w)) return true;
        }
        return false;
    }

    /// Total: unknown terms and "NA" map to [Unknown].
    AnatomyPath classify_anatomy(std::string_view raw) const {
        AnatomyPath out;
        out.source_term = std::string(raw);
        if (auto it = anatomy_.find(detail::fold_key(raw)); it != anatomy_.end()) {
            out.levels = it->second;
        } else {
            out.levels = {"Unknown"};
        }
        return out;
    }

    /// Comma-separated input yields one path per term; never empty.
    std::vector<AnatomyPath> classify_anatomy_all(std::string_view raw) const {
        std::vector<AnatomyPath> out;
        for (const auto& term : detail::split_any(raw, ",")) out.push_back(classify_anatomy(term));
        if (out.empty()) out.push_back(classify_anatomy("NA"));
        return out;
    }

    bool knows_anatomy(std::string_view raw) const { return anatomy_.contains(detail::fold_key(raw)); }

    const std::map<std::string, ModalityCode>& modality_table() const noexcept { return modalities_; }
    const std::map<std::string, std::vector<std::string>>& anatomy_table() const noexcept { return anatomy_; }
    const std::map<std::string, Task>& task_table() const noexcept { return tasks_; }

private:
    std::string version_;
    std::map<std::string, ModalityCode> modalities_;
    std::map<std::string, Task> tasks_;
    std::map<std::string, std::map<std::string, Task>> task_context_;
    std::set<std::string> measurement_terms_;
    std::map<std::string, std::vector<std::string>> anatomy_;
};

}  // namespace fuseatlas
