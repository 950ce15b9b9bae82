#pragma once

#include <cmath>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "fuseatlas/builtin_vocab.hpp"
#include "fuseatlas/error.hpp"
#include "fuseatlas/fusion.hpp"
#include "fuseatlas/harmonize.hpp"
#include "fuseatlas/index.hpp"
#include "fuseatlas/query.hpp"
#include "fuseatlas/schema.hpp"

namespace fuseatlas::cli {

enum ExitStatus : int { kSuccess = 0, kValidation = 1, kUsage = 2, kIo = 3 };

/// Thrown for bad flag values detected after argument parsing.
class UsageError : public Error {
public:
    using Error::Error;
};

namespace detail {

inline std::string utc_now() {
    std::time_t t = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline bool valid_timestamp(const std::string& ts) {
    // YYYY-MM-DD with optional THH:MM:SS[.fff][Z|+hh:mm]
    if (ts.size() < 10) return false;
    if (!parse_partial_date(ts.substr(0, 10))) return false;
    if (ts.size() == 10) return true;
    if (ts[10] != 'T' || ts.size() < 19) return false;
    auto digits = [&](std::size_t a, std::size_t b) {
        for (std::size_t i = a; i < b; ++i) {
            if (ts[i] < '0' || ts[i] > '9') return false;
        }
        return true;
    };
    return digits(11, 13) && ts[13] == ':' && digits(14, 16) && ts[16] == ':' && digits(17, 19);
}

inline void print_report(const ValidationReport& report, std::ostream& err) {
    for (const auto& d : report.diagnostics) err << format_diagnostic(d) << "\n";
}

inline std::string pad_right(const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); }

/// Aligned plain-text table; the first column is left-aligned, the rest right-aligned.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& r : rows) {
        widths.resize(std::max(widths.size(), r.size()), 0);
        for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], r[i].size());
    }
    std::string out;
    for (const auto& r : rows) {
        std::string line;
        for (std::size_t i = 0; i < r.size(); ++i) {
            if (i == 0) {
                line += pad_right(r[i], widths[i]);
            } else {
                line += "  " + std::string(widths[i] - r[i].size(), ' ') + r[i];
            }
        }
        while (!line.empty() && line.back() == ' ') line.pop_back();
        out += line + "\n";
    }
    return out;
}

}  // namespace detail

/// Runs one command. `args` excludes the program name.
inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Dataset catalog and fusion engine for medical imaging metadata", "fuseatlas"};
    app.require_subcommand(1);
    std::string vocab_path;
    app.add_option("--vocab", vocab_path, "Vocabulary mapping file (default: $FUSEATLAS_VOCAB or built-in)");

    auto* validate = app.add_subcommand("validate", "Check metadata and annotation files");
    std::string meta_path;
    std::vector<std::string> annotation_paths;
    validate->add_option("meta", meta_path, "data-meta.jsonl")->required();
    validate->add_option("annotations", annotation_paths, "Annotation .jsonl files");

    auto* build = app.add_subcommand("build", "Build a catalog manifest");
    std::string hints_path, generated_at, out_path;
    std::vector<std::string> build_annotations;
    bool strict = false;
    build->add_option("meta", meta_path, "data-meta.jsonl")->required();
    build->add_option("--annotations", build_annotations, "Annotation .jsonl files");
    build->add_option("--hints", hints_path, "Overlap hints (name<TAB>name per line)");
    build->add_option("--generated-at", generated_at, "ISO-8601 build timestamp");
    build->add_option("-o,--output", out_path, "Manifest output path")->required();
    build->add_flag("--strict", strict, "Fail on any validation error");

    std::string manifest_path, recipe_path, text_query;
    std::vector<std::string> facets;

    auto* query = app.add_subcommand("query", "Print the datasets a recipe or facet state selects");
    query->add_option("-m,--manifest", manifest_path, "Manifest")->required();
    auto* query_recipe = query->add_option("--recipe", recipe_path, "Recipe file");
    auto* query_facet = query->add_option("--facet", facets, "axis=value (repeatable)");
    query->add_option("--text", text_query, "Free-text query");
    query_recipe->excludes(query_facet);

    auto* fuse = app.add_subcommand("fuse", "Build a fusion blueprint");
    std::string group_by = "modality";
    std::optional<double> temperature;
    std::optional<std::int64_t> cap;
    fuse->add_option("-m,--manifest", manifest_path, "Manifest")->required();
    fuse->add_option("--recipe", recipe_path, "Recipe file")->required();
    fuse->add_option("--group-by", group_by, "modality|task|anatomy_root|dimension");
    fuse->add_option("-o,--output", out_path, "Blueprint output path");
    fuse->add_option("--temperature", temperature, "Sampling temperature");
    fuse->add_option("--per-dataset-cap", cap, "Per-dataset cap recorded in the blueprint");

    auto* exp = app.add_subcommand("export", "Export the audit table of a selection");
    std::string format = "csv";
    exp->add_option("-m,--manifest", manifest_path, "Manifest")->required();
    exp->add_option("--recipe", recipe_path, "Recipe file")->required();
    exp->add_option("--format", format, "csv|json");
    exp->add_option("-o,--output", out_path, "Output path (default stdout)");

    auto* stats = app.add_subcommand("stats", "Distribution statistics");
    std::string axis_name;
    stats->add_option("-m,--manifest", manifest_path, "Manifest")->required();
    stats->add_option("--recipe", recipe_path, "Recipe file (default: everything)");
    stats->add_option("--axis", axis_name, "modality|task|dimension|anatomy_root|label_presence|year")->required();

    std::vector<std::string> argv_storage{"fuseatlas"};
    argv_storage.insert(argv_storage.end(), args.begin(), args.end());
    std::vector<const char*> argv;
    for (const auto& a : argv_storage) argv.push_back(a.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::CallForHelp& e) {
        app.exit(e, out, err);
        return kSuccess;
    } catch (const CLI::CallForAllHelp& e) {
        app.exit(e, out, err);
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        err << app.help();
        return kUsage;
    }

    auto load_recipe = [&]() {
        std::vector<std::string> warnings;
        auto r = parse_recipe(read_file(recipe_path), &warnings);
        for (const auto& w : warnings) err << recipe_path << ": warning: " << w << "\n";
        return r;
    };

    try {
        if (*validate) {
            const auto vocab = resolve_vocabulary(vocab_path);
            ValidationReport report;
            std::vector<Numbered<DatasetRecord>> records;
            std::vector<Numbered<AnnotationEntry>> annotations;
            std::size_t n_records = 0, n_annotations = 0;
            const auto meta_lines = split_lines(read_file(meta_path));
            for (std::size_t i = 0; i < meta_lines.size(); ++i) {
                if (fuseatlas::detail::trim(meta_lines[i]).empty()) continue;
                ++n_records;
                auto p = parse_dataset_meta_line(meta_lines[i], i + 1);
                report.merge(p.report);
                if (p.value) records.push_back({std::move(*p.value), i + 1});
            }
            for (const auto& path : annotation_paths) {
                const auto lines = split_lines(read_file(path));
                for (std::size_t i = 0; i < lines.size(); ++i) {
                    if (fuseatlas::detail::trim(lines[i]).empty()) continue;
                    ++n_annotations;
                    auto p = parse_annotation_line(lines[i], i + 1);
                    report.merge(p.report);
                    if (p.value) annotations.push_back({std::move(*p.value), i + 1});
                }
            }
            report.merge(validate_catalog(records, annotations, vocab));
            detail::print_report(report, err);
            out << n_records << " records, " << n_annotations << " annotations, " << report.error_count() << " errors, "
                << report.warning_count() << " warnings\n";
            return report.ok() ? kSuccess : kValidation;
        }

        if (*build) {
            if (generated_at.empty()) generated_at = detail::utc_now();
            if (!detail::valid_timestamp(generated_at)) throw UsageError("--generated-at expects an ISO-8601 timestamp");
            const auto vocab = resolve_vocabulary(vocab_path);
            const auto meta_lines = split_lines(read_file(meta_path));
            std::vector<std::string> ann_lines;
            for (const auto& path : build_annotations) {
                auto lines = split_lines(read_file(path));
                ann_lines.insert(ann_lines.end(), lines.begin(), lines.end());
            }
            std::vector<OverlapHint> hints;
            if (!hints_path.empty()) hints = parse_overlap_hints(read_file(hints_path));
            auto result = build_catalog(meta_lines, ann_lines, hints, vocab, {generated_at, strict});
            detail::print_report(result.report, err);
            if (!result.manifest) {
                err << "build failed: " << result.report.error_count() << " errors\n";
                return kValidation;
            }
            export_manifest(*result.manifest, out_path);
            err << result.records_read << " records read, " << result.manifest->datasets.size() << " datasets written, "
                << result.manifest->duplicate_report.size() << " duplicate report entries, " << result.report.error_count()
                << " errors, " << result.report.warning_count() << " warnings\n";
            return kSuccess;
        }

        const auto manifest = load_manifest(manifest_path);

        if (*query) {
            SelectionSet sel;
            if (!recipe_path.empty()) {
                if (!text_query.empty()) throw UsageError("--text combines with --facet, not --recipe");
                sel = evaluate_recipe(load_recipe(), manifest);
            } else {
                FacetState state;
                for (const auto& f : facets) {
                    auto eq = f.find('=');
                    if (eq == std::string::npos) throw UsageError("--facet expects axis=value, got '" + f + "'");
                    auto& values = state[f.substr(0, eq)];
                    for (auto& v : fuseatlas::detail::split_any(f.substr(eq + 1), ",")) values.insert(v);
                }
                sel = facet_filter(state, text_query, manifest);
            }
            for (const auto& n : sel.names) out << n << "\n";
            return kSuccess;
        }

        if (*fuse) {
            const auto axis = parse_group_axis(group_by);
            if (temperature && !(*temperature > 0.0 && std::isfinite(*temperature))) {
                throw UsageError("--temperature must be a positive finite number");
            }
            if (cap && *cap <= 0) throw UsageError("--per-dataset-cap must be positive");
            auto bp = build_blueprint(load_recipe(), manifest, axis, {cap, temperature});
            if (!out_path.empty()) {
                write_file(out_path, blueprint_to_json(bp).dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace) + "\n");
            }
            out << blueprint_table(bp);
            return kSuccess;
        }

        if (*exp) {
            auto fmt = enum_from_string<AuditFormat>(format);
            if (!fmt) throw UsageError("--format must be csv or json");
            auto sel = evaluate_recipe(load_recipe(), manifest);
            auto bytes = export_audit(sel, manifest, *fmt);
            if (out_path.empty()) out << bytes;
            else write_file(out_path, bytes);
            return kSuccess;
        }

        if (*stats) {
            auto sel = recipe_path.empty() ? evaluate_recipe(FilterRecipe{}, manifest) : evaluate_recipe(load_recipe(), manifest);
            std::vector<std::vector<std::string>> rows;
            using fuseatlas::detail::thousands;
            if (axis_name == "year") {
                auto yt = yearly_totals(sel, manifest);
                rows.push_back({"year", "datasets", "images"});
                for (const auto& b : yt.years) rows.push_back({std::to_string(b.year), thousands(b.dataset_count), thousands(b.image_sum)});
                rows.push_back({"unknown", thousands(yt.unknown_dataset_count), thousands(yt.unknown_image_sum)});
            } else {
                auto axis = parse_distribution_axis(axis_name);
                auto h = distribution(sel, manifest, axis);
                rows.push_back({h.axis, "datasets", "images"});
                for (const auto& b : h.bins) rows.push_back({b.value, thousands(b.dataset_count), thousands(b.image_sum)});
            }
            rows.push_back({"Total", thousands(static_cast<long long>(sel.size())), thousands(selection_image_total(sel, manifest))});
            out << detail::render_table(rows);
            return kSuccess;
        }
    } catch (const IoError& e) {
        err << "error: " << e.what() << "\n";
        return kIo;
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const FacetError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    } catch (const AxisError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;

    } catch (const RecipeParseError& e) {
        err << "error: " << recipe_path << ": offset " << e.position() << ": " << e.what() << "\n";
        return kValidation;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }
    return kUsage;
}

}  // namespace fuseatlas::cli
