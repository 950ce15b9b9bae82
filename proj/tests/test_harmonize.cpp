#include <gtest/gtest.h>

#include "support/testkit.hpp"

using namespace fuseatlas;
using nlohmann::json;

namespace {

json minimal(const std::string& name) {
    return {{"dataset_name", name},     {"license", "CC BY 4.0"}, {"modality_primary", "CT"},
            {"label_presence", "labeled"}, {"task_type", "Seg"},  {"dimension", "2D"},
            {"valid_image_n", 100}};
}

DatasetRecord raw(const json& j) {
    auto r = parse_dataset_meta_line(j.dump(), 1);
    if (!r.value) throw std::runtime_error("fixture record did not parse: " + j.dump());
    return *r.value;
}

HarmonizedRecord harmonized(const json& j) {
    auto r = harmonize_record(raw(j), builtin_vocabulary());
    if (!r.value) throw std::runtime_error("fixture record did not harmonize: " + j.dump());
    return *r.value;
}

std::vector<std::string> names_of(const std::vector<HarmonizedRecord>& v) {
    std::vector<std::string> out;
    for (const auto& r : v) out.push_back(r.name());
    return out;
}

}  // namespace

TEST(Harmonize, MultiModalityAndOrgs) {
    auto j = minimal("Mixed");
    j["modality_primary"] = "CT, MR";
    j["organization"] = "MICCAI, Stanford; stanford";
    j["release_date"] = "NA";
    auto rec = harmonized(j);
    EXPECT_EQ(rec.modality_codes(), (std::set<Modality>{Modality::CT, Modality::MRI}));
    EXPECT_FALSE(rec.release_year);
    EXPECT_EQ(rec.org_tokens, (std::set<std::string>{"miccai", "stanford"}));
}

TEST(Harmonize, KeepsRawFields) {
    auto j = minimal("Keep");
    j["modality_primary"] = "Histopathology (WSI)";
    j["anatomical_structure"] = "Cataract";
    auto rec = harmonized(j);
    EXPECT_EQ(rec.base.modality_primary, std::vector<std::string>{"Histopathology (WSI)"});
    ASSERT_EQ(rec.modalities.size(), 1u);
    EXPECT_EQ(rec.modalities[0].subtype, "WSI");
    ASSERT_EQ(rec.anatomy_paths.size(), 1u);
    EXPECT_EQ(rec.anatomy_paths[0].root(), "Eye");
}

TEST(Harmonize, YearBounds) {
    auto j = minimal("Old");
    j["release_date"] = "1985";
    auto r = harmonize_record(raw(j), builtin_vocabulary());
    EXPECT_FALSE(r.value);
    EXPECT_FALSE(r.report.ok());

    j["release_date"] = "2019-07";
    auto ok = harmonize_record(raw(j), builtin_vocabulary());
    ASSERT_TRUE(ok.value);
    EXPECT_EQ(ok.value->release_year, 2019);

    HarmonizeOptions tight;
    tight.max_year = 2018;
    EXPECT_FALSE(harmonize_record(raw(j), builtin_vocabulary(), 1, tight).value);
}

TEST(Harmonize, UnmappedModalityWarnsOrFails) {
    auto j = minimal("Thermal");
    j["modality_primary"] = "Thermography";
    auto loose = harmonize_record(raw(j), builtin_vocabulary());
    ASSERT_TRUE(loose.value);
    EXPECT_EQ(loose.value->modality_codes(), std::set<Modality>{Modality::OTHER});
    EXPECT_GE(loose.report.warning_count(), 1u);

    HarmonizeOptions strict;
    strict.strict = true;
    auto s = harmonize_record(raw(j), builtin_vocabulary(), 1, strict);
    EXPECT_FALSE(s.value);
    EXPECT_FALSE(s.report.ok());
}

TEST(Harmonize, UnknownTaskIsError) {
    auto j = minimal("Bad");
    j["task_type"] = "Foo";
    auto r = harmonize_record(raw(j), builtin_vocabulary());
    EXPECT_FALSE(r.value);
    EXPECT_FALSE(r.report.ok());
}

TEST(Clinical, Examples) {
    EXPECT_EQ(align_clinical({Task::detection}), std::set<ClinicalApplication>{ClinicalApplication::disease_screening});
    EXPECT_THROW(align_clinical(std::set<Task>{}), ContractError);
    EXPECT_EQ(align_clinical({Task::classification, Task::segmentation}).size(), 6u);
    EXPECT_EQ(align_clinical({Task::vqa}), std::set<ClinicalApplication>{ClinicalApplication::other});
}

TEST(Clinical, UnionLaw) {
    auto tasks = all_values<Task>();
    testkit::Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        auto a = testkit::nonempty_subset(rng, std::vector<Task>(tasks.begin(), tasks.end()));
        auto b = testkit::nonempty_subset(rng, std::vector<Task>(tasks.begin(), tasks.end()));
        std::set<Task> sa(a.begin(), a.end()), sb(b.begin(), b.end()), both = sa;
        both.insert(sb.begin(), sb.end());
        auto expected = align_clinical(sa);
        expected.merge(align_clinical(sb));
        EXPECT_EQ(align_clinical(both), expected);
    }
}

TEST(Dedupe, KeyFolding) {
    EXPECT_EQ(dedupe_key("ImageCLEF 2016 (Duplicate)"), dedupe_key("imageclef   2016"));
    EXPECT_NE(dedupe_key("ImageCLEF 2015"), dedupe_key("ImageCLEF 2016"));
    EXPECT_EQ(homepage_key("https://www.Example.org/a/"), homepage_key("http://example.org/a"));
}

TEST(Dedupe, LabeledWinsThenLarger) {
    auto a = minimal("Same");
    a["label_presence"] = "unlabeled";
    a["valid_image_n"] = 9000;
    auto b = minimal("same");
    b["valid_image_n"] = 10;
    auto c = minimal("SAME");
    c["valid_image_n"] = 50;
    auto out = dedupe({harmonized(a), harmonized(b), harmonized(c)});
    ASSERT_EQ(out.records.size(), 1u);
    EXPECT_EQ(out.records[0].name(), "SAME");
    EXPECT_EQ(out.duplicate_report.size(), 2u);
    for (const auto& e : out.duplicate_report) {
        EXPECT_EQ(e.reason, DuplicateReason::exact_name);
        EXPECT_EQ(e.kept, "SAME");
    }
}

TEST(Dedupe, SharedHomepageFlagsBoth) {
    auto a = minimal("Alpha");
    a["homepage_url"] = "https://example.org/x";
    auto b = minimal("Beta");
    b["homepage_url"] = "http://www.example.org/x/";
    auto out = dedupe({harmonized(a), harmonized(b)});
    EXPECT_EQ(out.records.size(), 2u);
    ASSERT_EQ(out.duplicate_report.size(), 1u);
    EXPECT_EQ(out.duplicate_report[0].reason, DuplicateReason::same_homepage);
    EXPECT_FALSE(out.duplicate_report[0].dropped);
    EXPECT_TRUE(out.duplicate_report[0].related);
}

TEST(Dedupe, ImageClefAndHintOnCatalog) {
    auto m = testkit::catalog_manifest();
    EXPECT_TRUE(m.find("ImageCLEF 2016"));
    EXPECT_FALSE(m.find("ImageCLEF 2016 (Duplicate)"));
    bool suffix = false, hint = false;
    for (const auto& e : m.duplicate_report) {
        if (e.dropped == std::optional<std::string>("ImageCLEF 2016 (Duplicate)")) {
            suffix = true;
            EXPECT_EQ(e.kept, "ImageCLEF 2016");
            EXPECT_EQ(e.reason, DuplicateReason::exact_name);
        }
        if (e.reason == DuplicateReason::declared_overlap) {
            hint = true;
            std::set<std::string> pair{e.kept, e.related.value_or("")};
            EXPECT_EQ(pair, (std::set<std::string>{"OCT2017", "MedMNIST"}));
        }
    }
    EXPECT_TRUE(suffix);
    EXPECT_TRUE(hint);
    EXPECT_TRUE(m.find("OCT2017"));
    EXPECT_TRUE(m.find("MedMNIST"));
}

TEST(Dedupe, Idempotent) {
    auto m = testkit::catalog_manifest();
    auto hints = parse_overlap_hints(testkit::slurp(testkit::fixture_path("overlap_hints.tsv")));
    auto again = dedupe(m.datasets, hints);
    EXPECT_EQ(again.records, m.datasets);
    for (const auto& e : again.duplicate_report) EXPECT_NE(e.reason, DuplicateReason::exact_name);
}

TEST(Dedupe, IdempotentOnRandomCorpora) {
    testkit::Rng rng(8);
    for (int round = 0; round < 30; ++round) {
        auto lines = testkit::random_corpus(rng, 30);
        std::vector<HarmonizedRecord> recs;
        for (const auto& l : lines) {
            auto h = harmonize_record(*parse_dataset_meta_line(l, 1).value, builtin_vocabulary());
            if (h.value) recs.push_back(*h.value);
        }
        // Inject duplicates by renaming.
        for (int k = 0; k < 5; ++k) {
            auto copy = recs[static_cast<std::size_t>(testkit::uniform(rng, 0, static_cast<int>(recs.size()) - 1))];
            copy.base.dataset_name = detail::to_upper(copy.base.dataset_name) + " (duplicate)";
            recs.push_back(copy);
        }
        auto once = dedupe(recs);
        auto twice = dedupe(once.records);
        EXPECT_EQ(names_of(twice.records), names_of(once.records));
        EXPECT_EQ(twice.records, once.records);
        std::set<std::string> keys;
        for (const auto& r : once.records) EXPECT_TRUE(keys.insert(dedupe_key(r.name())).second);
    }
}

TEST(Hints, Parse) {
    auto h = parse_overlap_hints("# comment\nA\tB\n\nC\tD\n");
    ASSERT_EQ(h.size(), 2u);
    EXPECT_EQ(h[1], (OverlapHint{"C", "D"}));
    EXPECT_THROW(parse_overlap_hints("only-one-column\n"), InvalidInput);
}

TEST(Build, EmptyInputs) {
    auto r = build_catalog({}, {}, {}, builtin_vocabulary(), {testkit::kGeneratedAt, false});
    ASSERT_TRUE(r.manifest);
    EXPECT_TRUE(r.manifest->datasets.empty());
    EXPECT_TRUE(r.manifest->duplicate_report.empty());
    EXPECT_EQ(r.manifest->version, kManifestVersion);
    EXPECT_EQ(r.manifest->vocab_version, builtin_vocabulary().version());
    EXPECT_EQ(r.manifest->generated_at, testkit::kGeneratedAt);
    EXPECT_TRUE(r.report.ok());
}

TEST(Build, ShuffledInputSameManifest) {
    auto lines = testkit::fixture_lines("catalog_2d.jsonl");
    auto expected = manifest_to_string(testkit::build_from_lines(lines));
    testkit::Rng rng(21);
    for (int k = 0; k < 5; ++k) {
        std::shuffle(lines.begin(), lines.end(), rng);
        EXPECT_EQ(manifest_to_string(testkit::build_from_lines(lines)), expected);
    }
}

TEST(Build, CatalogIsClean) {
    auto lines = testkit::fixture_lines("catalog_2d.jsonl");
    auto r = build_catalog(lines, {}, {}, builtin_vocabulary(), {testkit::kGeneratedAt, true});
    ASSERT_TRUE(r.manifest);
    EXPECT_EQ(r.report.error_count(), 0u);
    EXPECT_GE(r.manifest->datasets.size(), 150u);
    EXPECT_TRUE(std::is_sorted(r.manifest->datasets.begin(), r.manifest->datasets.end(),
                               [](const auto& a, const auto& b) { return a.name() < b.name(); }));
    for (const auto& d : r.manifest->datasets) {
        EXPECT_FALSE(d.tasks.empty()) << d.name();
        EXPECT_EQ(d.clinical_applications, align_clinical(d.tasks)) << d.name();
        EXPECT_FALSE(d.modalities.empty()) << d.name();
        EXPECT_FALSE(d.dimensions.empty()) << d.name();
    }
}

TEST(Build, BadLineDroppedOrFatal) {
    std::vector<std::string> lines{minimal("Good").dump(), "{not json", minimal("Bad").dump()};
    auto bad = minimal("Bad");
    bad["task_type"] = "Foo";
    lines[2] = bad.dump();

    auto loose = build_catalog(lines, {}, {}, builtin_vocabulary(), {testkit::kGeneratedAt, false});
    ASSERT_TRUE(loose.manifest);
    EXPECT_EQ(loose.manifest->datasets.size(), 1u);
    EXPECT_EQ(loose.records_read, 3u);
    EXPECT_EQ(loose.report.error_count(), 2u);  // one per bad line, not repeated

    auto strict = build_catalog(lines, {}, {}, builtin_vocabulary(), {testkit::kGeneratedAt, true});
    EXPECT_FALSE(strict.manifest);
}

TEST(Build, AnnotationTypesAttach) {
    json ann;
    ann["record"] = {{"dataset_name", "Good"}, {"image_path", "a.png"}};
    ann["media_geometry"] = {{"task_type", "segmentation"}, {"leaf_task", "lesion"}, {"annotation_type", "mask"}, {"dimension", "2D"}};
    ann["tasks"] = {{"segmentation", {{"mask_path", "m.png"}}}};
    std::vector<std::string> meta{minimal("Good").dump()};
    std::vector<std::string> anns{ann.dump()};
    auto r = build_catalog(meta, anns, {}, builtin_vocabulary(), {testkit::kGeneratedAt, false});
    ASSERT_TRUE(r.manifest);
    EXPECT_EQ(r.annotations_read, 1u);
    EXPECT_EQ(r.manifest->datasets[0].annotation_types, std::set<AnnotationType>{AnnotationType::mask});
}

TEST(Build, TimestampYear) {
    EXPECT_EQ(timestamp_year("2024-06-01T00:00:00Z"), 2024);
    EXPECT_FALSE(timestamp_year("20x4"));
}
