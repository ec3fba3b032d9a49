#include "synthetic.hpp"

#include "perjar/corpus.hpp"

#include <doctest.h>
#include <json.hpp>

#include <fstream>

using namespace perjar;
using namespace perjar::testing;

namespace {

void write_lines(const std::filesystem::path& file, std::initializer_list<std::string_view> lines) {
    std::ofstream out(file, std::ios::binary);
    for (const auto l : lines) out << l << '\n';
}

/// 3 annotators, 5 abstracts, 30 annotations (each annotator labels 2 terms
/// on each abstract).
void write_small_corpus(const std::filesystem::path& dir) {
    write_lines(dir / "annotators.jsonl", {R"({"schema": 1})",
                                           R"({"id": "a1", "subfield": "NLP", "papers_published": 12, "avg_references": 340, "first_pub_year": 2018})",
                                           R"({"id": "a2", "subfield": "Vision", "papers_published": 3, "avg_references": 20.5})",
                                           R"({"id": "a3", "subfield": "nlp ", "papers_published": 0, "avg_references": 0})"});
    std::ofstream abs(dir / "abstracts.jsonl", std::ios::binary);
    abs << R"({"schema": 1})" << '\n';
    for (int d = 0; d < 5; ++d) {
        abs << nlohmann::json{{"id", "d" + std::to_string(d)}, {"text", "alpha beta gamma delta " + std::to_string(d)}, {"domain", "Physics"}}.dump()
            << '\n';
    }
    abs.close();
    std::ofstream ann(dir / "annotations.jsonl", std::ios::binary);
    ann << R"({"schema": 1})" << '\n';
    for (const char* a : {"a1", "a2", "a3"}) {
        for (int d = 0; d < 5; ++d) {
            for (const char* term : {"alpha", "gamma"}) {
                ann << nlohmann::json{{"annotator_id", a}, {"abstract_id", "d" + std::to_string(d)}, {"term", term}, {"familiarity", d % 2}}.dump()
                    << '\n';
            }
        }
    }
}

}  // namespace

TEST_CASE("load_corpus preserves counts and file order") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());
    const auto c = load_corpus(dir.path());
    CHECK(c.annotators.size() == 3);
    CHECK(c.abstracts.size() == 5);
    REQUIRE(c.annotations.size() == 30);
    CHECK(c.annotations.front().annotator_id.value == "a1");
    CHECK(c.annotations.front().term == "alpha");
    CHECK(c.annotations.back().annotator_id.value == "a3");
    CHECK(c.annotator(AnnotatorId("a1")).avg_references == 340.0);
    CHECK_FALSE(c.annotator(AnnotatorId("a2")).first_pub_year.has_value());
}

TEST_CASE("unknown abstract id is a referential-integrity error naming the id") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());
    std::ofstream(dir.path() / "annotations.jsonl", std::ios::app) << R"({"annotator_id": "a1", "abstract_id": "nope", "term": "x", "familiarity": 1})"
                                                                    << '\n';
    try {
        load_corpus(dir.path());
        FAIL("expected CorpusError");
    } catch (const CorpusError& e) {
        CHECK(std::string(e.what()).find("'nope'") != std::string::npos);
        CHECK(std::string(e.what()).find("annotations.jsonl:32") != std::string::npos);
    }
}

TEST_CASE("empty annotations with annotators is a valid corpus") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());
    write_lines(dir.path() / "annotations.jsonl", {R"({"schema": 1})"});
    const auto c = load_corpus(dir.path());
    CHECK(c.annotations.empty());
    CHECK(c.annotators.size() == 3);
}

TEST_CASE("load_corpus error paths") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());

    SUBCASE("missing required file") {
        std::filesystem::remove(dir.path() / "abstracts.jsonl");
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("missing file"), CorpusError);
    }
    SUBCASE("malformed record reports its line") {
        std::ofstream(dir.path() / "annotators.jsonl", std::ios::app) << "{not json\n";
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("annotators.jsonl:5"), CorpusError);
    }
    SUBCASE("missing schema header") {
        write_lines(dir.path() / "abstracts.jsonl", {R"({"id": "d0", "text": "t", "domain": "x"})"});
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("schema"), CorpusError);
    }
    SUBCASE("unsupported schema version") {
        write_lines(dir.path() / "abstracts.jsonl", {R"({"schema": 2})"});
        CHECK_THROWS_AS(load_corpus(dir.path()), CorpusError);
    }
    SUBCASE("non-binary familiarity") {
        std::ofstream(dir.path() / "annotations.jsonl", std::ios::app) << R"({"annotator_id": "a1", "abstract_id": "d0", "term": "beta", "familiarity": 2})"
                                                                        << '\n';
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("0 or 1"), CorpusError);
    }
    SUBCASE("duplicate triple") {
        std::ofstream(dir.path() / "annotations.jsonl", std::ios::app) << R"({"annotator_id": "a1", "abstract_id": "d0", "term": "alpha", "familiarity": 0})"
                                                                        << '\n';
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("duplicate"), CorpusError);
    }
    SUBCASE("nested values are rejected") {
        std::ofstream(dir.path() / "annotators.jsonl", std::ios::app)
            << R"({"id": "a4", "subfield": ["x"], "papers_published": 1, "avg_references": 1})" << '\n';
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("flat"), CorpusError);
    }
    SUBCASE("unknown field") {
        std::ofstream(dir.path() / "annotators.jsonl", std::ios::app)
            << R"({"id": "a4", "subfield": "x", "papers_published": 1, "avg_references": 1, "shoe_size": 9})" << '\n';
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("shoe_size"), CorpusError);
    }
    SUBCASE("future first publication year") {
        std::ofstream(dir.path() / "annotators.jsonl", std::ios::app)
            << R"({"id": "a4", "subfield": "x", "papers_published": 1, "avg_references": 1, "first_pub_year": 9999})" << '\n';
        CHECK_THROWS_WITH_AS(load_corpus(dir.path()), doctest::Contains("future"), CorpusError);
    }
    SUBCASE("not a directory") { CHECK_THROWS_AS(load_corpus(dir.path() / "absent"), CorpusError); }
}

TEST_CASE("term missing from its abstract is a warning, not an error") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());
    std::ofstream(dir.path() / "annotations.jsonl", std::ios::app) << R"({"annotator_id": "a1", "abstract_id": "d0", "term": "Omega", "familiarity": 1})"
                                                                    << '\n';
    std::vector<std::string> warnings;
    const auto c = load_corpus(dir.path(), &warnings);
    CHECK(c.annotations.size() == 31);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("Omega") != std::string::npos);

    // Case-insensitive match is not a finding.
    std::ofstream(dir.path() / "annotations.jsonl", std::ios::app) << R"({"annotator_id": "a2", "abstract_id": "d0", "term": "BETA", "familiarity": 1})"
                                                                    << '\n';
    warnings.clear();
    load_corpus(dir.path(), &warnings);
    CHECK(warnings.size() == 1);
}

TEST_CASE("augmentation pool is keyed by normalized subfield") {
    TempDir dir("corpus");
    write_small_corpus(dir.path());
    write_lines(dir.path() / "augmentation_pool.jsonl",
                {R"({"schema": 1})", R"({"subfield": "  NLP", "title": "T", "abstract_text": "Some text."})"});
    const auto c = load_corpus(dir.path());
    CHECK(c.pool_for(c.annotator(AnnotatorId("a1"))).size() == 1);
    CHECK(c.pool_for(c.annotator(AnnotatorId("a3"))).size() == 1);
    CHECK(c.pool_for(c.annotator(AnnotatorId("a2"))).empty());
    CHECK(c.pool_for(c.annotator(AnnotatorId("a1")))[0].source == PublicationSource::subdomain_augmentation);
}

TEST_CASE("save_corpus round-trips and the digest ignores profiles") {
    SyntheticOptions o;
    o.seed = 7;
    const auto original = make_synthetic_corpus(o);
    TempDir dir("corpus");
    save_corpus(original, dir.path());
    const auto loaded = load_corpus(dir.path());
    CHECK(corpus_digest(loaded) == corpus_digest(original));
    CHECK(loaded.annotations.size() == original.annotations.size());
    CHECK(loaded.annotator(AnnotatorId("ann01")).publications.size() == original.annotator(AnnotatorId("ann01")).publications.size());
    CHECK(loaded.annotator(AnnotatorId("ann01")).profile_text == original.annotator(AnnotatorId("ann01")).profile_text);

    auto stripped = original;
    for (auto& [id, a] : stripped.annotators) a.profile_text.reset();
    CHECK(corpus_digest(stripped) == corpus_digest(original));

    auto relabelled = original;
    relabelled.annotations[0].familiarity ^= 1;
    CHECK(corpus_digest(relabelled) != corpus_digest(original));
}

TEST_CASE("profiles sidecar round-trips through load_corpus") {
    SyntheticOptions o;
    o.profiles = false;
    auto c = make_synthetic_corpus(o);
    TempDir dir("corpus");
    save_corpus(c, dir.path());
    c.annotators.at(AnnotatorId("ann02")).profile_text = "A profile.";
    save_profiles_sidecar(c, dir.path() / "profiles.jsonl");
    const auto loaded = load_corpus(dir.path());
    CHECK(loaded.annotator(AnnotatorId("ann02")).profile_text == std::optional<std::string>("A profile."));
    CHECK_FALSE(loaded.annotator(AnnotatorId("ann01")).profile_text.has_value());
}

TEST_CASE("group_annotations keeps first-appearance order") {
    SyntheticOptions o;
    const auto c = make_synthetic_corpus(o);
    const auto all = all_annotation_indices(c);
    const auto groups = group_annotations(c, all);
    CHECK(groups.size() == o.annotators * o.abstracts_per_annotator);
    std::size_t covered = 0;
    for (const auto& g : groups) {
        covered += g.indices.size();
        for (const auto i : g.indices) {
            CHECK(c.annotations[i].annotator_id == g.annotator_id);
            CHECK(c.annotations[i].abstract_id == g.abstract_id);
        }
    }
    CHECK(covered == all.size());
    CHECK(groups.front().indices.front() == 0);
}
