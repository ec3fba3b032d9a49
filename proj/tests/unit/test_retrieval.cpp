#include "synthetic.hpp"

#include "perjar/random.hpp"
#include "perjar/retrieval.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>

using namespace perjar;
using namespace perjar::testing;

namespace {

/// Straight from the formula, recomputing every statistic from raw token
/// lists on each call.
double brute_bm25(const std::map<std::string, std::vector<std::string>>& docs, const std::vector<std::string>& query,
                  const std::string& doc_id, double k1 = 1.2, double b = 0.75) {
    double total_len = 0;
    for (const auto& [id, toks] : docs) total_len += static_cast<double>(toks.size());
    const double n = static_cast<double>(docs.size());
    const double avgdl = total_len / n;
    const auto& d = docs.at(doc_id);
    double s = 0;
    for (const auto& q : query) {
        double df = 0;
        for (const auto& [id, toks] : docs) df += std::find(toks.begin(), toks.end(), q) != toks.end() ? 1 : 0;
        const double tf = static_cast<double>(std::count(d.begin(), d.end(), q));
        if (tf == 0) continue;
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        s += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * static_cast<double>(d.size()) / avgdl));
    }
    return s;
}

std::map<std::string, std::vector<std::string>> tokenized(const std::map<std::string, std::string>& docs) {
    std::map<std::string, std::vector<std::string>> out;
    for (const auto& [id, t] : docs) out[id] = tokenize(t);
    return out;
}

std::map<std::string, std::string> random_docs(DeterministicRng& gen, std::size_t n_docs, std::size_t vocab) {
    std::map<std::string, std::string> docs;
    for (std::size_t d = 0; d < n_docs; ++d) {
        std::string text;
        const auto len = gen.below(12);
        for (std::uint64_t i = 0; i < len; ++i) text += "w" + std::to_string(gen.below(vocab)) + " ";
        docs["doc" + std::to_string(d)] = text;
    }
    return docs;
}

}  // namespace

TEST_CASE("tokenize lowercases alphanumeric runs") {
    CHECK(tokenize("BERT-based Models, v2!") == std::vector<std::string>{"bert", "based", "models", "v2"});
    CHECK(tokenize("").empty());
    CHECK(tokenize("  ...  ").empty());
    CHECK(tokenize("naïve") == std::vector<std::string>{"naïve"});
}

TEST_CASE("index statistics on a toy corpus") {
    const std::map<std::string, std::string> docs{{"d1", "cat sat"}, {"d2", "cat cat cat"}, {"d3", "dog"}};
    const auto idx = build_index(docs);
    CHECK(idx.n_docs() == 3);
    CHECK(idx.avgdl() == doctest::Approx(2.0));
    CHECK(idx.document_frequency("cat") == 2);
    CHECK(idx.term_count("cat", "d2") == 3);
    CHECK(idx.term_count("cat", "d3") == 0);
    CHECK(idx.document_frequency("bird") == 0);
    CHECK_THROWS_AS(build_index({}), std::invalid_argument);
}

TEST_CASE("bm25 scores on the toy corpus match frozen values") {
    const std::map<std::string, std::string> docs{{"d1", "cat sat"}, {"d2", "cat cat cat"}, {"d3", "dog"}};
    const auto idx = build_index(docs);
    const std::vector<std::string> q{"cat"};
    CHECK(bm25_score(idx, q, "d1") == doctest::Approx(0.47000362924573563).epsilon(1e-12));
    CHECK(bm25_score(idx, q, "d2") == doctest::Approx(0.6671019253810441).epsilon(1e-12));
    CHECK(bm25_score(idx, q, "d3") == 0.0);
    CHECK_THROWS_AS(bm25_score(idx, q, "d9"), std::invalid_argument);
    const auto hits = top_k(idx, "cat", 3);
    REQUIRE(hits.size() == 3);
    CHECK(hits[0].doc_id == "d2");
    CHECK(hits[1].doc_id == "d1");
    CHECK(hits[2].doc_id == "d3");
}

TEST_CASE("property: index scores equal the brute-force formula") {
    DeterministicRng gen(31);
    for (int trial = 0; trial < 80; ++trial) {
        const auto docs = random_docs(gen, 1 + gen.below(10), 2 + gen.below(15));
        const auto toks = tokenized(docs);
        const auto idx = build_index(docs);
        std::vector<std::string> q;
        for (std::uint64_t i = 0, n = 1 + gen.below(4); i < n; ++i) q.push_back("w" + std::to_string(gen.below(20)));
        for (const auto& [id, t] : docs) {
            CHECK(idx.score(q, id) == doctest::Approx(brute_bm25(toks, q, id)).epsilon(1e-12));
        }
    }
}

TEST_CASE("property: top_k equals a brute-force sort with id tie-breaks") {
    DeterministicRng gen(32);
    for (int trial = 0; trial < 80; ++trial) {
        const auto docs = random_docs(gen, 1 + gen.below(12), 2 + gen.below(6));
        const auto toks = tokenized(docs);
        const auto idx = build_index(docs);
        std::string query;
        for (std::uint64_t i = 0, n = 1 + gen.below(3); i < n; ++i) query += "w" + std::to_string(gen.below(8)) + " ";
        const auto qt = tokenize(query);
        std::vector<std::pair<double, std::string>> expect;
        for (const auto& [id, t] : docs) expect.emplace_back(brute_bm25(toks, qt, id), id);
        std::sort(expect.begin(), expect.end(), [](const auto& a, const auto& b) {
            if (std::abs(a.first - b.first) > 1e-12) return a.first > b.first;
            return a.second < b.second;
        });
        const std::size_t k = 1 + gen.below(docs.size());
        const auto hits = top_k(idx, query, k);
        REQUIRE(hits.size() == k);
        for (std::size_t i = 0; i < k; ++i) CHECK(hits[i].doc_id == expect[i].second);
    }
}

TEST_CASE("identical documents tie and are ordered by id") {
    const std::map<std::string, std::string> docs{{"b", "x y"}, {"a", "x y"}, {"c", "z"}};
    const auto hits = top_k(build_index(docs), "x", 2);
    CHECK(hits[0].doc_id == "a");
    CHECK(hits[1].doc_id == "b");
    CHECK_THROWS_AS(top_k(build_index(docs), "x", 0), std::invalid_argument);
}

TEST_CASE("property: score grows with term frequency and idf stays positive") {
    DeterministicRng gen(33);
    for (int trial = 0; trial < 100; ++trial) {
        auto docs = random_docs(gen, 2 + gen.below(8), 5);
        const auto base = build_index(docs);
        for (const auto& [tok, post] : base.postings()) CHECK(base.idf(tok) > 0.0);
        CHECK(base.idf("never-seen") > 0.0);
        // Appending one more occurrence of a query term to one document,
        // holding its length fixed by replacing a different token.
        const std::string target = "doc0";
        auto toks = tokenize(docs[target]);
        if (toks.size() < 2) continue;
        const std::string q = toks[0];
        auto it = std::find_if(toks.begin(), toks.end(), [&](const auto& t) { return t != q; });
        if (it == toks.end()) continue;
        const std::vector<std::string> query{q};
        const double before = base.score(query, target);
        *it = q;
        std::string text;
        for (const auto& t : toks) text += t + " ";
        docs[target] = text;
        const auto after_idx = build_index(docs);
        const auto df_before = base.document_frequency(q);
        CHECK(after_idx.document_frequency(q) == df_before);
        CHECK(after_idx.score(query, target) > before);
    }
}

TEST_CASE("nearest annotator by profile and its proxy labels") {
    Corpus c;
    auto add_ann = [&](const std::string& id, const std::string& profile) {
        Annotator a;
        a.id = AnnotatorId(id);
        a.subfield = "s";
        a.profile_text = profile;
        c.annotators.emplace(a.id, a);
    };
    add_ann("p", "parsing syntax treebanks dependency");
    add_ann("q", "dependency parsing syntax grammar");
    add_ann("r", "galaxies telescopes dark matter");
    for (const auto* id : {"d1", "d2"}) {
        AbstractDoc d;
        d.id = AbstractId(id);
        d.text = "neural dependency parsing with transformer encoders";
        d.domain = "CS";
        c.abstracts.emplace(d.id, d);
    }
    auto label = [&](const char* who, const char* abs, const char* term, Label l) {
        TermAnnotation t;
        t.annotator_id = AnnotatorId(who);
        t.abstract_id = AbstractId(abs);
        t.term = term;
        t.familiarity = l;
        c.annotations.push_back(t);
    };
    label("q", "d2", "transformer encoders", 1);
    label("q", "d1", "Transformer", 0);
    label("q", "d2", "transformer", 1);
    label("q", "d2", "dependency parsing", 0);
    label("p", "d1", "transformer", 1);
    const auto pool = all_annotation_indices(c);
    const auto idx = build_profile_index(c);

    CHECK(find_nearest_annotator(c, AnnotatorId("p"), idx) == AnnotatorId("q"));

    const std::vector<std::string> entities{"transformer", "neural"};
    const auto r = nearest_annotator(c, AnnotatorId("p"), idx, AbstractId("d1"), entities, pool);
    CHECK(r.neighbor == AnnotatorId("q"));
    REQUIRE(r.proxies.size() == 2);
    // Same-abstract exact match wins over the earlier other-abstract one.
    CHECK(r.proxies[0].term == "Transformer");
    CHECK(r.proxies[0].label == 0);
    // No exact match: the neighbor's best BM25 term. "neural" occurs in none,
    // so every term scores 0 and the smallest lowercased key wins.
    CHECK(r.proxies[1].term == "dependency parsing");

    const std::vector<std::string> fuzzy{"encoders"};
    const auto f = proxy_labels(c, AnnotatorId("q"), AbstractId("d1"), fuzzy, pool);
    CHECK(f[0].term == "transformer encoders");
    CHECK(f[0].label == 1);

    CHECK_THROWS_AS(proxy_labels(c, AnnotatorId("r"), AbstractId("d1"), fuzzy, pool), std::invalid_argument);
}

TEST_CASE("property: nearest annotator is the brute-force argmax over profiles") {
    DeterministicRng gen(34);
    for (int trial = 0; trial < 20; ++trial) {
        SyntheticOptions o;
        o.seed = gen.next();
        o.annotators = 2 + gen.below(6);
        o.vocabulary_size = 60;
        const auto c = make_synthetic_corpus(o);
        const auto idx = build_profile_index(c);
        std::map<std::string, std::string> profiles;
        for (const auto& [id, a] : c.annotators) profiles[id.value] = *a.profile_text;
        const auto toks = tokenized(profiles);
        for (const auto& [id, a] : c.annotators) {
            std::string best;
            double best_score = -1;
            for (const auto& [other, t] : profiles) {
                if (other == id.value) continue;
                const double s = brute_bm25(toks, tokenize(*a.profile_text), other);
                if (s > best_score + 1e-12) {
                    best = other;
                    best_score = s;
                }
            }
            CHECK(find_nearest_annotator(c, id, idx).value == best);
        }
    }
}

TEST_CASE("nearest abstract is the annotator's most similar other labelled abstract") {
    SyntheticOptions o;
    o.seed = 12;
    const auto c = make_synthetic_corpus(o);
    const auto idx = build_abstract_index(c);
    const auto pool = all_annotation_indices(c);
    std::map<std::string, std::string> texts;
    for (const auto& [id, d] : c.abstracts) texts[id.value] = d.text;
    const auto toks = tokenized(texts);

    for (const auto& [ann_id, a] : c.annotators) {
        std::vector<std::string> labelled;
        for (const auto& t : c.annotations) {
            if (t.annotator_id == ann_id && std::find(labelled.begin(), labelled.end(), t.abstract_id.value) == labelled.end()) {
                labelled.push_back(t.abstract_id.value);
            }
        }
        const auto target = AbstractId(labelled.front());
        std::string best;
        double best_score = -1;
        std::sort(labelled.begin(), labelled.end());
        for (const auto& cand : labelled) {
            if (cand == target.value) continue;
            const double s = brute_bm25(toks, tokenize(texts[target.value]), cand);
            if (s > best_score + 1e-12) {
                best = cand;
                best_score = s;
            }
        }
        const auto r = nearest_abstract(c, target, ann_id, idx, pool);
        CHECK(r.neighbor.value == best);
        std::vector<LabeledTerm> expect;
        for (const auto& t : c.annotations) {
            if (t.annotator_id == ann_id && t.abstract_id == r.neighbor) expect.push_back({t.term, t.familiarity});
        }
        REQUIRE(r.labels.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i) {
            CHECK(r.labels[i].term == expect[i].term);
            CHECK(r.labels[i].label == expect[i].label);
        }
    }
}
