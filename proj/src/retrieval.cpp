#include "perjar/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace perjar {

namespace {

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c >= 0x80;
}

void sort_hits(std::vector<RankedHit>& hits) {
    std::sort(hits.begin(), hits.end(), [](const RankedHit& a, const RankedHit& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (is_word_byte(c)) {
            cur.push_back(c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : ch);
        } else if (!cur.empty()) {
            tokens.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) tokens.push_back(std::move(cur));
    return tokens;
}

Bm25Index::Bm25Index(const std::map<std::string, std::string>& docs, double k1, double b) : k1_(k1), b_(b) {
    if (docs.empty()) throw std::invalid_argument("build_index: no documents");
    std::size_t total = 0;
    for (const auto& [id, text] : docs) {
        const auto tokens = tokenize(text);
        doc_len_[id] = tokens.size();
        total += tokens.size();
        for (const auto& t : tokens) ++postings_[t][id];
    }
    avgdl_ = static_cast<double>(total) / static_cast<double>(docs.size());
}

std::size_t Bm25Index::document_frequency(const std::string& token) const {
    const auto it = postings_.find(token);
    return it == postings_.end() ? 0 : it->second.size();
}

int Bm25Index::term_count(const std::string& token, const std::string& doc_id) const {
    const auto it = postings_.find(token);
    if (it == postings_.end()) return 0;
    const auto d = it->second.find(doc_id);
    return d == it->second.end() ? 0 : d->second;
}

double Bm25Index::idf(const std::string& token) const {
    const auto n = static_cast<double>(doc_len_.size());
    const auto df = static_cast<double>(document_frequency(token));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::score(std::span<const std::string> query, const std::string& doc_id) const {
    const auto len = doc_len_.find(doc_id);
    if (len == doc_len_.end()) throw std::invalid_argument("bm25_score: unknown document '" + doc_id + "'");
    const double dl = static_cast<double>(len->second);
    double total = 0.0;
    for (const auto& token : query) {
        const int tf_count = term_count(token, doc_id);
        if (tf_count == 0) continue;
        // tf > 0 implies avgdl > 0.
        const double tf = tf_count;
        const double norm = k1_ * (1.0 - b_ + b_ * dl / avgdl_);
        total += idf(token) * tf * (k1_ + 1.0) / (tf + norm);
    }
    return total;
}

Bm25Index build_index(const std::map<std::string, std::string>& docs, double k1, double b) { return Bm25Index(docs, k1, b); }

double bm25_score(const Bm25Index& index, std::span<const std::string> query, const std::string& doc_id) {
    return index.score(query, doc_id);
}

std::vector<RankedHit> top_k(const Bm25Index& index, std::string_view query, std::size_t k) {
    if (k == 0) throw std::invalid_argument("top_k: k must be >= 1");
    const auto tokens = tokenize(query);
    std::vector<RankedHit> hits;
    hits.reserve(index.n_docs());
    for (const auto& [id, len] : index.doc_lengths()) hits.push_back({id, index.score(tokens, id)});
    sort_hits(hits);
    if (hits.size() > k) hits.resize(k);
    return hits;
}

std::vector<RankedHit> rank_candidates(const Bm25Index& index, std::span<const std::string> query, std::span<const std::string> candidates) {
    std::vector<RankedHit> hits;
    hits.reserve(candidates.size());
    for (const auto& id : candidates) hits.push_back({id, index.score(query, id)});
    sort_hits(hits);
    return hits;
}

Bm25Index build_profile_index(const Corpus& corpus) {
    std::map<std::string, std::string> docs;
    for (const auto& [id, a] : corpus.annotators) {
        if (a.profile_text) docs.emplace(id.value, *a.profile_text);
    }
    if (docs.empty()) throw std::invalid_argument("no annotator has a profile");
    return Bm25Index(docs);
}

Bm25Index build_abstract_index(const Corpus& corpus) {
    std::map<std::string, std::string> docs;
    for (const auto& [id, d] : corpus.abstracts) docs.emplace(id.value, d.text);
    return Bm25Index(docs);
}

AnnotatorId find_nearest_annotator(const Corpus& corpus, const AnnotatorId& target, const Bm25Index& profile_index) {
    const auto& a = corpus.annotator(target);
    if (!a.profile_text) throw std::invalid_argument("annotator '" + target.value + "' has no profile");
    std::vector<std::string> candidates;
    for (const auto& [id, len] : profile_index.doc_lengths()) {
        if (id != target.value) candidates.push_back(id);
    }
    if (candidates.empty()) throw std::invalid_argument("no other annotator with a profile to compare against");
    const auto hits = rank_candidates(profile_index, tokenize(*a.profile_text), candidates);
    return AnnotatorId(hits.front().doc_id);
}

std::vector<LabeledTerm> proxy_labels(const Corpus& corpus, const AnnotatorId& neighbor, const AbstractId& abstract_id,
                                      std::span<const std::string> entities, std::span<const std::size_t> pool) {
    // Neighbor's labelled terms, same-abstract entries first.
    std::vector<std::size_t> same;
    std::vector<std::size_t> other;
    for (const std::size_t i : pool) {
        const auto& t = corpus.annotations.at(i);
        if (t.annotator_id != neighbor) continue;
        (t.abstract_id == abstract_id ? same : other).push_back(i);
    }
    std::vector<std::size_t> ordered = same;
    ordered.insert(ordered.end(), other.begin(), other.end());
    if (ordered.empty()) throw std::invalid_argument("annotator '" + neighbor.value + "' has no labelled terms to borrow");

    std::map<std::string, std::size_t> exact;  // lowercased term -> first annotation
    std::map<std::string, std::string> term_docs;
    std::map<std::string, std::size_t> doc_annotation;
    for (const std::size_t i : ordered) {
        const auto& t = corpus.annotations[i];
        const auto key = to_lower_ascii(t.term);
        exact.try_emplace(key, i);
        if (term_docs.try_emplace(key, t.term).second) doc_annotation.emplace(key, i);
    }

    std::optional<Bm25Index> term_index;
    std::vector<LabeledTerm> out;
    out.reserve(entities.size());
    for (const auto& entity : entities) {
        const auto hit = exact.find(to_lower_ascii(entity));
        if (hit != exact.end()) {
            const auto& t = corpus.annotations[hit->second];
            out.push_back({t.term, t.familiarity});
            continue;
        }
        if (!term_index) term_index.emplace(term_docs);
        const auto best = top_k(*term_index, entity, 1).front();
        const auto& t = corpus.annotations[doc_annotation.at(best.doc_id)];
        out.push_back({t.term, t.familiarity});
    }
    return out;
}

NearestAnnotatorResult nearest_annotator(const Corpus& corpus, const AnnotatorId& target, const Bm25Index& profile_index,
                                         const AbstractId& abstract_id, std::span<const std::string> entities,
                                         std::span<const std::size_t> pool) {
    NearestAnnotatorResult r;
    r.neighbor = find_nearest_annotator(corpus, target, profile_index);
    r.proxies = proxy_labels(corpus, r.neighbor, abstract_id, entities, pool);
    return r;
}

NearestAbstractResult nearest_abstract(const Corpus& corpus, const AbstractId& target_abstract, const AnnotatorId& annotator,
                                       const Bm25Index& abstract_index, std::span<const std::size_t> pool) {
    std::set<std::string> seen;
    std::vector<std::string> candidates;
    for (const std::size_t i : pool) {
        const auto& t = corpus.annotations.at(i);
        if (t.annotator_id != annotator || t.abstract_id == target_abstract) continue;
        if (seen.insert(t.abstract_id.value).second) candidates.push_back(t.abstract_id.value);
    }
    if (candidates.empty()) {
        throw std::invalid_argument("annotator '" + annotator.value + "' has no other labelled abstract besides '" + target_abstract.value + "'");
    }
    const auto query = tokenize(corpus.abstract_doc(target_abstract).text);
    const auto hits = rank_candidates(abstract_index, query, candidates);

    NearestAbstractResult r;
    r.neighbor = AbstractId(hits.front().doc_id);
    for (const std::size_t i : pool) {
        const auto& t = corpus.annotations[i];
        if (t.annotator_id == annotator && t.abstract_id == r.neighbor) r.labels.push_back({t.term, t.familiarity});
    }
    return r;
}

}  // namespace perjar
