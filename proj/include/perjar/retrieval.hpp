#pragma once

#include "perjar/corpus.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace perjar {

inline constexpr double kBm25K1 = 1.2;
inline constexpr double kBm25B = 0.75;

/// Lowercased ASCII-alphanumeric runs. Bytes >= 0x80 are kept as word
/// characters so UTF-8 words stay whole. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

/// Inverted index for Okapi BM25 with the non-negative idf
/// ln(1 + (N - df + 0.5) / (df + 0.5)). Immutable after construction.
class Bm25Index {
public:
    Bm25Index(const std::map<std::string, std::string>& docs, double k1 = kBm25K1, double b = kBm25B);

    double score(std::span<const std::string> query, const std::string& doc_id) const;
    double idf(const std::string& token) const;

    /// Number of documents containing `token`.
    std::size_t document_frequency(const std::string& token) const;
    /// Occurrences of `token` in `doc_id` (0 when absent).
    int term_count(const std::string& token, const std::string& doc_id) const;

    bool contains(const std::string& doc_id) const { return doc_len_.contains(doc_id); }
    std::size_t n_docs() const noexcept { return doc_len_.size(); }
    double avgdl() const noexcept { return avgdl_; }
    double k1() const noexcept { return k1_; }
    double b() const noexcept { return b_; }
    const std::map<std::string, std::size_t>& doc_lengths() const noexcept { return doc_len_; }
    const std::unordered_map<std::string, std::map<std::string, int>>& postings() const noexcept { return postings_; }

private:
    std::unordered_map<std::string, std::map<std::string, int>> postings_;
    std::map<std::string, std::size_t> doc_len_;
    double avgdl_ = 0.0;
    double k1_;
    double b_;
};

struct RankedHit {
    std::string doc_id;
    double score = 0.0;
};

Bm25Index build_index(const std::map<std::string, std::string>& docs, double k1 = kBm25K1, double b = kBm25B);
double bm25_score(const Bm25Index& index, std::span<const std::string> query, const std::string& doc_id);

/// Best `k` documents by score, descending; equal scores ordered by id.
std::vector<RankedHit> top_k(const Bm25Index& index, std::string_view query, std::size_t k);

/// Like top_k but over a candidate subset; unknown candidates are an error.
std::vector<RankedHit> rank_candidates(const Bm25Index& index, std::span<const std::string> query,
                                       std::span<const std::string> candidates);

struct LabeledTerm {
    std::string term;
    Label label = 0;
};

/// Profiles of every annotator that has one, keyed by annotator id.
Bm25Index build_profile_index(const Corpus& corpus);
/// Abstract texts keyed by abstract id.
Bm25Index build_abstract_index(const Corpus& corpus);

/// Top-1 other annotator by BM25 over profile texts.
AnnotatorId find_nearest_annotator(const Corpus& corpus, const AnnotatorId& target, const Bm25Index& profile_index);

/// The neighbor's familiarity labels for the given entities: an exact
/// case-insensitive term match first (same abstract preferred, then corpus
/// order), otherwise the neighbor's top-1 BM25 term. Only annotations in
/// `pool` are consulted. Output order follows `entities`.
std::vector<LabeledTerm> proxy_labels(const Corpus& corpus, const AnnotatorId& neighbor, const AbstractId& abstract_id,
                                      std::span<const std::string> entities, std::span<const std::size_t> pool);

struct NearestAnnotatorResult {
    AnnotatorId neighbor;
    std::vector<LabeledTerm> proxies;
};

NearestAnnotatorResult nearest_annotator(const Corpus& corpus, const AnnotatorId& target, const Bm25Index& profile_index,
                                         const AbstractId& abstract_id, std::span<const std::string> entities,
                                         std::span<const std::size_t> pool);

struct NearestAbstractResult {
    AbstractId neighbor;
    std::vector<LabeledTerm> labels;
};

/// Most similar other abstract the annotator labelled (within `pool`), using
/// the target abstract's text as the query; returns the annotator's own
/// labels for it in annotation order.
NearestAbstractResult nearest_abstract(const Corpus& corpus, const AbstractId& target_abstract, const AnnotatorId& annotator,
                                       const Bm25Index& abstract_index, std::span<const std::size_t> pool);

}  // namespace perjar
