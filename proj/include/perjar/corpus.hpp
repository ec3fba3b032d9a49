#pragma once

#include "perjar/common.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perjar {

inline constexpr int kCorpusSchemaVersion = 1;

enum class PublicationSource { annotator_authored, subdomain_augmentation };

std::string_view to_string(PublicationSource s) noexcept;
PublicationSource parse_publication_source(std::string_view s);

struct PublicationRecord {
    std::string title;
    std::string abstract_text;
    std::optional<int> year;
    PublicationSource source = PublicationSource::annotator_authored;
};

struct Annotator {
    AnnotatorId id;
    std::string subfield;
    int papers_published = 0;
    double avg_references = 0.0;
    std::optional<int> first_pub_year;
    std::vector<PublicationRecord> publications;
    std::optional<std::string> profile_text;
};

struct AbstractDoc {
    AbstractId id;
    std::optional<std::string> title;
    std::string text;
    std::string domain;
};

struct TermAnnotation {
    AnnotatorId annotator_id;
    AbstractId abstract_id;
    std::string term;
    Label familiarity = 0;
    std::optional<Label> needs_definition;
    std::optional<Label> needs_background;
    std::optional<Label> needs_example;
};

/// Annotators, abstracts and term-level labels with referential integrity.
/// Treated as immutable once loaded; every split and retrieval routine takes
/// it by const reference.
struct Corpus {
    std::map<AnnotatorId, Annotator> annotators;
    std::map<AbstractId, AbstractDoc> abstracts;
    std::vector<TermAnnotation> annotations;
    /// Keyed by normalize_subfield(subfield).
    std::map<std::string, std::vector<PublicationRecord>> augmentation_pool;

    const Annotator& annotator(const AnnotatorId& id) const;
    const AbstractDoc& abstract_doc(const AbstractId& id) const;
    bool has_annotator(const AnnotatorId& id) const { return annotators.contains(id); }

    /// Pool entries for the annotator's self-defined subfield (possibly empty).
    std::span<const PublicationRecord> pool_for(const Annotator& a) const;
};

/// Lowercased with surrounding whitespace removed; the augmentation pool key.
std::string normalize_subfield(std::string_view subfield);

/// Checks every type invariant. Throws CorpusError on the first violation;
/// soft findings (a term not found in its abstract) go to `warnings`.
void validate_corpus(const Corpus& corpus, std::vector<std::string>* warnings = nullptr);

/// Reads a corpus directory:
///   annotators.jsonl, abstracts.jsonl, annotations.jsonl (required)
///   publications.jsonl, augmentation_pool.jsonl, profiles.jsonl (optional)
/// Every file starts with the header record {"schema": 1}; each following
/// line is one flat JSON object. Annotation order is file order.
Corpus load_corpus(const std::filesystem::path& dir, std::vector<std::string>* warnings = nullptr);

/// Writes the corpus back out in the same layout (profiles inline on the
/// annotator records).
void save_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Writes `profiles.jsonl`: one {"annotator_id", "profile_text"} record per
/// annotator that has a profile.
void save_profiles_sidecar(const Corpus& corpus, const std::filesystem::path& file);

/// Digest over the canonical serialization of the corpus content.
std::string corpus_digest(const Corpus& corpus);

/// All annotations of one annotator on one abstract, in corpus order.
struct AnnotationGroup {
    AnnotatorId annotator_id;
    AbstractId abstract_id;
    std::vector<std::size_t> indices;
};

/// Groups the given annotation indices by (annotator, abstract), ordered by
/// first appearance in `indices`.
std::vector<AnnotationGroup> group_annotations(const Corpus& corpus, std::span<const std::size_t> indices);

/// Indices 0..n-1 of every annotation.
std::vector<std::size_t> all_annotation_indices(const Corpus& corpus);

}  // namespace perjar
