#pragma once

#include "perjar/corpus.hpp"

#include <filesystem>
#include <optional>
#include <string>

namespace perjar::testing {

enum class LabelRule {
    /// Each term is unfamiliar with probability `unfamiliar_rate`.
    random,
    /// Familiar iff every token of the term occurs in the annotator's
    /// publication titles and abstracts.
    vocabulary,
};

struct SyntheticOptions {
    std::uint64_t seed = 1;
    std::size_t annotators = 5;
    std::size_t abstracts = 20;
    std::size_t abstracts_per_annotator = 10;
    std::size_t terms_per_abstract = 4;
    std::size_t vocabulary_size = 300;
    /// Share of the vocabulary each annotator writes with.
    double known_share = 0.4;
    std::size_t publications_per_annotator = 8;
    std::size_t pool_per_subfield = 10;
    LabelRule rule = LabelRule::random;
    double unfamiliar_rate = 0.6;
    bool profiles = true;
    bool needs_labels = true;
    /// Adds annotator "clone" copying every label of this annotator.
    std::optional<std::string> clone_of;
};

Corpus make_synthetic_corpus(const SyntheticOptions& options);

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(std::string_view stem);
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const noexcept { return path_; }

private:
    std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& file);

}  // namespace perjar::testing
