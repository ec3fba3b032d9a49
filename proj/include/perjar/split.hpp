#pragma once

#include "perjar/corpus.hpp"

#include <array>
#include <cstdint>

namespace perjar {

enum class SplitGranularity { abstract, annotation };

/// Whether fold shares are computed per annotator or over all groups at once.
enum class Stratification { per_annotator, global };

std::string_view to_string(SplitGranularity g) noexcept;
std::string_view to_string(Stratification s) noexcept;

struct SplitRatios {
    double train = 0.6;
    double val = 0.2;
    double test = 0.2;
};

/// Annotation indices per fold. Each fold is sorted ascending.
struct DatasetSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> val;
    std::vector<std::size_t> test;
    std::uint64_t seed = 0;
    SplitGranularity granularity = SplitGranularity::abstract;
    Stratification stratification = Stratification::per_annotator;
};

enum class Fold { train, val, test };
std::string_view to_string(Fold f) noexcept;
Fold parse_fold(std::string_view s);
const std::vector<std::size_t>& fold_indices(const DatasetSplit& split, Fold fold);

/// Rounded group counts (val, test) for `n_groups`; train takes the remainder.
std::array<std::size_t, 3> fold_group_counts(std::size_t n_groups, const SplitRatios& ratios);

/// Abstract-granularity split: every (annotator, abstract) group lands whole
/// in one fold. With per-annotator stratification each annotator's groups
/// are shuffled and cut separately, annotators visited in id order.
DatasetSplit make_random_split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed,
                               Stratification stratification = Stratification::per_annotator);

/// Non-personalized split for `held_out`: train is exactly `match_size`
/// annotations drawn from the other annotators' training folds; val and
/// test are the held-out annotator's own val/test folds of the 60/20/20
/// split with the same seed.
DatasetSplit make_loao_split(const Corpus& corpus, const AnnotatorId& held_out, std::size_t match_size, std::uint64_t seed);

/// Uniform random subset of size max(1, round(fraction * |items|)) in the
/// original relative order.
std::vector<std::size_t> subsample(std::span<const std::size_t> items, double fraction, std::uint64_t seed);

/// max(1, round(fraction * n)), clamped to n.
std::size_t subsample_size(std::size_t n, double fraction);

/// Annotations of `annotator` within `indices`, order preserved.
std::vector<std::size_t> restrict_to_annotator(const Corpus& corpus, std::span<const std::size_t> indices, const AnnotatorId& annotator);

}  // namespace perjar
