#include "perjar/split.hpp"

#include "perjar/random.hpp"

#include <algorithm>
#include <cmath>

namespace perjar {

std::string_view to_string(SplitGranularity g) noexcept {
    return g == SplitGranularity::abstract ? "abstract" : "annotation";
}

std::string_view to_string(Stratification s) noexcept {
    return s == Stratification::per_annotator ? "per_annotator" : "global";
}

std::string_view to_string(Fold f) noexcept {
    switch (f) {
        case Fold::train: return "train";
        case Fold::val: return "val";
        case Fold::test: return "test";
    }
    return "train";
}

Fold parse_fold(std::string_view s) {
    if (s == "train") return Fold::train;
    if (s == "val") return Fold::val;
    if (s == "test") return Fold::test;
    throw ConfigError("unknown fold '" + std::string(s) + "'");
}

const std::vector<std::size_t>& fold_indices(const DatasetSplit& split, Fold fold) {
    switch (fold) {
        case Fold::train: return split.train;
        case Fold::val: return split.val;
        case Fold::test: return split.test;
    }
    return split.train;
}

std::array<std::size_t, 3> fold_group_counts(std::size_t n_groups, const SplitRatios& ratios) {
    const auto share = [n_groups](double r) { return static_cast<std::size_t>(std::llround(r * static_cast<double>(n_groups))); };
    const std::size_t val = std::min(share(ratios.val), n_groups);
    const std::size_t test = std::min(share(ratios.test), n_groups - val);
    return {n_groups - val - test, val, test};
}

namespace {

void check_ratios(const SplitRatios& r) {
    if (r.train < 0 || r.val < 0 || r.test < 0) throw std::invalid_argument("split ratios must be non-negative");
    if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) throw std::invalid_argument("split ratios must sum to 1");
}

/// Shuffles the groups and deals them into folds: [val | test | train].
void deal(std::vector<const AnnotationGroup*>& groups, const SplitRatios& ratios, DeterministicRng& rng, DatasetSplit& out) {
    rng.shuffle(groups);
    const auto [n_train, n_val, n_test] = fold_group_counts(groups.size(), ratios);
    (void)n_train;
    for (std::size_t g = 0; g < groups.size(); ++g) {
        auto& fold = g < n_val ? out.val : (g < n_val + n_test ? out.test : out.train);
        fold.insert(fold.end(), groups[g]->indices.begin(), groups[g]->indices.end());
    }
}

}  // namespace

DatasetSplit make_random_split(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed, Stratification stratification) {
    check_ratios(ratios);
    if (corpus.annotations.empty()) throw std::invalid_argument("cannot split an empty corpus");

    const auto all = all_annotation_indices(corpus);
    const auto groups = group_annotations(corpus, all);

    DatasetSplit split;
    split.seed = seed;
    split.granularity = SplitGranularity::abstract;
    split.stratification = stratification;
    DeterministicRng rng(seed);

    if (stratification == Stratification::global) {
        std::vector<const AnnotationGroup*> ptrs;
        for (const auto& g : groups) ptrs.push_back(&g);
        deal(ptrs, ratios, rng, split);
    } else {
        std::map<AnnotatorId, std::vector<const AnnotationGroup*>> by_annotator;
        for (const auto& g : groups) by_annotator[g.annotator_id].push_back(&g);
        for (auto& [id, ptrs] : by_annotator) deal(ptrs, ratios, rng, split);
    }
    std::sort(split.train.begin(), split.train.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.test.begin(), split.test.end());
    return split;
}

std::vector<std::size_t> restrict_to_annotator(const Corpus& corpus, std::span<const std::size_t> indices, const AnnotatorId& annotator) {
    std::vector<std::size_t> out;
    for (const std::size_t i : indices) {
        if (corpus.annotations.at(i).annotator_id == annotator) out.push_back(i);
    }
    return out;
}

DatasetSplit make_loao_split(const Corpus& corpus, const AnnotatorId& held_out, std::size_t match_size, std::uint64_t seed) {
    if (!corpus.has_annotator(held_out)) throw std::invalid_argument("unknown annotator '" + held_out.value + "'");
    const auto base = make_random_split(corpus, SplitRatios{}, seed, Stratification::per_annotator);

    std::vector<std::size_t> others;
    for (const std::size_t i : base.train) {
        if (corpus.annotations[i].annotator_id != held_out) others.push_back(i);
    }
    if (match_size > others.size()) {
        throw std::invalid_argument("match_size " + std::to_string(match_size) + " exceeds the " + std::to_string(others.size()) +
                                    " training annotations of the other annotators");
    }

    DatasetSplit split;
    split.seed = seed;
    split.granularity = base.granularity;
    split.stratification = base.stratification;
    // Distinct stream from the base split's shuffle.
    DeterministicRng rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (const std::size_t p : rng.sample_positions(others.size(), match_size)) split.train.push_back(others[p]);
    split.val = restrict_to_annotator(corpus, base.val, held_out);
    split.test = restrict_to_annotator(corpus, base.test, held_out);
    return split;
}

std::size_t subsample_size(std::size_t n, double fraction) {
    const auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
    return std::min(n, std::max<std::size_t>(1, k));
}

std::vector<std::size_t> subsample(std::span<const std::size_t> items, double fraction, std::uint64_t seed) {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("subsample fraction must be in (0, 1]");
    if (items.empty()) throw std::invalid_argument("cannot subsample an empty list");
    const std::size_t k = subsample_size(items.size(), fraction);
    if (k == items.size()) return {items.begin(), items.end()};
    DeterministicRng rng(seed);
    std::vector<std::size_t> out;
    out.reserve(k);
    for (const std::size_t p : rng.sample_positions(items.size(), k)) out.push_back(items[p]);
    return out;
}

}  // namespace perjar
