#pragma once

#include "perjar/training.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perjar {

struct ParsedPrediction {
    /// Present exactly when the output conformed.
    std::optional<LabelList> labels;
    bool mismatch = true;
    std::string raw;
};

/// Collects every standalone 0/1 digit (not touching another digit or a
/// letter) in order. A count different from `expected_len` is a mismatch.
ParsedPrediction parse_label_list(std::string_view raw, std::size_t expected_len);

struct ConfusionCounts {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const noexcept { return tp + fp + fn + tn; }
    ConfusionCounts& operator+=(const ConfusionCounts& o) noexcept;
    bool operator==(const ConfusionCounts&) const = default;
};

/// Positive class is 1. Throws std::invalid_argument on a length mismatch.
ConfusionCounts confusion(std::span<const Label> preds, std::span<const Label> golds);

struct Prf1 {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Zero denominators give 0.
Prf1 prf1(const ConfusionCounts& c) noexcept;

/// (1 - mismatch_rate) * f1; both inputs must lie in [0, 1].
double effective_f1(double f1, double mismatch_rate);

/// How items of a mismatched prompt enter the confusion counts.
enum class MismatchMode {
    /// Left out; penalized only through the effective-F1 factor.
    exclude,
    /// Scored as if every item were predicted 0.
    zero_fill,
};

std::string_view to_string(MismatchMode m) noexcept;
MismatchMode parse_mismatch_mode(std::string_view s);

struct Metrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    double mismatch_rate = 0.0;
    double effective_f1 = 0.0;
    std::size_t n_prompts = 0;
    std::size_t n_items = 0;
    ConfusionCounts counts;
    std::size_t n_mismatched = 0;

    /// Recomputes the rates from counts, n_prompts and n_mismatched.
    static Metrics from_counts(const ConfusionCounts& counts, std::size_t n_prompts, std::size_t n_mismatched, std::size_t n_items);
};

struct EvaluationReport {
    Metrics overall;
    std::map<std::string, Metrics> per_annotator;
    static constexpr Label positive_class = 1;
};

/// Outcome of one scored prompt, the unit reports are built from.
struct PromptOutcome {
    std::string annotator_id;
    LabelList golds;
    ParsedPrediction prediction;
};

EvaluationReport build_report(std::span<const PromptOutcome> outcomes, MismatchMode mode = MismatchMode::exclude);

struct EvaluationOptions {
    TaskKind task = TaskKind::familiarity;
    PromptStrategy prompting = PromptStrategy::vanilla;
    MismatchMode mismatch_mode = MismatchMode::exclude;
    int max_new_tokens = 64;
    /// Retrieval context for nearest-* prompts; defaults to split.train.
    std::optional<std::vector<std::size_t>> context_pool;
    /// Prebuilt indexes; built on demand when null.
    const Bm25Index* profile_index = nullptr;
    const Bm25Index* abstract_index = nullptr;
};

/// One generate call per (annotator, abstract) group of `fold_items`,
/// temperature 0. Groups without a label for the task are skipped. A
/// backend exception marks that prompt as mismatched and is logged.
/// `outcomes`, when given, is overwritten with one entry per scored prompt.
EvaluationReport evaluate_adapter(ModelBackend& backend, const AdapterHandle* adapter, const Corpus& corpus, const DatasetSplit& split,
                                  std::span<const std::size_t> fold_items, const EvaluationOptions& options, RunLog* log = nullptr,
                                  std::vector<PromptOutcome>* outcomes = nullptr);

/// Mean and sample standard deviation (n - 1; 0 for a single value).
struct MeanStd {
    double mean = 0.0;
    double stdev = 0.0;
};

MeanStd mean_std(std::span<const double> values);

struct RunAggregate {
    std::size_t runs = 0;
    MeanStd precision;
    MeanStd recall;
    MeanStd f1;
    MeanStd mismatch_rate;
    MeanStd effective_f1;
};

/// Throws std::invalid_argument on an empty list.
RunAggregate aggregate(std::span<const Metrics> runs);
RunAggregate aggregate(std::span<const EvaluationReport> reports);

/// Tab-separated: header, then "overall" and one row per annotator.
/// Columns: scope, precision, recall, f1, mismatch_rate, effective_f1,
/// n_prompts, n_items.
std::string report_table(const EvaluationReport& report);

/// Fixed-precision rendering used in every emitted table.
std::string format_metric(double v);

}  // namespace perjar
