#pragma once

#include "perjar/config.hpp"

#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace perjar {

enum ExitCode : int {
    kExitOk = 0,
    kExitPartialFailure = 2,
    kExitConfigError = 3,
};

/// One evaluated (cell, run, task, fold).
struct ResultRow {
    std::string annotator_id;
    std::string task;
    std::string strategy;
    std::string prompting;
    double fraction = 1.0;
    int run = 0;
    std::uint64_t seed = 0;
    std::string fold;
    Metrics metrics;
    /// Backend-reported optimizer steps of the final adapter, if any.
    std::optional<long long> steps;
    double wall_time_seconds = 0.0;

    nlohmann::json to_json() const;
    static ResultRow from_json(const nlohmann::json& j);
    /// Identifies the training cell the row came from.
    std::string cell_key() const;
};

std::vector<ResultRow> read_result_rows(const std::filesystem::path& file);

/// A training cell of a sweep: one adapter, evaluated on every task and on
/// the val and test folds.
struct SweepCell {
    AnnotatorId annotator;
    TrainingStrategy strategy;
    PromptStrategy prompting = PromptStrategy::vanilla;
    int run = 0;
    std::uint64_t seed = 0;

    std::string key() const;
};

/// Cartesian cells in deterministic order: annotator, strategy, prompting,
/// fraction, run. Self-supervised training ignores the fraction, so it
/// contributes one cell per (annotator, prompting, run).
std::vector<SweepCell> enumerate_cells(const Corpus& corpus, const ExperimentConfig& config);

/// Makes a backend for one cell. The mock gets a fresh instance per cell
/// so adapter ids do not depend on scheduling.
using BackendFactory = std::function<std::shared_ptr<ModelBackend>()>;
BackendFactory make_backend_factory(const ExperimentConfig& config);

struct CommandOutcome {
    std::size_t completed = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    int exit_code() const noexcept { return failed ? kExitPartialFailure : kExitOk; }
};

/// Writes into config.output_dir:
///   manifest.json  config snapshot, template version, corpus digest
///   results.rows   one JSON ResultRow per line, append-only
///   summary.tsv    cmd_report's table over all rows
///   run.log        JSON-lines event log
/// With `resume`, cells whose rows are already present are skipped and the
/// manifest must match.
CommandOutcome cmd_sweep(const ExperimentConfig& config, bool resume = false, const BackendFactory& factory = {});

/// Non-personalized baseline for `held_out`: one model per prompting in
/// {vanilla, metadata, profile} (restricted to config.promptings when it
/// lists any of them), trained on `match_size` annotations of the others.
CommandOutcome cmd_loao(const ExperimentConfig& config, const AnnotatorId& held_out, bool resume = false,
                        const BackendFactory& factory = {});

struct OracleChoice {
    AnnotatorId annotator;
    double agreement = 0.0;
    std::size_t shared = 0;
};

/// The other annotator agreeing most often with `target` on (abstract,
/// lowercased term) pairs both labelled in the training fold; ties go to
/// the smaller id. Throws std::invalid_argument when nobody overlaps.
OracleChoice select_oracle_annotator(const Corpus& corpus, const AnnotatorId& target, std::span<const std::size_t> train);

/// Predicts each evaluation term with the chosen annotator's label for the
/// same (abstract, term), falling back to that annotator's majority
/// training label (ties give 1). Never mismatches.
EvaluationReport oracle_baseline(const Corpus& corpus, const AnnotatorId& target, const DatasetSplit& split, std::span<const std::size_t> eval_items,
                                 TaskKind task = TaskKind::familiarity, OracleChoice* choice = nullptr);

/// Oracle rows for every annotator on val and test.
CommandOutcome cmd_oracle(const ExperimentConfig& config);

/// Writes summary.tsv and per_annotator/<id>.tsv from results.rows.
/// Throws Error when there are no rows.
void cmd_report(const std::filesystem::path& results_dir);

/// summary.tsv content for a set of rows. Cells are sorted by (strategy,
/// prompting, fraction, task, fold); means run over all rows of a cell,
/// standard deviations over the per-run means.
std::string summary_table(std::span<const ResultRow> rows);

struct ProfileOutcome {
    std::size_t generated = 0;
    std::size_t cached = 0;
    std::size_t failed = 0;
};

/// Generates a profile for every annotator lacking one and writes
/// profiles.jsonl next to the corpus files.
ProfileOutcome cmd_profile(const ExperimentConfig& config, ModelBackend* backend = nullptr);

}  // namespace perjar
