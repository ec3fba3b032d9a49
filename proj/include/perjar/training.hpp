#pragma once

#include "perjar/backend.hpp"
#include "perjar/split.hpp"

#include <filesystem>
#include <fstream>
#include <mutex>

namespace perjar {

struct TrainingStrategy {
    enum class Kind { supervised, self_supervised, semi_supervised };
    Kind kind = Kind::supervised;
    /// Share of labelled training groups used for SFT; in (0, 1].
    double fraction = 1.0;

    static TrainingStrategy supervised(double fraction = 1.0) { return {Kind::supervised, fraction}; }
    static TrainingStrategy self_supervised() { return {Kind::self_supervised, 1.0}; }
    static TrainingStrategy semi_supervised(double fraction) { return {Kind::semi_supervised, fraction}; }

    bool operator==(const TrainingStrategy&) const = default;
};

std::string_view to_string(TrainingStrategy::Kind k) noexcept;
TrainingStrategy::Kind parse_strategy_kind(std::string_view s);
/// e.g. "supervised@0.1", "self_supervised", "semi_supervised@0.1".
std::string strategy_tag(const TrainingStrategy& s);

enum class Phase { clm, sft };
std::string_view to_string(Phase p) noexcept;

/// Fully resolved recipe for one adapter.
struct TrainingPlan {
    TrainingStrategy strategy;
    /// Annotator the adapter is personalized for; for the non-personalized
    /// baseline this names the held-out annotator.
    std::string annotator_id;
    PromptStrategy prompting = PromptStrategy::vanilla;
    std::vector<AlpacaExample> sft_examples;
    std::vector<std::string> clm_texts;
    /// SFT-phase config, or the only phase's config.
    FineTuneConfig config;
    /// CLM-phase config of a semi-supervised plan.
    std::optional<FineTuneConfig> clm_config;
    std::vector<Phase> phase_order;

    const FineTuneConfig& config_for(Phase p) const;

    /// Throws std::logic_error when the strategy/phase invariants do not hold.
    void check_invariants() const;

    nlohmann::json to_json() const;
    /// SHA-256 over the canonical JSON (object keys sorted).
    std::string digest() const;
};

/// Inputs shared by every plan builder.
struct PlanInputs {
    const Corpus& corpus;
    const DatasetSplit& split;
    /// Optional; built on demand when a nearest_annotator prompt needs it.
    const Bm25Index* profile_index = nullptr;
    const Bm25Index* abstract_index = nullptr;
};

/// One rendered prompt with the gold labels of its entities.
struct LabeledPrompt {
    AnnotatorId annotator_id;
    AbstractId abstract_id;
    AlpacaExample example;
    LabelList labels;
};

/// Renders one labelled prompt per (annotator, abstract) group in
/// `indices`, skipping groups with no label for `task`. Context (metadata,
/// profiles, retrieved neighbors) comes from each group's own annotator;
/// retrieval only consults `context_pool`.
std::vector<LabeledPrompt> build_labeled_prompts(const Corpus& corpus, std::span<const std::size_t> indices, PromptStrategy prompting,
                                                 std::span<const std::size_t> context_pool, const Bm25Index* profile_index,
                                                 const Bm25Index* abstract_index, TaskKind task);

/// Renders one labelled example per (annotator, abstract) group in
/// `indices`. Context (metadata, profiles, retrieved neighbors) comes from
/// each group's own annotator; retrieval only consults `context_pool`.
std::vector<AlpacaExample> build_sft_examples(const Corpus& corpus, std::span<const std::size_t> indices, PromptStrategy prompting,
                                              std::span<const std::size_t> context_pool, const Bm25Index* profile_index,
                                              const Bm25Index* abstract_index, TaskKind task = TaskKind::familiarity);

/// One SFT example per training group of `annotator`; with fraction < 1
/// the groups are subsampled first.
TrainingPlan build_supervised_plan(const PlanInputs& in, const AnnotatorId& annotator, PromptStrategy prompting, FineTuneConfig config,
                                   double fraction = 1.0, std::uint64_t seed = 0);

/// "Title: ...\nAbstract: ..." for each authored publication; annotators
/// with <= 5 publications get pool papers from their subfield until 20
/// texts or the pool runs out.
TrainingPlan build_selfsup_plan(const Annotator& annotator, std::span<const PublicationRecord> augmentation_pool, FineTuneConfig config);

/// Per-phase configs: SFT defaults to 20 epochs, CLM to 50.
struct PhaseConfigs {
    FineTuneConfig sft = FineTuneConfig::for_phase_defaults(FineTuneConfig::kSupervisedEpochs);
    FineTuneConfig clm = FineTuneConfig::for_phase_defaults(FineTuneConfig::kSelfSupervisedEpochs);

    /// Applies the same overrides to both phases.
    void apply_overrides(const std::map<std::string, std::string>& overrides);
};

/// CLM on the publication texts, then SFT on a subsample of the labelled
/// groups continuing from the CLM adapter.
TrainingPlan build_semisup_plan(const PlanInputs& in, const AnnotatorId& annotator, PromptStrategy prompting, double fraction,
                                const PhaseConfigs& configs, std::uint64_t seed);

/// Dispatches on the strategy kind.
TrainingPlan build_plan(const PlanInputs& in, const AnnotatorId& annotator, const TrainingStrategy& strategy, PromptStrategy prompting,
                        const PhaseConfigs& configs, std::uint64_t seed);

inline constexpr std::size_t kAugmentationThreshold = 5;
inline constexpr std::size_t kAugmentationTarget = 20;

std::string format_clm_text(const PublicationRecord& p);

/// Checkpoint interval in steps: epoch_size * 10 / 8 with integer division.
long long checkpoint_steps(long long epoch_size);

/// Append-only JSON-lines log. Thread-safe.
class RunLog {
public:
    RunLog() = default;
    explicit RunLog(const std::filesystem::path& file);

    void append(nlohmann::json record);
    std::vector<nlohmann::json> records() const;

private:
    mutable std::mutex mu_;
    std::vector<nlohmann::json> records_;
    std::ofstream out_;
};

/// Error from a failed training phase; no adapter is returned.
class PhaseError : public Error {
public:
    PhaseError(Phase phase, const std::string& what) : Error(std::string(to_string(phase)) + " phase failed: " + what), phase_(phase) {}
    Phase phase() const noexcept { return phase_; }

private:
    Phase phase_;
};

/// Hash of a finetune call: config, payload and base adapter.
std::string finetune_hash(Phase phase, const nlohmann::json& payload, const FineTuneConfig& config, const std::string& base_hash);

/// Runs the phases in order, threading the adapter between them.
AdapterHandle run_plan(ModelBackend& backend, const TrainingPlan& plan, RunLog* log = nullptr);

}  // namespace perjar
