#include "perjar/training.hpp"

#include "perjar/digest.hpp"

#include <fmt/format.h>

#include <chrono>

namespace perjar {

using nlohmann::json;

std::string_view to_string(TrainingStrategy::Kind k) noexcept {
    switch (k) {
        case TrainingStrategy::Kind::supervised: return "supervised";
        case TrainingStrategy::Kind::self_supervised: return "self_supervised";
        case TrainingStrategy::Kind::semi_supervised: return "semi_supervised";
    }
    return "supervised";
}

TrainingStrategy::Kind parse_strategy_kind(std::string_view s) {
    if (s == "supervised") return TrainingStrategy::Kind::supervised;
    if (s == "self_supervised") return TrainingStrategy::Kind::self_supervised;
    if (s == "semi_supervised") return TrainingStrategy::Kind::semi_supervised;
    throw ConfigError("unknown training strategy '" + std::string(s) + "'");
}

std::string strategy_tag(const TrainingStrategy& s) {
    if (s.kind == TrainingStrategy::Kind::self_supervised) return std::string(to_string(s.kind));
    return fmt::format("{}@{}", to_string(s.kind), s.fraction);
}

std::string_view to_string(Phase p) noexcept { return p == Phase::clm ? "clm" : "sft"; }

void PhaseConfigs::apply_overrides(const std::map<std::string, std::string>& overrides) {
    sft.apply_overrides(overrides);
    clm.apply_overrides(overrides);
}

const FineTuneConfig& TrainingPlan::config_for(Phase p) const {
    if (p == Phase::clm && clm_config) return *clm_config;
    return config;
}

void TrainingPlan::check_invariants() const {
    using K = TrainingStrategy::Kind;
    switch (strategy.kind) {
        case K::supervised:
            if (sft_examples.empty() || !clm_texts.empty()) throw std::logic_error("supervised plan needs SFT examples and no CLM texts");
            if (phase_order != std::vector<Phase>{Phase::sft}) throw std::logic_error("supervised plan must run only the sft phase");
            break;
        case K::self_supervised:
            if (clm_texts.empty() || !sft_examples.empty()) throw std::logic_error("self-supervised plan needs CLM texts and no SFT examples");
            if (phase_order != std::vector<Phase>{Phase::clm}) throw std::logic_error("self-supervised plan must run only the clm phase");
            break;
        case K::semi_supervised:
            if (clm_texts.empty() || sft_examples.empty()) throw std::logic_error("semi-supervised plan needs both CLM texts and SFT examples");
            if (phase_order != std::vector<Phase>{Phase::clm, Phase::sft}) throw std::logic_error("semi-supervised plan must run clm then sft");
            break;
    }
    for (const auto& ex : sft_examples) {
        if (!ex.response) throw std::logic_error("SFT example without a response");
    }
    if (!(strategy.fraction > 0 && strategy.fraction <= 1)) throw std::logic_error("strategy fraction outside (0, 1]");
}

namespace {

json examples_json(std::span<const AlpacaExample> examples) {
    json arr = json::array();
    for (const auto& ex : examples) {
        arr.push_back(json{{"instruction", ex.instruction}, {"input", ex.input}, {"response", ex.response ? json(*ex.response) : json()}});
    }
    return arr;
}

}  // namespace

json TrainingPlan::to_json() const {
    json phases = json::array();
    for (const auto p : phase_order) phases.push_back(std::string(to_string(p)));
    return json{{"strategy", std::string(to_string(strategy.kind))},
                {"fraction", strategy.fraction},
                {"annotator_id", annotator_id},
                {"prompting", std::string(to_string(prompting))},
                {"template_version", std::string(template_version())},
                {"sft_examples", examples_json(sft_examples)},
                {"clm_texts", clm_texts},
                {"config", config.to_json()},
                {"clm_config", clm_config ? clm_config->to_json() : json()},
                {"phase_order", phases}};
}

std::string TrainingPlan::digest() const { return sha256_hex(to_json().dump()); }

std::vector<LabeledPrompt> build_labeled_prompts(const Corpus& corpus, std::span<const std::size_t> indices, PromptStrategy prompting,
                                                 std::span<const std::size_t> context_pool, const Bm25Index* profile_index,
                                                 const Bm25Index* abstract_index, TaskKind task) {
    std::optional<Bm25Index> own_profiles;
    std::optional<Bm25Index> own_abstracts;
    if (prompting == PromptStrategy::nearest_annotator && !profile_index) profile_index = &own_profiles.emplace(build_profile_index(corpus));
    if (prompting == PromptStrategy::nearest_abstract && !abstract_index) abstract_index = &own_abstracts.emplace(build_abstract_index(corpus));

    // One neighbor per target annotator, computed once.
    std::map<AnnotatorId, AnnotatorId> neighbors;
    std::vector<LabeledPrompt> out;
    for (const auto& group : group_annotations(corpus, indices)) {
        const auto& annotator = corpus.annotator(group.annotator_id);
        const auto& doc = corpus.abstract_doc(group.abstract_id);
        std::vector<std::string> entities;
        LabelList labels;
        for (const std::size_t i : group.indices) {
            const auto& a = corpus.annotations[i];
            const auto label = task_label(a, task);
            if (!label) continue;
            entities.push_back(a.term);
            labels.push_back(*label);
        }
        if (entities.empty()) continue;

        RetrievalOutputs retrieval;
        if (prompting == PromptStrategy::nearest_annotator) {
            auto it = neighbors.find(group.annotator_id);
            if (it == neighbors.end()) {
                it = neighbors.emplace(group.annotator_id, find_nearest_annotator(corpus, group.annotator_id, *profile_index)).first;
            }
            retrieval.nearest_annotator = proxy_labels(corpus, it->second, group.abstract_id, entities, context_pool);
        } else if (prompting == PromptStrategy::nearest_abstract) {
            retrieval.nearest_abstract = nearest_abstract(corpus, group.abstract_id, group.annotator_id, *abstract_index, context_pool).labels;
        }
        PromptContext ctx{annotator, doc, std::move(entities), render_related_data(prompting, annotator, doc, retrieval)};
        auto example = assemble_example(task, prompting, ctx, std::span<const Label>(labels));
        out.push_back(LabeledPrompt{group.annotator_id, group.abstract_id, std::move(example), std::move(labels)});
    }
    return out;
}

std::vector<AlpacaExample> build_sft_examples(const Corpus& corpus, std::span<const std::size_t> indices, PromptStrategy prompting,
                                              std::span<const std::size_t> context_pool, const Bm25Index* profile_index,
                                              const Bm25Index* abstract_index, TaskKind task) {
    std::vector<AlpacaExample> out;
    for (auto& p : build_labeled_prompts(corpus, indices, prompting, context_pool, profile_index, abstract_index, task)) {
        out.push_back(std::move(p.example));
    }
    return out;
}

TrainingPlan build_supervised_plan(const PlanInputs& in, const AnnotatorId& annotator, PromptStrategy prompting, FineTuneConfig config,
                                   double fraction, std::uint64_t seed) {
    if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("supervised fraction must be in (0, 1]");
    in.corpus.annotator(annotator);
    const auto own = restrict_to_annotator(in.corpus, in.split.train, annotator);
    if (own.empty()) throw std::invalid_argument("annotator '" + annotator.value + "' has no training annotations in the split");

    auto groups = group_annotations(in.corpus, own);
    std::vector<std::size_t> selected;
    if (fraction < 1.0) {
        std::vector<std::size_t> positions(groups.size());
        for (std::size_t g = 0; g < positions.size(); ++g) positions[g] = g;
        for (const std::size_t g : subsample(positions, fraction, seed)) {
            selected.insert(selected.end(), groups[g].indices.begin(), groups[g].indices.end());
        }
    } else {
        selected = own;
    }

    config.validate();
    TrainingPlan plan;
    plan.strategy = TrainingStrategy::supervised(fraction);
    plan.annotator_id = annotator.value;
    plan.prompting = prompting;
    plan.sft_examples =
        build_sft_examples(in.corpus, selected, prompting, in.split.train, in.profile_index, in.abstract_index, TaskKind::familiarity);
    plan.config = std::move(config);
    plan.phase_order = {Phase::sft};
    plan.check_invariants();
    return plan;
}

std::string format_clm_text(const PublicationRecord& p) { return "Title: " + p.title + "\nAbstract: " + p.abstract_text; }

TrainingPlan build_selfsup_plan(const Annotator& annotator, std::span<const PublicationRecord> augmentation_pool, FineTuneConfig config) {
    TrainingPlan plan;
    plan.strategy = TrainingStrategy::self_supervised();
    plan.annotator_id = annotator.id.value;
    for (const auto& p : annotator.publications) plan.clm_texts.push_back(format_clm_text(p));
    if (annotator.publications.size() <= kAugmentationThreshold) {
        for (const auto& p : augmentation_pool) {
            if (plan.clm_texts.size() >= kAugmentationTarget) break;
            plan.clm_texts.push_back(format_clm_text(p));
        }
    }
    if (plan.clm_texts.empty()) {
        throw std::invalid_argument("annotator '" + annotator.id.value + "' has no publications and no augmentation papers");
    }
    config.validate();
    plan.config = std::move(config);
    plan.phase_order = {Phase::clm};
    plan.check_invariants();
    return plan;
}

TrainingPlan build_semisup_plan(const PlanInputs& in, const AnnotatorId& annotator, PromptStrategy prompting, double fraction,
                                const PhaseConfigs& configs, std::uint64_t seed) {
    if (!(fraction > 0 && fraction <= 1)) throw std::invalid_argument("semi-supervised fraction must be in (0, 1]");
    const auto& a = in.corpus.annotator(annotator);
    auto clm = build_selfsup_plan(a, in.corpus.pool_for(a), configs.clm);
    auto sft = build_supervised_plan(in, annotator, prompting, configs.sft, fraction, seed);

    TrainingPlan plan;
    plan.strategy = TrainingStrategy::semi_supervised(fraction);
    plan.annotator_id = annotator.value;
    plan.prompting = prompting;
    plan.sft_examples = std::move(sft.sft_examples);
    plan.clm_texts = std::move(clm.clm_texts);
    plan.config = configs.sft;
    plan.clm_config = configs.clm;
    plan.phase_order = {Phase::clm, Phase::sft};
    plan.check_invariants();
    return plan;
}

TrainingPlan build_plan(const PlanInputs& in, const AnnotatorId& annotator, const TrainingStrategy& strategy, PromptStrategy prompting,
                        const PhaseConfigs& configs, std::uint64_t seed) {
    switch (strategy.kind) {
        case TrainingStrategy::Kind::supervised:
            return build_supervised_plan(in, annotator, prompting, configs.sft, strategy.fraction, seed);
        case TrainingStrategy::Kind::self_supervised: {
            const auto& a = in.corpus.annotator(annotator);
            auto plan = build_selfsup_plan(a, in.corpus.pool_for(a), configs.clm);
            plan.prompting = prompting;
            return plan;
        }
        case TrainingStrategy::Kind::semi_supervised:
            return build_semisup_plan(in, annotator, prompting, strategy.fraction, configs, seed);
    }
    throw std::logic_error("unhandled strategy");
}

long long checkpoint_steps(long long epoch_size) {
    if (epoch_size < 1) throw std::invalid_argument("checkpoint_steps: epoch_size must be >= 1");
    return epoch_size * 10 / 8;
}

RunLog::RunLog(const std::filesystem::path& file) {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    out_.open(file, std::ios::app);
    if (!out_) throw Error("cannot open run log " + file.string());
}

void RunLog::append(json record) {
    std::lock_guard lock(mu_);
    if (out_.is_open()) {
        out_ << record.dump() << '\n';
        out_.flush();
    }
    records_.push_back(std::move(record));
}

std::vector<json> RunLog::records() const {
    std::lock_guard lock(mu_);
    return records_;
}

std::string finetune_hash(Phase phase, const json& payload, const FineTuneConfig& config, const std::string& base_hash) {
    const json j{{"mode", std::string(to_string(phase))}, {"payload", payload}, {"config", config.to_json()}, {"base", base_hash}};
    return sha256_hex(j.dump());
}

AdapterHandle run_plan(ModelBackend& backend, const TrainingPlan& plan, RunLog* log) {
    plan.check_invariants();
    const auto plan_digest = plan.digest();
    const auto started = std::chrono::steady_clock::now();
    std::optional<AdapterHandle> current;

    for (const Phase phase : plan.phase_order) {
        const auto& cfg = plan.config_for(phase);
        const auto phase_start = std::chrono::steady_clock::now();
        AdapterHandle handle;
        json payload;
        try {
            if (phase == Phase::clm) {
                payload = plan.clm_texts;
                handle = backend.finetune_clm(plan.clm_texts, cfg);
            } else {
                payload = examples_json(plan.sft_examples);
                handle = backend.finetune_sft(plan.sft_examples, cfg, current ? &*current : nullptr);
            }
        } catch (const std::exception& e) {
            if (log) {
                log->append(json{{"event", "phase_failed"}, {"phase", std::string(to_string(phase))}, {"plan_digest", plan_digest}, {"error", e.what()}});
            }
            throw PhaseError(phase, e.what());
        }
        handle.annotator_id = plan.annotator_id;
        handle.strategy = strategy_tag(plan.strategy);
        handle.config_hash = finetune_hash(phase, payload, cfg, current ? current->config_hash : std::string());
        const std::chrono::duration<double> phase_time = std::chrono::steady_clock::now() - phase_start;
        if (log) {
            log->append(json{{"event", "phase"},
                             {"phase", std::string(to_string(phase))},
                             {"plan_digest", plan_digest},
                             {"adapter_id", handle.id},
                             {"config_hash", handle.config_hash},
                             {"steps", handle.steps ? json(*handle.steps) : json()},
                             {"wall_time_seconds", phase_time.count()}});
        }
        current = std::move(handle);
    }

    const std::chrono::duration<double> total = std::chrono::steady_clock::now() - started;
    if (log) {
        log->append(json{{"event", "plan_complete"},
                         {"plan_digest", plan_digest},
                         {"adapter_id", current->id},
                         {"annotator_id", plan.annotator_id},
                         {"strategy", current->strategy},
                         {"config_hash", current->config_hash},
                         {"wall_time_seconds", total.count()}});
    }
    return *current;
}

}  // namespace perjar
