#include "perjar/experiments.hpp"
#include "perjar/mock_backend.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>

using namespace perjar;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::optional<std::string> config_file;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> corpus;
    std::optional<std::string> output;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config_file, "Config file (key = value)");
    cmd->add_option("--seed", o.seed, "Seed: sets split_seed and seeds = seed, seed+1, ...");
    cmd->add_option("--backend", o.backend, "'mock' or an http(s) endpoint");
    cmd->add_option("--corpus", o.corpus, "Corpus directory (overrides corpus_path)");
    cmd->add_option("--output", o.output, "Output directory (overrides output_dir)");
    cmd->add_option("--set", o.sets, "Extra key=value override, repeatable");
}

ExperimentConfig resolve(const CommonOptions& o) {
    ConfigEntries overrides;
    for (const auto& s : o.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        overrides[trim(std::string_view(s).substr(0, eq))] = trim(std::string_view(s).substr(eq + 1));
    }
    if (o.backend) overrides["backend"] = *o.backend;
    if (o.corpus) overrides["corpus_path"] = *o.corpus;
    if (o.output) overrides["output_dir"] = *o.output;
    // Same layering as load_config, but --seed must expand before validation.
    ExperimentConfig config;
    if (o.config_file) apply_entries(config, read_config_file(*o.config_file));
    apply_entries(config, environment_overrides());
    apply_entries(config, overrides);
    if (o.seed) {
        config.split_seed = *o.seed;
        config.seeds.clear();
        for (int r = 0; r < config.runs; ++r) config.seeds.push_back(*o.seed + static_cast<std::uint64_t>(r));
    }
    if (config.corpus_path.empty()) throw ConfigError("corpus_path is not set");
    config.validate();
    return config;
}

/// The adapter a train/eval invocation works with.
struct TrainedAdapter {
    std::shared_ptr<ModelBackend> backend;
    TrainingPlan plan;
    AdapterHandle handle;
};

TrainedAdapter train_one(const ExperimentConfig& config, const Corpus& corpus, const DatasetSplit& split, const std::string& annotator,
                         const std::string& strategy, double fraction, PromptStrategy prompting, RunLog* log) {
    TrainedAdapter t;
    t.backend = make_backend_factory(config)();
    const auto seed = config.seeds.front();
    PhaseConfigs configs;
    configs.apply_overrides(config.finetune_overrides);
    configs.sft.seed = seed;
    configs.clm.seed = seed;
    PlanInputs in{corpus, split};
    t.plan = build_plan(in, AnnotatorId(annotator), TrainingStrategy{parse_strategy_kind(strategy), fraction}, prompting, configs, seed);
    t.handle = run_plan(*t.backend, t.plan, log);
    return t;
}

int run(int argc, char** argv) {
    CLI::App app{"perjar: personalized jargon-familiarity experiments"};
    app.require_subcommand(1);

    CommonOptions ingest_o, split_o, profile_o, train_o, eval_o, sweep_o, loao_o, oracle_o;

    auto* ingest = app.add_subcommand("ingest", "Load and validate a corpus; print counts and its digest");
    add_common(ingest, ingest_o);
    std::optional<std::string> ingest_out;
    ingest->add_option("--write", ingest_out, "Write the normalized corpus to this directory");

    auto* split_cmd = app.add_subcommand("split", "Write the 60/20/20 split as JSON");
    add_common(split_cmd, split_o);
    std::optional<std::string> loao_held_for_split;
    split_cmd->add_option("--held-out", loao_held_for_split, "Produce the leave-one-annotator-out split for this annotator");

    auto* profile = app.add_subcommand("profile", "Generate missing annotator profiles into profiles.jsonl");
    add_common(profile, profile_o);

    std::string annotator;
    std::string strategy = "supervised";
    std::string prompting = "vanilla";
    double fraction = 1.0;
    auto* train = app.add_subcommand("train", "Build and run one training plan");
    add_common(train, train_o);
    std::optional<std::string> plan_out;
    train->add_option("--annotator", annotator, "Annotator id")->required();
    train->add_option("--strategy", strategy, "supervised | self_supervised | semi_supervised");
    train->add_option("--prompting", prompting, "Prompting strategy");
    train->add_option("--fraction", fraction, "Labelled fraction in (0, 1]");
    train->add_option("--plan-out", plan_out, "Write the resolved plan as JSON");

    auto* eval = app.add_subcommand("eval", "Evaluate an adapter on one fold; with the mock backend the adapter is trained first");
    add_common(eval, eval_o);
    std::string eval_fold = "test";
    std::string eval_task = "familiarity";
    std::optional<std::string> adapter_id;
    eval->add_option("--annotator", annotator, "Annotator id")->required();
    eval->add_option("--strategy", strategy, "Training strategy");
    eval->add_option("--prompting", prompting, "Prompting strategy");
    eval->add_option("--fraction", fraction, "Labelled fraction in (0, 1]");
    eval->add_option("--fold", eval_fold, "val | test | train");
    eval->add_option("--task", eval_task, "Task kind");
    eval->add_option("--adapter", adapter_id, "Existing adapter id on a remote backend");

    bool resume = false;
    auto* sweep = app.add_subcommand("sweep", "Run every configured cell and write results.rows and summary.tsv");
    add_common(sweep, sweep_o);
    sweep->add_flag("--resume", resume, "Skip cells already in results.rows");
    std::optional<std::string> manifest_in;
    sweep->add_option("--manifest", manifest_in, "Take the configuration from an earlier manifest.json");

    std::string held_out;
    auto* loao = app.add_subcommand("loao", "Leave-one-annotator-out baseline");
    add_common(loao, loao_o);
    loao->add_option("--held-out", held_out, "Annotator to hold out")->required();
    loao->add_flag("--resume", resume, "Skip cells already in results.rows");

    auto* oracle = app.add_subcommand("oracle", "Highest-agreement annotator baseline");
    add_common(oracle, oracle_o);

    std::string report_dir;
    auto* report = app.add_subcommand("report", "Rebuild summary.tsv and per-annotator tables from results.rows");
    report->add_option("results_dir", report_dir, "Results directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }

    try {
        if (*ingest) {
            const auto config = resolve(ingest_o);
            std::vector<std::string> warnings;
            const auto corpus = load_corpus(config.corpus_path, &warnings);
            for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
            std::cout << fmt::format("annotators\t{}\nabstracts\t{}\nannotations\t{}\ndigest\t{}\n", corpus.annotators.size(),
                                     corpus.abstracts.size(), corpus.annotations.size(), corpus_digest(corpus));
            if (ingest_out) save_corpus(corpus, *ingest_out);
            return kExitOk;
        }
        if (*split_cmd) {
            const auto config = resolve(split_o);
            const auto corpus = load_corpus(config.corpus_path);
            DatasetSplit s;
            if (loao_held_for_split) {
                const AnnotatorId h(*loao_held_for_split);
                const auto base = make_random_split(corpus, SplitRatios{}, config.split_seed);
                s = make_loao_split(corpus, h, restrict_to_annotator(corpus, base.train, h).size(), config.split_seed);
            } else {
                s = make_random_split(corpus, SplitRatios{}, config.split_seed, config.stratification);
            }
            const nlohmann::json j{{"seed", s.seed},
                                   {"granularity", std::string(to_string(s.granularity))},
                                   {"stratification", std::string(to_string(s.stratification))},
                                   {"train", s.train},
                                   {"val", s.val},
                                   {"test", s.test}};
            std::cout << j.dump() << '\n';
            return kExitOk;
        }
        if (*profile) {
            const auto config = resolve(profile_o);
            const auto o = cmd_profile(config);
            std::cout << fmt::format("generated\t{}\ncached\t{}\nfailed\t{}\n", o.generated, o.cached, o.failed);
            return o.failed ? kExitPartialFailure : kExitOk;
        }
        if (*train) {
            const auto config = resolve(train_o);
            const auto corpus = load_corpus(config.corpus_path);
            const auto split = make_random_split(corpus, SplitRatios{}, config.split_seed, config.stratification);
            const auto t = train_one(config, corpus, split, annotator, strategy, fraction, parse_prompt_strategy(prompting), nullptr);
            if (plan_out) {
                std::ofstream out(*plan_out);
                out << t.plan.to_json().dump(2) << '\n';
            }
            std::cout << nlohmann::json{{"adapter_id", t.handle.id},
                                        {"annotator_id", t.handle.annotator_id},
                                        {"strategy", t.handle.strategy},
                                        {"config_hash", t.handle.config_hash},
                                        {"plan_digest", t.plan.digest()},
                                        {"steps", t.handle.steps ? nlohmann::json(*t.handle.steps) : nlohmann::json()}}
                             .dump()
                      << '\n';
            return kExitOk;
        }
        if (*eval) {
            const auto config = resolve(eval_o);
            const auto corpus = load_corpus(config.corpus_path);
            const auto split = make_random_split(corpus, SplitRatios{}, config.split_seed, config.stratification);
            const auto prompt_strategy = parse_prompt_strategy(prompting);
            std::shared_ptr<ModelBackend> backend;
            AdapterHandle handle;
            if (adapter_id) {
                if (config.backend == "mock") throw ConfigError("--adapter needs a remote backend; the mock keeps adapters in memory only");
                backend = make_backend_factory(config)();
                handle.id = *adapter_id;
            } else {
                auto t = train_one(config, corpus, split, annotator, strategy, fraction, prompt_strategy, nullptr);
                backend = t.backend;
                handle = t.handle;
            }
            const AnnotatorId who(annotator);
            const auto items = restrict_to_annotator(corpus, fold_indices(split, parse_fold(eval_fold)), who);
            EvaluationOptions opts;
            opts.task = parse_task_kind(eval_task);
            opts.prompting = prompt_strategy;
            opts.mismatch_mode = config.mismatch_mode;
            opts.max_new_tokens = config.max_new_tokens;
            const auto r = evaluate_adapter(*backend, &handle, corpus, split, items, opts);
            std::cout << report_table(r);
            return kExitOk;
        }
        if (*sweep) {
            auto config = resolve(sweep_o);
            if (manifest_in) {
                std::ifstream in(*manifest_in);
                if (!in) throw ConfigError("cannot read manifest " + *manifest_in);
                const auto m = nlohmann::json::parse(in);
                const auto output = config.output_dir;
                config = ExperimentConfig::from_json(m.at("config"));
                if (sweep_o.output) config.output_dir = output;
            }
            const auto o = cmd_sweep(config, resume);
            std::cout << fmt::format("completed\t{}\nskipped\t{}\nfailed\t{}\n", o.completed, o.skipped, o.failed);
            return o.exit_code();
        }
        if (*loao) {
            const auto config = resolve(loao_o);
            const auto o = cmd_loao(config, AnnotatorId(held_out), resume);
            std::cout << fmt::format("completed\t{}\nskipped\t{}\nfailed\t{}\n", o.completed, o.skipped, o.failed);
            return o.exit_code();
        }
        if (*oracle) {
            const auto config = resolve(oracle_o);
            const auto o = cmd_oracle(config);
            std::cout << fmt::format("completed\t{}\nfailed\t{}\n", o.completed, o.failed);
            return o.exit_code();
        }
        if (*report) {
            cmd_report(report_dir);
            std::cout << (fs::path(report_dir) / "summary.tsv").string() << '\n';
            return kExitOk;
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
