#include "perjar/experiments.hpp"

#include "perjar/digest.hpp"
#include "perjar/mock_backend.hpp"
#include "perjar/remote_backend.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

namespace perjar {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kRowsFile = "results.rows";
constexpr std::string_view kSummaryFile = "summary.tsv";
constexpr std::string_view kManifestFile = "manifest.json";
constexpr std::string_view kLogFile = "run.log";
constexpr std::string_view kLoaoStrategy = "loao_supervised";
constexpr std::string_view kOracleStrategy = "oracle";

std::string make_cell_key(std::string_view annotator, std::string_view strategy, std::string_view prompting, double fraction, int run) {
    return fmt::format("{}|{}|{}|{}|{}", annotator, strategy, prompting, fraction, run);
}

json metrics_json(const Metrics& m) {
    return json{{"precision", m.precision},
                {"recall", m.recall},
                {"f1", m.f1},
                {"mismatch_rate", m.mismatch_rate},
                {"effective_f1", m.effective_f1},
                {"n_prompts", m.n_prompts},
                {"n_items", m.n_items},
                {"n_mismatched", m.n_mismatched},
                {"tp", m.counts.tp},
                {"fp", m.counts.fp},
                {"fn", m.counts.fn},
                {"tn", m.counts.tn}};
}

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot read " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + file.string());
    out << text;
}

std::string profiles_digest(const Corpus& corpus) {
    json j = json::object();
    for (const auto& [id, a] : corpus.annotators) {
        if (a.profile_text) j[id.value] = *a.profile_text;
    }
    return sha256_hex(j.dump());
}

/// Creates the output directory and its manifest. A resumed run must see
/// the same manifest; a fresh run must not find earlier rows.
void prepare_output(const fs::path& dir, const json& manifest, bool resume) {
    fs::create_directories(dir);
    const auto manifest_path = dir / kManifestFile;
    const auto rows_path = dir / kRowsFile;
    const auto text = manifest.dump(2) + "\n";
    if (resume && fs::exists(manifest_path)) {
        if (read_text(manifest_path) != text) throw ConfigError("manifest in " + dir.string() + " differs from the current configuration");
        return;
    }
    if (!resume && fs::exists(rows_path) && fs::file_size(rows_path) > 0) {
        throw ConfigError(rows_path.string() + " already has rows; use --resume or a fresh output directory");
    }
    write_text(manifest_path, text);
}

json base_manifest(std::string_view command, const ExperimentConfig& config, const Corpus& corpus) {
    return json{{"command", std::string(command)},
                {"config", config.to_json()},
                {"template_version", std::string(template_version())},
                {"corpus_digest", corpus_digest(corpus)},
                {"profiles_digest", profiles_digest(corpus)}};
}

std::set<std::string> existing_cell_keys(const fs::path& rows_path) {
    std::set<std::string> keys;
    if (!fs::exists(rows_path)) return keys;
    for (const auto& r : read_result_rows(rows_path)) keys.insert(r.cell_key());
    return keys;
}

struct CellJob {
    std::string key;
    std::function<std::vector<ResultRow>(ModelBackend&, RunLog&)> run;
};

/// Runs jobs on up to `workers` threads. Rows are appended in job order
/// regardless of completion order, so the file does not depend on
/// scheduling.
CommandOutcome execute_cells(std::vector<CellJob> jobs, const ExperimentConfig& config, const BackendFactory& factory, bool resume,
                             const fs::path& dir, RunLog& log) {
    CommandOutcome outcome;
    const auto rows_path = dir / kRowsFile;
    const auto done_keys = resume ? existing_cell_keys(rows_path) : std::set<std::string>{};

    std::vector<CellJob> pending;
    for (auto& j : jobs) {
        if (done_keys.contains(j.key)) {
            ++outcome.skipped;
            log.append(json{{"event", "cell_skipped"}, {"cell", j.key}});
        } else {
            pending.push_back(std::move(j));
        }
    }

    std::ofstream rows_out(rows_path, std::ios::binary | std::ios::app);
    if (!rows_out) throw Error("cannot open " + rows_path.string());

    std::mutex mu;
    std::vector<std::optional<std::vector<ResultRow>>> results(pending.size());
    std::vector<bool> finished(pending.size(), false);
    std::size_t next_write = 0;
    std::atomic<std::size_t> next_job{0};
    const bool wall = config.record_wall_time();

    auto worker = [&] {
        while (true) {
            const std::size_t i = next_job.fetch_add(1);
            if (i >= pending.size()) return;
            const auto& job = pending[i];
            std::optional<std::vector<ResultRow>> rows;
            const auto start = std::chrono::steady_clock::now();
            try {
                const auto backend = factory();
                rows = job.run(*backend, log);
                const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
                for (auto& r : *rows) r.wall_time_seconds = wall ? elapsed.count() : 0.0;
                log.append(json{{"event", "cell_complete"}, {"cell", job.key}, {"rows", rows->size()}, {"wall_time_seconds", elapsed.count()}});
            } catch (const std::exception& e) {
                rows.reset();
                log.append(json{{"event", "cell_failed"}, {"cell", job.key}, {"error", e.what()}});
            }

            std::lock_guard lock(mu);
            results[i] = std::move(rows);
            finished[i] = true;
            while (next_write < pending.size() && finished[next_write]) {
                if (results[next_write]) {
                    for (const auto& r : *results[next_write]) rows_out << r.to_json().dump() << '\n';
                    rows_out.flush();
                    ++outcome.completed;
                    results[next_write].reset();
                } else {
                    ++outcome.failed;
                }
                ++next_write;
            }
        }
    };

    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(config.workers), std::max<std::size_t>(pending.size(), 1));
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> threads;
        threads.reserve(n_threads);
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(worker);
    }
    return outcome;
}

PhaseConfigs phase_configs_for(const ExperimentConfig& config, std::uint64_t seed) {
    PhaseConfigs configs;
    configs.apply_overrides(config.finetune_overrides);
    configs.sft.seed = seed;
    configs.clm.seed = seed;
    return configs;
}

/// Indexes a prompting strategy needs, built once and shared read-only.
struct SharedIndexes {
    std::optional<Bm25Index> profiles;
    std::optional<Bm25Index> abstracts;

    SharedIndexes(const Corpus& corpus, std::span<const PromptStrategy> promptings) {
        const auto uses = [&](PromptStrategy p) { return std::find(promptings.begin(), promptings.end(), p) != promptings.end(); };
        // A corpus without profiles cannot serve nearest_annotator; the
        // affected cells fail individually instead.
        if (uses(PromptStrategy::nearest_annotator)) {
            try {
                profiles.emplace(build_profile_index(corpus));
            } catch (const std::exception&) {
            }
        }
        if (uses(PromptStrategy::nearest_abstract)) abstracts.emplace(build_abstract_index(corpus));
    }

    const Bm25Index* profile_ptr() const { return profiles ? &*profiles : nullptr; }
    const Bm25Index* abstract_ptr() const { return abstracts ? &*abstracts : nullptr; }
};

std::vector<ResultRow> evaluate_cell(ModelBackend& backend, const AdapterHandle& handle, const Corpus& corpus, const DatasetSplit& split,
                                     const ExperimentConfig& config, const SharedIndexes& indexes, const ResultRow& prototype,
                                     const AnnotatorId& annotator, RunLog& log) {
    std::vector<ResultRow> rows;
    for (const TaskKind task : config.tasks) {
        for (const Fold fold : {Fold::val, Fold::test}) {
            const auto items = restrict_to_annotator(corpus, fold_indices(split, fold), annotator);
            if (items.empty()) throw Error(fmt::format("annotator '{}' has no {} annotations", annotator.value, to_string(fold)));
            EvaluationOptions opts;
            opts.task = task;
            opts.prompting = parse_prompt_strategy(prototype.prompting);
            opts.mismatch_mode = config.mismatch_mode;
            opts.max_new_tokens = config.max_new_tokens;
            opts.profile_index = indexes.profile_ptr();
            opts.abstract_index = indexes.abstract_ptr();
            const auto report = evaluate_adapter(backend, &handle, corpus, split, items, opts, &log);
            ResultRow row = prototype;
            row.task = std::string(to_string(task));
            row.fold = std::string(to_string(fold));
            row.metrics = report.overall;
            row.steps = handle.steps;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

std::string safe_file_stem(std::string_view id) {
    std::string out;
    for (const char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out += ok ? c : '_';
    }
    return out.empty() ? "_" : out;
}

void finish_results(const fs::path& dir) {
    if (!fs::exists(dir / kRowsFile) || fs::file_size(dir / kRowsFile) == 0) return;
    cmd_report(dir);
}

}  // namespace

json ResultRow::to_json() const {
    json j{{"annotator_id", annotator_id},
           {"task", task},
           {"strategy", strategy},
           {"prompting", prompting},
           {"fraction", fraction},
           {"run", run},
           {"seed", seed},
           {"fold", fold},
           {"steps", steps ? json(*steps) : json()},
           {"wall_time_seconds", wall_time_seconds}};
    j.update(metrics_json(metrics));
    return j;
}

ResultRow ResultRow::from_json(const json& j) {
    ResultRow r;
    r.annotator_id = j.at("annotator_id").get<std::string>();
    r.task = j.at("task").get<std::string>();
    r.strategy = j.at("strategy").get<std::string>();
    r.prompting = j.at("prompting").get<std::string>();
    r.fraction = j.at("fraction").get<double>();
    r.run = j.at("run").get<int>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.fold = j.at("fold").get<std::string>();
    if (!j.at("steps").is_null()) r.steps = j.at("steps").get<long long>();
    r.wall_time_seconds = j.at("wall_time_seconds").get<double>();
    auto& m = r.metrics;
    m.precision = j.at("precision").get<double>();
    m.recall = j.at("recall").get<double>();
    m.f1 = j.at("f1").get<double>();
    m.mismatch_rate = j.at("mismatch_rate").get<double>();
    m.effective_f1 = j.at("effective_f1").get<double>();
    m.n_prompts = j.at("n_prompts").get<std::size_t>();
    m.n_items = j.at("n_items").get<std::size_t>();
    m.n_mismatched = j.at("n_mismatched").get<std::size_t>();
    m.counts = {j.at("tp").get<std::size_t>(), j.at("fp").get<std::size_t>(), j.at("fn").get<std::size_t>(), j.at("tn").get<std::size_t>()};
    return r;
}

std::string ResultRow::cell_key() const { return make_cell_key(annotator_id, strategy, prompting, fraction, run); }

std::vector<ResultRow> read_result_rows(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error("cannot read " + file.string());
    std::vector<ResultRow> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            rows.push_back(ResultRow::from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw Error(fmt::format("{}:{}: malformed result row: {}", file.string(), line_no, e.what()));
        }
    }
    return rows;
}

std::string SweepCell::key() const { return make_cell_key(annotator.value, to_string(strategy.kind), to_string(prompting), strategy.fraction, run); }

std::vector<SweepCell> enumerate_cells(const Corpus& corpus, const ExperimentConfig& config) {
    std::vector<SweepCell> cells;
    for (const auto& [id, a] : corpus.annotators) {
        for (const auto kind : config.strategies) {
            for (const auto prompting : config.promptings) {
                std::vector<double> fractions = config.fractions;
                if (kind == TrainingStrategy::Kind::self_supervised) fractions = {1.0};
                for (const double f : fractions) {
                    for (int run = 0; run < config.runs; ++run) {
                        cells.push_back(SweepCell{id, TrainingStrategy{kind, f}, prompting, run, config.seeds[static_cast<std::size_t>(run)]});
                    }
                }
            }
        }
    }
    return cells;
}

BackendFactory make_backend_factory(const ExperimentConfig& config) {
    if (config.backend == "mock") {
        return [] { return std::make_shared<MockBackend>(); };
    }
    if (!config.backend.starts_with("http://") && !config.backend.starts_with("https://")) {
        throw ConfigError("backend must be 'mock' or an http(s) endpoint, got '" + config.backend + "'");
    }
    auto shared = std::make_shared<RemoteBackend>(RemoteBackendOptions{config.backend, config.backend_timeout_seconds, config.backend_retries});
    return [shared] { return std::static_pointer_cast<ModelBackend>(shared); };
}

CommandOutcome cmd_sweep(const ExperimentConfig& config, bool resume, const BackendFactory& factory_in) {
    config.validate();
    const auto corpus = load_corpus(config.corpus_path);
    const auto factory = factory_in ? factory_in : make_backend_factory(config);
    const auto split = make_random_split(corpus, SplitRatios{}, config.split_seed, config.stratification);

    const auto& dir = config.output_dir;
    auto manifest = base_manifest("sweep", config, corpus);
    prepare_output(dir, manifest, resume);
    RunLog log(dir / kLogFile);

    const auto indexes = std::make_shared<const SharedIndexes>(corpus, config.promptings);
    std::vector<CellJob> jobs;
    for (const auto& cell : enumerate_cells(corpus, config)) {
        jobs.push_back(CellJob{cell.key(), [&corpus, &split, &config, indexes, cell](ModelBackend& backend, RunLog& log) {
                                   PlanInputs in{corpus, split, indexes->profile_ptr(), indexes->abstract_ptr()};
                                   const auto configs = phase_configs_for(config, cell.seed);
                                   const auto plan = build_plan(in, cell.annotator, cell.strategy, cell.prompting, configs, cell.seed);
                                   const auto handle = run_plan(backend, plan, &log);
                                   ResultRow proto;
                                   proto.annotator_id = cell.annotator.value;
                                   proto.strategy = std::string(to_string(cell.strategy.kind));
                                   proto.prompting = std::string(to_string(cell.prompting));
                                   proto.fraction = cell.strategy.fraction;
                                   proto.run = cell.run;
                                   proto.seed = cell.seed;
                                   return evaluate_cell(backend, handle, corpus, split, config, *indexes, proto, cell.annotator, log);
                               }});
    }
    const auto outcome = execute_cells(std::move(jobs), config, factory, resume, dir, log);
    finish_results(dir);
    return outcome;
}

CommandOutcome cmd_loao(const ExperimentConfig& config, const AnnotatorId& held_out, bool resume, const BackendFactory& factory_in) {
    config.validate();
    const auto corpus = load_corpus(config.corpus_path);
    if (!corpus.has_annotator(held_out)) throw ConfigError("unknown annotator '" + held_out.value + "'");
    const auto factory = factory_in ? factory_in : make_backend_factory(config);

    const auto base = make_random_split(corpus, SplitRatios{}, config.split_seed);
    const auto match_size = restrict_to_annotator(corpus, base.train, held_out).size();
    const auto split = make_loao_split(corpus, held_out, match_size, config.split_seed);

    std::vector<PromptStrategy> promptings;
    for (const auto p : {PromptStrategy::vanilla, PromptStrategy::metadata, PromptStrategy::profile}) {
        if (std::find(config.promptings.begin(), config.promptings.end(), p) != config.promptings.end()) promptings.push_back(p);
    }
    if (promptings.empty()) promptings = {PromptStrategy::vanilla, PromptStrategy::metadata, PromptStrategy::profile};

    const auto dir = config.output_dir / ("loao_" + safe_file_stem(held_out.value));
    auto manifest = base_manifest("loao", config, corpus);
    manifest["held_out"] = held_out.value;
    manifest["match_size"] = match_size;
    prepare_output(dir, manifest, resume);
    RunLog log(dir / kLogFile);

    const auto indexes = std::make_shared<const SharedIndexes>(corpus, std::span<const PromptStrategy>());
    std::vector<CellJob> jobs;
    for (const auto prompting : promptings) {
        for (int run = 0; run < config.runs; ++run) {
            const auto seed = config.seeds[static_cast<std::size_t>(run)];
            const auto key = make_cell_key(held_out.value, kLoaoStrategy, to_string(prompting), 1.0, run);
            jobs.push_back(CellJob{key, [&corpus, &split, &config, &held_out, indexes, prompting, run, seed](ModelBackend& backend, RunLog& log) {
                                       TrainingPlan plan;
                                       plan.strategy = TrainingStrategy::supervised(1.0);
                                       plan.annotator_id = held_out.value;
                                       plan.prompting = prompting;
                                       plan.sft_examples = build_sft_examples(corpus, split.train, prompting, split.train, nullptr, nullptr);
                                       plan.config = phase_configs_for(config, seed).sft;
                                       plan.phase_order = {Phase::sft};
                                       const auto handle = run_plan(backend, plan, &log);
                                       ResultRow proto;
                                       proto.annotator_id = held_out.value;
                                       proto.strategy = std::string(kLoaoStrategy);
                                       proto.prompting = std::string(to_string(prompting));
                                       proto.fraction = 1.0;
                                       proto.run = run;
                                       proto.seed = seed;
                                       return evaluate_cell(backend, handle, corpus, split, config, *indexes, proto, held_out, log);
                                   }});
        }
    }
    const auto outcome = execute_cells(std::move(jobs), config, factory, resume, dir, log);
    finish_results(dir);
    return outcome;
}

OracleChoice select_oracle_annotator(const Corpus& corpus, const AnnotatorId& target, std::span<const std::size_t> train) {
    using Key = std::pair<std::string, std::string>;
    std::map<Key, Label> target_labels;
    std::map<AnnotatorId, std::vector<std::size_t>> others;
    for (const std::size_t i : train) {
        const auto& a = corpus.annotations[i];
        if (a.annotator_id == target) target_labels[{a.abstract_id.value, to_lower_ascii(a.term)}] = a.familiarity;
        else others[a.annotator_id].push_back(i);
    }
    std::optional<OracleChoice> best;
    for (const auto& [id, idx] : others) {
        std::size_t shared = 0;
        std::size_t agree = 0;
        for (const std::size_t i : idx) {
            const auto& a = corpus.annotations[i];
            const auto it = target_labels.find({a.abstract_id.value, to_lower_ascii(a.term)});
            if (it == target_labels.end()) continue;
            ++shared;
            agree += it->second == a.familiarity ? 1 : 0;
        }
        if (shared == 0) continue;
        const double agreement = static_cast<double>(agree) / static_cast<double>(shared);
        if (!best || agreement > best->agreement) best = OracleChoice{id, agreement, shared};
    }
    if (!best) throw std::invalid_argument("no other annotator shares a training term with '" + target.value + "'");
    return *best;
}

EvaluationReport oracle_baseline(const Corpus& corpus, const AnnotatorId& target, const DatasetSplit& split, std::span<const std::size_t> eval_items,
                                 TaskKind task, OracleChoice* choice_out) {
    const auto choice = select_oracle_annotator(corpus, target, split.train);
    if (choice_out) *choice_out = choice;

    std::map<std::pair<std::string, std::string>, Label> chosen_labels;
    for (const auto& a : corpus.annotations) {
        if (a.annotator_id != choice.annotator) continue;
        if (const auto l = task_label(a, task)) chosen_labels.emplace(std::pair{a.abstract_id.value, to_lower_ascii(a.term)}, *l);
    }
    std::size_t ones = 0;
    std::size_t labelled = 0;
    for (const std::size_t i : split.train) {
        const auto& a = corpus.annotations[i];
        if (a.annotator_id != choice.annotator) continue;
        if (const auto l = task_label(a, task)) {
            ones += *l;
            ++labelled;
        }
    }
    const Label majority = 2 * ones >= labelled ? Label{1} : Label{0};

    const auto own = restrict_to_annotator(corpus, eval_items, target);
    std::vector<PromptOutcome> outcomes;
    for (const auto& group : group_annotations(corpus, own)) {
        PromptOutcome o;
        o.annotator_id = target.value;
        LabelList preds;
        for (const std::size_t i : group.indices) {
            const auto& a = corpus.annotations[i];
            const auto gold = task_label(a, task);
            if (!gold) continue;
            o.golds.push_back(*gold);
            const auto it = chosen_labels.find({a.abstract_id.value, to_lower_ascii(a.term)});
            preds.push_back(it != chosen_labels.end() ? it->second : majority);
        }
        if (o.golds.empty()) continue;
        o.prediction.raw = serialize_label_list(preds);
        o.prediction.mismatch = false;
        o.prediction.labels = std::move(preds);
        outcomes.push_back(std::move(o));
    }
    return build_report(outcomes, MismatchMode::exclude);
}

CommandOutcome cmd_oracle(const ExperimentConfig& config) {
    config.validate();
    const auto corpus = load_corpus(config.corpus_path);
    const auto split = make_random_split(corpus, SplitRatios{}, config.split_seed, config.stratification);
    const auto dir = config.output_dir / "oracle";
    prepare_output(dir, base_manifest("oracle", config, corpus), false);
    RunLog log(dir / kLogFile);

    std::vector<CellJob> jobs;
    for (const auto& [id, a] : corpus.annotators) {
        const auto key = make_cell_key(id.value, kOracleStrategy, "none", 1.0, 0);
        jobs.push_back(CellJob{key, [&corpus, &split, &config, id = id](ModelBackend&, RunLog& log) {
                                   std::vector<ResultRow> rows;
                                   for (const TaskKind task : config.tasks) {
                                       for (const Fold fold : {Fold::val, Fold::test}) {
                                           OracleChoice choice;
                                           const auto report = oracle_baseline(corpus, id, split, fold_indices(split, fold), task, &choice);
                                           log.append(json{{"event", "oracle_choice"},
                                                           {"annotator_id", id.value},
                                                           {"chosen", choice.annotator.value},
                                                           {"agreement", choice.agreement},
                                                           {"shared", choice.shared}});
                                           ResultRow row;
                                           row.annotator_id = id.value;
                                           row.task = std::string(to_string(task));
                                           row.strategy = std::string(kOracleStrategy);
                                           row.prompting = "none";
                                           row.fraction = 1.0;
                                           row.run = 0;
                                           row.seed = config.split_seed;
                                           row.fold = std::string(to_string(fold));
                                           row.metrics = report.overall;
                                           rows.push_back(std::move(row));
                                       }
                                   }
                                   return rows;
                               }});
    }
    // The oracle never calls a model.
    const BackendFactory none = [] { return std::shared_ptr<ModelBackend>(std::make_shared<MockBackend>()); };
    const auto outcome = execute_cells(std::move(jobs), config, none, false, dir, log);
    finish_results(dir);
    return outcome;
}

std::string summary_table(std::span<const ResultRow> rows) {
    struct CellKey {
        std::string strategy;
        std::string prompting;
        double fraction;
        std::string task;
        std::string fold;
        auto operator<=>(const CellKey&) const = default;
    };
    std::map<CellKey, std::vector<const ResultRow*>> cells;
    for (const auto& r : rows) cells[CellKey{r.strategy, r.prompting, r.fraction, r.task, r.fold}].push_back(&r);

    std::string out =
        "strategy\tprompting\tfraction\ttask\tfold\tn_rows\truns\tprecision_mean\tprecision_std\trecall_mean\trecall_std\tf1_mean\tf1_std\t"
        "mismatch_rate_mean\tmismatch_rate_std\teffective_f1_mean\teffective_f1_std\n";
    for (const auto& [key, members] : cells) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}", key.strategy, key.prompting, key.fraction, key.task, key.fold, members.size());
        std::set<int> runs;
        for (const auto* r : members) runs.insert(r->run);
        out += fmt::format("\t{}", runs.size());
        for (double Metrics::*field : {&Metrics::precision, &Metrics::recall, &Metrics::f1, &Metrics::mismatch_rate, &Metrics::effective_f1}) {
            std::vector<double> all;
            std::map<int, std::vector<double>> by_run;
            for (const auto* r : members) {
                all.push_back(r->metrics.*field);
                by_run[r->run].push_back(r->metrics.*field);
            }
            std::vector<double> run_means;
            for (const auto& [run, values] : by_run) run_means.push_back(mean_std(values).mean);
            out += fmt::format("\t{}\t{}", format_metric(mean_std(all).mean), format_metric(mean_std(run_means).stdev));
        }
        out += '\n';
    }
    return out;
}

void cmd_report(const fs::path& results_dir) {
    const auto rows_path = results_dir / kRowsFile;
    if (!fs::exists(rows_path)) throw Error("no " + std::string(kRowsFile) + " in " + results_dir.string());
    const auto rows = read_result_rows(rows_path);
    if (rows.empty()) throw Error(rows_path.string() + " has no rows");
    write_text(results_dir / kSummaryFile, summary_table(rows));

    std::map<std::string, std::vector<ResultRow>> by_annotator;
    for (const auto& r : rows) by_annotator[r.annotator_id].push_back(r);
    const auto per_dir = results_dir / "per_annotator";
    fs::create_directories(per_dir);
    for (const auto& [id, list] : by_annotator) write_text(per_dir / (safe_file_stem(id) + ".tsv"), summary_table(list));
}

ProfileOutcome cmd_profile(const ExperimentConfig& config, ModelBackend* backend) {
    auto corpus = load_corpus(config.corpus_path);
    std::shared_ptr<ModelBackend> owned;
    if (!backend) {
        owned = make_backend_factory(config)();
        backend = owned.get();
    }
    fs::create_directories(config.output_dir);
    RunLog log(config.output_dir / "profile.log");
    ProfileOutcome outcome;
    for (auto& [id, a] : corpus.annotators) {
        if (a.profile_text) {
            ++outcome.cached;
            continue;
        }
        try {
            generate_profile(*backend, a);
            ++outcome.generated;
            log.append(json{{"event", "profile_generated"}, {"annotator_id", id.value}});
        } catch (const std::exception& e) {
            ++outcome.failed;
            log.append(json{{"event", "profile_failed"}, {"annotator_id", id.value}, {"error", e.what()}});
        }
    }
    save_profiles_sidecar(corpus, config.corpus_path / "profiles.jsonl");
    return outcome;
}

}  // namespace perjar
