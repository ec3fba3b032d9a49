#include "synthetic.hpp"

#include "perjar/experiments.hpp"
#include "perjar/mock_backend.hpp"

#include <doctest.h>

#include <set>
#include <sstream>

using namespace perjar;
using namespace perjar::testing;

namespace {

struct Workspace {
    TempDir dir{"sweep"};
    ExperimentConfig config;

    explicit Workspace(const SyntheticOptions& o) {
        save_corpus(make_synthetic_corpus(o), dir.path() / "corpus");
        config.corpus_path = dir.path() / "corpus";
        config.output_dir = dir.path() / "out";
    }
};

SyntheticOptions two_annotators() {
    SyntheticOptions o;
    o.annotators = 2;
    o.abstracts = 12;
    o.abstracts_per_annotator = 10;
    return o;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

ResultRow row(std::string strategy, std::string prompting, double fraction, int run, double f1) {
    ResultRow r;
    r.annotator_id = "a";
    r.task = "familiarity";
    r.strategy = std::move(strategy);
    r.prompting = std::move(prompting);
    r.fraction = fraction;
    r.run = run;
    r.fold = "test";
    r.metrics.f1 = f1;
    return r;
}

}  // namespace

TEST_CASE("sweep over 2 annotators x 2 promptings x 3 runs yields 12 test rows") {
    Workspace w(two_annotators());
    w.config.promptings = {PromptStrategy::vanilla, PromptStrategy::metadata};
    w.config.runs = 3;
    w.config.seeds = {0, 1, 2};
    const auto outcome = cmd_sweep(w.config);
    CHECK(outcome.completed == 12);
    CHECK(outcome.failed == 0);
    CHECK(outcome.exit_code() == kExitOk);

    const auto rows = read_result_rows(w.config.output_dir / "results.rows");
    std::size_t test_rows = 0;
    std::set<std::tuple<std::string, std::string, int>> combos;
    for (const auto& r : rows) {
        if (r.fold != "test") continue;
        ++test_rows;
        combos.emplace(r.annotator_id, r.prompting, r.run);
        CHECK(r.wall_time_seconds == 0.0);
        CHECK(r.strategy == "supervised");
    }
    CHECK(test_rows == 12);
    CHECK(combos.size() == 12);
    CHECK(std::filesystem::exists(w.config.output_dir / "manifest.json"));
    CHECK(std::filesystem::exists(w.config.output_dir / "summary.tsv"));
    CHECK(std::filesystem::exists(w.config.output_dir / "run.log"));

    for (const auto& r : rows) {
        const auto back = ResultRow::from_json(r.to_json());
        CHECK(back.to_json() == r.to_json());
    }
}

TEST_CASE("sweep results are byte-identical across repeats and worker counts") {
    const auto o = two_annotators();
    Workspace a(o), b(o);
    a.config.promptings = b.config.promptings = {PromptStrategy::vanilla, PromptStrategy::nearest_abstract};
    b.config.workers = 4;
    cmd_sweep(a.config);
    cmd_sweep(b.config);
    CHECK(read_file(a.config.output_dir / "results.rows") == read_file(b.config.output_dir / "results.rows"));
    CHECK(read_file(a.config.output_dir / "summary.tsv") == read_file(b.config.output_dir / "summary.tsv"));
}

TEST_CASE("cells cover strategies and fractions, self-supervised once") {
    SyntheticOptions o = two_annotators();
    const auto c = make_synthetic_corpus(o);
    ExperimentConfig cfg;
    cfg.strategies = {TrainingStrategy::Kind::supervised, TrainingStrategy::Kind::self_supervised, TrainingStrategy::Kind::semi_supervised};
    cfg.fractions = {0.1, 1.0};
    cfg.runs = 2;
    cfg.seeds = {3, 4};
    const auto cells = enumerate_cells(c, cfg);
    CHECK(cells.size() == 2 * (2 + 1 + 2) * 2);
    std::set<std::string> keys;
    for (const auto& cell : cells) keys.insert(cell.key());
    CHECK(keys.size() == cells.size());
    CHECK(cells.front().annotator == AnnotatorId("ann00"));
    CHECK(cells[0].run == 0);
    CHECK(cells[1].run == 1);
    CHECK(cells[1].seed == 4);
}

TEST_CASE("resume skips finished cells and checks the manifest") {
    Workspace w(two_annotators());
    const auto first = cmd_sweep(w.config);
    const auto before = read_file(w.config.output_dir / "results.rows");
    const auto again = cmd_sweep(w.config, true);
    CHECK(again.completed == 0);
    CHECK(again.skipped == first.completed);
    CHECK(read_file(w.config.output_dir / "results.rows") == before);

    CHECK_THROWS(cmd_sweep(w.config, false));

    auto changed = w.config;
    changed.max_new_tokens = 12;
    CHECK_THROWS(cmd_sweep(changed, true));
}

TEST_CASE("a cell whose backend throws is counted as failed") {
    Workspace w(two_annotators());
    struct Broken final : ModelBackend {
        std::string generate(const std::string&, int, double, const AdapterHandle*) override { return "[1]"; }
        AdapterHandle finetune_sft(std::span<const AlpacaExample>, const FineTuneConfig&, const AdapterHandle*) override {
            throw BackendError("", "disk full");
        }
        AdapterHandle finetune_clm(std::span<const std::string>, const FineTuneConfig&) override { throw BackendError("", "disk full"); }
        std::string name() const override { return "broken"; }
    };
    const auto outcome = cmd_sweep(w.config, false, [] { return std::make_shared<Broken>(); });
    CHECK(outcome.failed == 2);
    CHECK(outcome.exit_code() == kExitPartialFailure);
    CHECK(read_file(w.config.output_dir / "run.log").find("cell_failed") != std::string::npos);
}

TEST_CASE("leave-one-annotator-out rows") {
    SyntheticOptions o;
    Workspace w(o);
    w.config.promptings = {PromptStrategy::vanilla, PromptStrategy::profile, PromptStrategy::nearest_abstract};
    const auto outcome = cmd_loao(w.config, AnnotatorId("ann02"));
    CHECK(outcome.completed == 2);
    const auto rows = read_result_rows(w.config.output_dir / "loao_ann02" / "results.rows");
    CHECK(rows.size() == 4);
    std::set<std::string> promptings;
    for (const auto& r : rows) {
        CHECK(r.annotator_id == "ann02");
        CHECK(r.strategy == "loao_supervised");
        promptings.insert(r.prompting);
    }
    CHECK(promptings == std::set<std::string>{"vanilla", "profile"});
    CHECK_THROWS(cmd_loao(w.config, AnnotatorId("ghost")));
}

TEST_CASE("oracle picks an exact clone and scores it perfectly") {
    SyntheticOptions o;
    o.clone_of = "ann01";
    const auto c = make_synthetic_corpus(o);
    const auto split = make_random_split(c, SplitRatios{}, 8);
    OracleChoice choice;
    const auto eval = restrict_to_annotator(c, split.test, AnnotatorId("clone"));
    const auto report = oracle_baseline(c, AnnotatorId("clone"), split, eval, TaskKind::familiarity, &choice);
    CHECK(choice.annotator == AnnotatorId("ann01"));
    CHECK(choice.agreement == 1.0);
    CHECK(report.overall.f1 == doctest::Approx(1.0));
    CHECK(report.overall.mismatch_rate == 0.0);
}

TEST_CASE("property: oracle choice is the brute-force agreement argmax") {
    for (std::uint64_t seed = 1; seed <= 15; ++seed) {
        SyntheticOptions o;
        o.seed = seed;
        o.abstracts = 8;
        o.abstracts_per_annotator = 6;
        const auto c = make_synthetic_corpus(o);
        const auto split = make_random_split(c, SplitRatios{}, seed);
        for (const auto& [target, ta] : c.annotators) {
            std::string best;
            double best_agreement = -1;
            for (const auto& [other, oa] : c.annotators) {
                if (other == target) continue;
                std::size_t shared = 0, agree = 0;
                for (const auto i : split.train) {
                    const auto& x = c.annotations[i];
                    if (x.annotator_id != target) continue;
                    for (const auto j : split.train) {
                        const auto& y = c.annotations[j];
                        if (y.annotator_id == other && y.abstract_id == x.abstract_id && to_lower_ascii(y.term) == to_lower_ascii(x.term)) {
                            ++shared;
                            agree += x.familiarity == y.familiarity;
                        }
                    }
                }
                if (shared == 0) continue;
                const double a = static_cast<double>(agree) / static_cast<double>(shared);
                if (a > best_agreement) {
                    best_agreement = a;
                    best = other.value;
                }
            }
            if (best.empty()) {
                CHECK_THROWS_AS(select_oracle_annotator(c, target, split.train), std::invalid_argument);
            } else {
                const auto got = select_oracle_annotator(c, target, split.train);
                CHECK(got.annotator.value == best);
                CHECK(got.agreement == doctest::Approx(best_agreement));
            }
        }
    }
}

TEST_CASE("oracle command writes rows for every annotator") {
    SyntheticOptions o;
    o.abstracts = 10;
    Workspace w(o);
    const auto outcome = cmd_oracle(w.config);
    CHECK(outcome.failed == 0);
    const auto rows = read_result_rows(w.config.output_dir / "oracle" / "results.rows");
    CHECK(rows.size() == 2 * o.annotators);
    for (const auto& r : rows) {
        CHECK(r.strategy == "oracle");
        CHECK(r.prompting == "none");
        CHECK(r.metrics.mismatch_rate == 0.0);
    }
}

TEST_CASE("summary table sorts cells and averages per run") {
    const std::vector<ResultRow> rows{row("supervised", "vanilla", 1.0, 0, 0.7), row("semi_supervised", "vanilla", 0.1, 0, 0.5),
                                      row("supervised", "vanilla", 1.0, 1, 0.8), row("supervised", "metadata", 1.0, 0, 0.2),
                                      row("supervised", "vanilla", 1.0, 2, 0.9)};
    const auto lines = split_lines(summary_table(rows));
    REQUIRE(lines.size() == 4);
    CHECK(lines[0].rfind("strategy\tprompting\tfraction\ttask\tfold\tn_rows\truns\t", 0) == 0);
    CHECK(lines[1].rfind("semi_supervised\tvanilla\t0.1\t", 0) == 0);
    CHECK(lines[2].rfind("supervised\tmetadata\t", 0) == 0);
    CHECK(lines[3].rfind("supervised\tvanilla\t1\tfamiliarity\ttest\t3\t3\t", 0) == 0);
    CHECK(lines[3].find("\t0.800000\t0.100000\t") != std::string::npos);
}

TEST_CASE("report writes summary and per-annotator tables") {
    Workspace w(two_annotators());
    cmd_sweep(w.config);
    std::filesystem::remove(w.config.output_dir / "summary.tsv");
    cmd_report(w.config.output_dir);
    CHECK(std::filesystem::exists(w.config.output_dir / "summary.tsv"));
    CHECK(std::filesystem::exists(w.config.output_dir / "per_annotator" / "ann00.tsv"));
    CHECK(std::filesystem::exists(w.config.output_dir / "per_annotator" / "ann01.tsv"));

    TempDir empty("empty");
    CHECK_THROWS_AS(cmd_report(empty.path()), Error);
}

TEST_CASE("profile command uses cached profiles and persists generated ones") {
    SyntheticOptions with;
    Workspace cached(with);
    MockBackend b1;
    const auto o1 = cmd_profile(cached.config, &b1);
    CHECK(o1.cached == with.annotators);
    CHECK(b1.generate_calls() == 0);

    SyntheticOptions without;
    without.profiles = false;
    Workspace fresh(without);
    MockBackend b2;
    const auto o2 = cmd_profile(fresh.config, &b2);
    CHECK(o2.generated == without.annotators);
    CHECK(b2.generate_calls() == without.annotators);
    const auto first = read_file(fresh.config.corpus_path / "profiles.jsonl");
    const auto loaded = load_corpus(fresh.config.corpus_path);
    for (const auto& [id, a] : loaded.annotators) CHECK(a.profile_text.has_value());

    // The sidecar is now a cache: a second run generates nothing and
    // rewrites identical bytes.
    MockBackend b3;
    const auto o3 = cmd_profile(fresh.config, &b3);
    CHECK(o3.generated == 0);
    CHECK(b3.generate_calls() == 0);
    CHECK(read_file(fresh.config.corpus_path / "profiles.jsonl") == first);
}

TEST_CASE("backend factory accepts mock and http endpoints only") {
    ExperimentConfig c;
    CHECK(make_backend_factory(c)()->name() == "mock");
    c.backend = "ftp://x";
    CHECK_THROWS_AS(make_backend_factory(c), ConfigError);
}
