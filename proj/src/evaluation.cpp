#include "perjar/evaluation.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numeric>

namespace perjar {

using nlohmann::json;

namespace {

bool is_ascii_alnum(char c) noexcept {
    return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool in_unit_interval(double v) noexcept { return v >= 0.0 && v <= 1.0; }

}  // namespace

ParsedPrediction parse_label_list(std::string_view raw, std::size_t expected_len) {
    if (expected_len == 0) throw std::invalid_argument("parse_label_list: expected_len must be >= 1");
    ParsedPrediction out;
    out.raw = std::string(raw);
    LabelList found;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const char c = raw[i];
        if (c != '0' && c != '1') continue;
        const bool left_free = i == 0 || !is_ascii_alnum(raw[i - 1]);
        const bool right_free = i + 1 == raw.size() || !is_ascii_alnum(raw[i + 1]);
        if (left_free && right_free) found.push_back(static_cast<Label>(c - '0'));
    }
    out.mismatch = found.size() != expected_len;
    if (!out.mismatch) out.labels = std::move(found);
    return out;
}

ConfusionCounts& ConfusionCounts::operator+=(const ConfusionCounts& o) noexcept {
    tp += o.tp;
    fp += o.fp;
    fn += o.fn;
    tn += o.tn;
    return *this;
}

ConfusionCounts confusion(std::span<const Label> preds, std::span<const Label> golds) {
    if (preds.size() != golds.size()) {
        throw std::invalid_argument(fmt::format("confusion: {} predictions for {} gold labels", preds.size(), golds.size()));
    }
    ConfusionCounts c;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const bool p = preds[i] == EvaluationReport::positive_class;
        const bool g = golds[i] == EvaluationReport::positive_class;
        if (p && g) ++c.tp;
        else if (p) ++c.fp;
        else if (g) ++c.fn;
        else ++c.tn;
    }
    return c;
}

Prf1 prf1(const ConfusionCounts& c) noexcept {
    Prf1 r;
    if (c.tp + c.fp > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
    if (c.tp + c.fn > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
    if (r.precision + r.recall > 0) r.f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

double effective_f1(double f1, double mismatch_rate) {
    if (!in_unit_interval(f1) || !in_unit_interval(mismatch_rate)) {
        throw std::invalid_argument(fmt::format("effective_f1: inputs must lie in [0, 1] (f1 {}, mismatch {})", f1, mismatch_rate));
    }
    return (1.0 - mismatch_rate) * f1;
}

std::string_view to_string(MismatchMode m) noexcept { return m == MismatchMode::exclude ? "exclude" : "zero_fill"; }

MismatchMode parse_mismatch_mode(std::string_view s) {
    if (s == "exclude") return MismatchMode::exclude;
    if (s == "zero_fill") return MismatchMode::zero_fill;
    throw ConfigError("unknown mismatch mode '" + std::string(s) + "'");
}

Metrics Metrics::from_counts(const ConfusionCounts& counts, std::size_t n_prompts, std::size_t n_mismatched, std::size_t n_items) {
    Metrics m;
    m.counts = counts;
    m.n_prompts = n_prompts;
    m.n_mismatched = n_mismatched;
    m.n_items = n_items;
    const auto p = prf1(counts);
    m.precision = p.precision;
    m.recall = p.recall;
    m.f1 = p.f1;
    m.mismatch_rate = n_prompts == 0 ? 0.0 : static_cast<double>(n_mismatched) / static_cast<double>(n_prompts);
    m.effective_f1 = perjar::effective_f1(m.f1, m.mismatch_rate);
    return m;
}

EvaluationReport build_report(std::span<const PromptOutcome> outcomes, MismatchMode mode) {
    struct Tally {
        ConfusionCounts counts;
        std::size_t prompts = 0;
        std::size_t mismatched = 0;
        std::size_t items = 0;
    };
    Tally overall;
    std::map<std::string, Tally> by_annotator;

    for (const auto& o : outcomes) {
        ConfusionCounts c;
        if (!o.prediction.mismatch) {
            c = confusion(*o.prediction.labels, o.golds);
        } else if (mode == MismatchMode::zero_fill) {
            const LabelList zeros(o.golds.size(), Label{0});
            c = confusion(zeros, o.golds);
        }
        for (Tally* t : {&overall, &by_annotator[o.annotator_id]}) {
            t->counts += c;
            ++t->prompts;
            t->mismatched += o.prediction.mismatch ? 1 : 0;
            t->items += o.golds.size();
        }
    }

    EvaluationReport report;
    report.overall = Metrics::from_counts(overall.counts, overall.prompts, overall.mismatched, overall.items);
    for (const auto& [id, t] : by_annotator) report.per_annotator[id] = Metrics::from_counts(t.counts, t.prompts, t.mismatched, t.items);
    return report;
}

EvaluationReport evaluate_adapter(ModelBackend& backend, const AdapterHandle* adapter, const Corpus& corpus, const DatasetSplit& split,
                                  std::span<const std::size_t> fold_items, const EvaluationOptions& options, RunLog* log,
                                  std::vector<PromptOutcome>* outcomes) {
    if (fold_items.empty()) throw std::invalid_argument("evaluate_adapter: empty evaluation fold");
    const std::span<const std::size_t> pool = options.context_pool ? std::span<const std::size_t>(*options.context_pool)
                                                                   : std::span<const std::size_t>(split.train);
    auto prompts = build_labeled_prompts(corpus, fold_items, options.prompting, pool, options.profile_index, options.abstract_index, options.task);

    std::vector<PromptOutcome> local;
    local.reserve(prompts.size());
    for (auto& p : prompts) {
        p.example.response.reset();
        const auto prompt = format_alpaca_prompt(p.example);
        std::string raw;
        bool failed = false;
        try {
            raw = backend.generate(prompt, options.max_new_tokens, 0.0, adapter);
        } catch (const std::exception& e) {
            failed = true;
            if (log) {
                log->append(json{{"event", "generate_failed"},
                                 {"annotator_id", p.annotator_id.value},
                                 {"abstract_id", p.abstract_id.value},
                                 {"adapter_id", adapter ? json(adapter->id) : json()},
                                 {"error", e.what()}});
            }
        }
        PromptOutcome o;
        o.annotator_id = p.annotator_id.value;
        o.prediction = failed ? ParsedPrediction{std::nullopt, true, raw} : parse_label_list(raw, p.labels.size());
        o.golds = std::move(p.labels);
        local.push_back(std::move(o));
    }
    auto report = build_report(local, options.mismatch_mode);
    if (outcomes) *outcomes = std::move(local);
    return report;
}

MeanStd mean_std(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("mean_std: no values");
    MeanStd r;
    r.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
        double ss = 0.0;
        for (const double v : values) ss += (v - r.mean) * (v - r.mean);
        r.stdev = std::sqrt(ss / static_cast<double>(values.size() - 1));
    }
    return r;
}

RunAggregate aggregate(std::span<const Metrics> runs) {
    if (runs.empty()) throw std::invalid_argument("aggregate: no runs");
    auto column = [&](double Metrics::*field) {
        std::vector<double> v;
        v.reserve(runs.size());
        for (const auto& m : runs) v.push_back(m.*field);
        return mean_std(v);
    };
    RunAggregate a;
    a.runs = runs.size();
    a.precision = column(&Metrics::precision);
    a.recall = column(&Metrics::recall);
    a.f1 = column(&Metrics::f1);
    a.mismatch_rate = column(&Metrics::mismatch_rate);
    a.effective_f1 = column(&Metrics::effective_f1);
    return a;
}

RunAggregate aggregate(std::span<const EvaluationReport> reports) {
    std::vector<Metrics> m;
    m.reserve(reports.size());
    for (const auto& r : reports) m.push_back(r.overall);
    return aggregate(m);
}

std::string format_metric(double v) { return fmt::format("{:.6f}", v); }

std::string report_table(const EvaluationReport& report) {
    std::string out = "scope\tprecision\trecall\tf1\tmismatch_rate\teffective_f1\tn_prompts\tn_items\n";
    auto row = [&out](const std::string& scope, const Metrics& m) {
        out += fmt::format("{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n", scope, format_metric(m.precision), format_metric(m.recall), format_metric(m.f1),
                           format_metric(m.mismatch_rate), format_metric(m.effective_f1), m.n_prompts, m.n_items);
    };
    row("overall", report.overall);
    for (const auto& [id, m] : report.per_annotator) row(id, m);
    return out;
}

}  // namespace perjar
