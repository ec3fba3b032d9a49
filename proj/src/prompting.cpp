#include "perjar/prompting.hpp"

#include "perjar/backend.hpp"
#include "templates.hpp"

#include <fmt/format.h>

#include <array>
#include <set>

namespace perjar {

namespace {

std::string_view task_file_stem(TaskKind t) { return to_string(t); }

constexpr std::string_view kUnknown = "unknown";

std::string join_labels(std::span<const LabeledTerm> pairs, bool terms) {
    std::string out = "[";
    for (std::size_t i = 0; i < pairs.size(); ++i) {
        if (i) out += ", ";
        out += terms ? pairs[i].term : std::to_string(pairs[i].label);
    }
    return out + "]";
}

std::string render_pairs(std::string_view tmpl, std::span<const LabeledTerm> pairs) {
    const std::array<std::pair<std::string_view, std::string>, 2> values{{
        {"entity_list", join_labels(pairs, true)},
        {"familiarity_list", join_labels(pairs, false)},
    }};
    for (const auto& p : pairs) {
        if (!is_binary(p.label)) throw std::invalid_argument("non-binary proxy label for '" + p.term + "'");
    }
    return fill_template(tmpl, values);
}

std::string metadata_block(std::string_view tmpl, const Annotator& a, const AbstractDoc* doc) {
    std::vector<std::pair<std::string_view, std::string>> values{
        {"subfield", a.subfield},
        {"papers_published", std::to_string(a.papers_published)},
        {"avg_references", format_number(a.avg_references)},
        {"first_pub_year", a.first_pub_year ? std::to_string(*a.first_pub_year) : std::string(kUnknown)},
    };
    if (doc) values.emplace_back("domain", doc->domain.empty() ? std::string(kUnknown) : doc->domain);
    return fill_template(tmpl, values);
}

}  // namespace

std::string_view template_version() noexcept { return detail::embedded_template_version(); }

std::string_view to_string(PromptStrategy s) noexcept {
    switch (s) {
        case PromptStrategy::vanilla: return "vanilla";
        case PromptStrategy::metadata: return "metadata";
        case PromptStrategy::profile: return "profile";
        case PromptStrategy::nearest_annotator: return "nearest_annotator";
        case PromptStrategy::nearest_abstract: return "nearest_abstract";
    }
    return "vanilla";
}

std::string_view to_string(TaskKind t) noexcept {
    switch (t) {
        case TaskKind::familiarity: return "familiarity";
        case TaskKind::definition_needs: return "definition_needs";
        case TaskKind::background_needs: return "background_needs";
        case TaskKind::example_needs: return "example_needs";
    }
    return "familiarity";
}

PromptStrategy parse_prompt_strategy(std::string_view s) {
    for (const auto v : kAllPromptStrategies) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown prompting strategy '" + std::string(s) + "'");
}

TaskKind parse_task_kind(std::string_view s) {
    for (const auto v : kAllTasks) {
        if (to_string(v) == s) return v;
    }
    throw ConfigError("unknown task '" + std::string(s) + "'");
}

std::optional<Label> task_label(const TermAnnotation& a, TaskKind task) {
    switch (task) {
        case TaskKind::familiarity: return a.familiarity;
        case TaskKind::definition_needs: return a.needs_definition;
        case TaskKind::background_needs: return a.needs_background;
        case TaskKind::example_needs: return a.needs_example;
    }
    return std::nullopt;
}

std::string fill_template(std::string_view tmpl, std::span<const std::pair<std::string_view, std::string>> values) {
    std::string out;
    out.reserve(tmpl.size());
    std::size_t pos = 0;
    while (pos < tmpl.size()) {
        const auto open = tmpl.find('{', pos);
        if (open == std::string_view::npos) break;
        const auto close = tmpl.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto name = tmpl.substr(open + 1, close - open - 1);
        const std::string* value = nullptr;
        for (const auto& [k, v] : values) {
            if (k == name) value = &v;
        }
        out.append(tmpl.substr(pos, open - pos));
        if (value) {
            out += *value;
        } else {
            out.append(tmpl.substr(open, close - open + 1));
        }
        pos = close + 1;
    }
    out.append(tmpl.substr(pos));
    return out;
}

std::string format_number(double value) { return fmt::format("{}", value); }

std::string_view render_instruction(TaskKind task) {
    return detail::template_text(fmt::format("tasks/{}.instruction.txt", task_file_stem(task)));
}

RelatedData render_related_data(PromptStrategy strategy, const Annotator& annotator, const AbstractDoc& abstract_doc,
                                const RetrievalOutputs& retrieval) {
    const auto tmpl = detail::template_text(fmt::format("strategies/{}.txt", to_string(strategy)));
    switch (strategy) {
        case PromptStrategy::vanilla:
            return {std::string(tmpl)};
        case PromptStrategy::metadata:
            return {metadata_block(tmpl, annotator, &abstract_doc)};
        case PromptStrategy::profile: {
            if (!annotator.profile_text) throw std::invalid_argument("annotator '" + annotator.id.value + "' has no profile");
            const std::array<std::pair<std::string_view, std::string>, 1> values{{{"profile", *annotator.profile_text}}};
            return {fill_template(tmpl, values)};
        }
        case PromptStrategy::nearest_annotator:
            if (!retrieval.nearest_annotator) throw std::invalid_argument("nearest_annotator strategy needs retrieval output");
            return {render_pairs(tmpl, *retrieval.nearest_annotator)};
        case PromptStrategy::nearest_abstract:
            if (!retrieval.nearest_abstract) throw std::invalid_argument("nearest_abstract strategy needs retrieval output");
            return {render_pairs(tmpl, *retrieval.nearest_abstract)};
    }
    return {};
}

std::string serialize_entity_list(std::span<const std::string> entities) {
    std::string out = "[";
    for (std::size_t i = 0; i < entities.size(); ++i) {
        if (i) out += ", ";
        out += entities[i];
    }
    return out + "]";
}

std::string serialize_label_list(std::span<const Label> labels) {
    std::string out = "[";
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (!is_binary(labels[i])) throw std::invalid_argument("serialize_label_list: label " + std::to_string(labels[i]) + " is not binary");
        if (i) out += ", ";
        out += static_cast<char>('0' + labels[i]);
    }
    return out + "]";
}

std::string render_input(TaskKind task, std::span<const std::string> entities, const AbstractDoc& abstract_doc, const RelatedData& related) {
    if (entities.empty()) throw std::invalid_argument("render_input: empty entity list");
    const std::array<std::pair<std::string_view, std::string>, 3> values{{
        {"entity", serialize_entity_list(entities)},
        {"abstract", abstract_doc.text},
        {"related_data", related.text},
    }};
    return fill_template(detail::template_text(fmt::format("tasks/{}.input.txt", task_file_stem(task))), values);
}

AlpacaExample assemble_example(TaskKind task, PromptStrategy strategy, const PromptContext& ctx, std::optional<std::span<const Label>> labels) {
    if (ctx.entities.empty()) throw std::invalid_argument("assemble_example: empty entity list");
    std::set<std::string> unique(ctx.entities.begin(), ctx.entities.end());
    if (unique.size() != ctx.entities.size()) throw std::invalid_argument("assemble_example: duplicate entities");
    if (strategy == PromptStrategy::vanilla && !ctx.related.text.empty()) {
        throw std::invalid_argument("assemble_example: vanilla prompts carry no related data");
    }
    if (labels && labels->size() != ctx.entities.size()) {
        throw std::invalid_argument("assemble_example: " + std::to_string(labels->size()) + " labels for " +
                                    std::to_string(ctx.entities.size()) + " entities");
    }
    AlpacaExample ex;
    ex.instruction = std::string(render_instruction(task));
    ex.input = render_input(task, ctx.entities, ctx.abstract_doc, ctx.related);
    if (labels) ex.response = serialize_label_list(*labels);
    return ex;
}

std::string format_alpaca_prompt(const AlpacaExample& example) {
    const std::array<std::pair<std::string_view, std::string>, 3> values{{
        {"instruction", example.instruction},
        {"input", example.input},
        {"response", example.response.value_or("")},
    }};
    return fill_template(detail::template_text("alpaca.txt"), values);
}

std::optional<AlpacaExample> parse_alpaca_prompt(std::string_view prompt) {
    static constexpr std::string_view kInstr = "\n\n### Instruction:\n";
    static constexpr std::string_view kInput = "\n\n### Input:\n";
    static constexpr std::string_view kResp = "\n\n### Response:\n";
    const auto i = prompt.find(kInstr);
    if (i == std::string_view::npos) return std::nullopt;
    const auto n = prompt.find(kInput, i + kInstr.size());
    if (n == std::string_view::npos) return std::nullopt;
    const auto r = prompt.rfind(kResp);
    if (r == std::string_view::npos || r < n) return std::nullopt;
    AlpacaExample ex;
    ex.instruction = std::string(prompt.substr(i + kInstr.size(), n - i - kInstr.size()));
    ex.input = std::string(prompt.substr(n + kInput.size(), r - n - kInput.size()));
    const auto resp = prompt.substr(r + kResp.size());
    if (!resp.empty()) ex.response = std::string(resp);
    return ex;
}

std::string_view profile_request_instruction() { return detail::template_text("profile_request.instruction.txt"); }

AlpacaExample profile_request(const Annotator& annotator) {
    AlpacaExample ex;
    ex.instruction = std::string(profile_request_instruction());
    ex.input = metadata_block(detail::template_text("profile_request.input.txt"), annotator, nullptr);
    return ex;
}

const std::string& generate_profile(ModelBackend& backend, Annotator& annotator) {
    if (annotator.profile_text) return *annotator.profile_text;
    if (annotator.subfield.empty()) throw std::invalid_argument("annotator '" + annotator.id.value + "' has no subfield metadata");
    constexpr int kProfileTokens = 256;
    auto text = backend.generate(format_alpaca_prompt(profile_request(annotator)), kProfileTokens, 0.0, nullptr);
    if (text.empty()) throw BackendError("", "empty profile generated for annotator '" + annotator.id.value + "'");
    annotator.profile_text = std::move(text);
    return *annotator.profile_text;
}

}  // namespace perjar
