#include "perjar/mock_backend.hpp"

#include "perjar/digest.hpp"
#include "perjar/evaluation.hpp"

#include <fmt/format.h>

namespace perjar {

namespace {

constexpr std::string_view kEntityPrefix = "Entity: [";
constexpr std::string_view kAbstractPrefix = "\nAbstract: ";
constexpr std::string_view kAdditionalPrefix = "\nAdditional information:";

std::vector<std::string> split_entities(std::string_view list) {
    std::vector<std::string> out;
    if (list.empty()) return out;
    std::size_t pos = 0;
    while (true) {
        const auto next = list.find(", ", pos);
        out.emplace_back(list.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos));
        if (next == std::string_view::npos) break;
        pos = next + 2;
    }
    return out;
}

std::string metadata_value(std::string_view input, std::string_view label) {
    const auto at = input.find(label);
    if (at == std::string_view::npos) return {};
    const auto start = at + label.size();
    const auto end = input.find('\n', start);
    return trim(input.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start));
}

}  // namespace

std::optional<ParsedPromptInput> parse_prompt_input(std::string_view input) {
    if (!input.starts_with(kEntityPrefix)) return std::nullopt;
    const auto abs = input.find(kAbstractPrefix);
    if (abs == std::string_view::npos) return std::nullopt;
    if (abs < kEntityPrefix.size() || input[abs - 1] != ']') return std::nullopt;
    const auto close = abs - 1;
    const auto extra = input.find(kAdditionalPrefix, abs + kAbstractPrefix.size());
    if (extra == std::string_view::npos) return std::nullopt;

    ParsedPromptInput out;
    out.entities = split_entities(input.substr(kEntityPrefix.size(), close - kEntityPrefix.size()));
    out.abstract_text = std::string(input.substr(abs + kAbstractPrefix.size(), extra - abs - kAbstractPrefix.size()));
    if (out.entities.empty()) return std::nullopt;
    return out;
}

long long simulated_steps(std::size_t n_items, const FineTuneConfig& config) {
    const auto per_step = static_cast<std::size_t>(config.batch_size) * static_cast<std::size_t>(config.grad_accum);
    const auto steps_per_epoch = static_cast<long long>((n_items + per_step - 1) / per_step);
    return steps_per_epoch * config.epochs;
}

const MockBackend::AdapterState& MockBackend::state_for(const AdapterHandle* adapter) const {
    static const AdapterState kBase;
    if (!adapter) return kBase;
    const auto it = adapters_.find(adapter->id);
    if (it == adapters_.end()) throw BackendError("", "mock backend: unknown adapter '" + adapter->id + "'");
    return *it->second;
}

AdapterHandle MockBackend::register_adapter(AdapterState state, long long steps) {
    AdapterHandle h;
    h.id = fmt::format("mock-adapter-{}", next_adapter_++);
    h.steps = steps;
    adapters_.emplace(h.id, std::make_shared<const AdapterState>(std::move(state)));
    return h;
}

AdapterHandle MockBackend::finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) {
    config.validate();
    std::lock_guard lock(mu_);
    ++sft_calls_;
    AdapterState state = state_for(base);
    for (const auto& ex : examples) {
        const auto parsed = parse_prompt_input(ex.input);
        if (!parsed) throw BackendError("", "mock backend: cannot parse SFT example input");
        if (!ex.response) throw BackendError("", "mock backend: SFT example without response");
        const auto labels = parse_label_list(*ex.response, parsed->entities.size());
        if (labels.mismatch) throw BackendError("", "mock backend: SFT response does not match the entity list");
        const auto digest = sha256_hex(parsed->abstract_text);
        for (std::size_t i = 0; i < parsed->entities.size(); ++i) {
            state.memory[{digest, to_lower_ascii(parsed->entities[i])}] = (*labels.labels)[i];
        }
    }
    return register_adapter(std::move(state), simulated_steps(examples.size(), config));
}

AdapterHandle MockBackend::finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) {
    config.validate();
    std::lock_guard lock(mu_);
    ++clm_calls_;
    AdapterState state;
    for (const auto& t : texts) {
        for (auto& tok : tokenize(t)) state.vocabulary.insert(std::move(tok));
    }
    return register_adapter(std::move(state), simulated_steps(texts.size(), config));
}

std::string MockBackend::generate(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) {
    (void)max_new_tokens;
    (void)temperature;
    std::shared_ptr<const AdapterState> state;
    {
        std::lock_guard lock(mu_);
        ++generate_calls_;
        if (adapter) {
            const auto it = adapters_.find(adapter->id);
            if (it == adapters_.end()) throw BackendError("", "mock backend: unknown adapter '" + adapter->id + "'");
            state = it->second;
        }
    }
    static const AdapterState kBase;
    const AdapterState& s = state ? *state : kBase;

    const auto ex = parse_alpaca_prompt(prompt);
    if (!ex) return std::string(kUnparseable);

    if (ex->instruction == profile_request_instruction()) {
        const auto subfield = metadata_value(ex->input, "Self-defined subfield of the reader is:");
        const auto papers = metadata_value(ex->input, "Number of papers published by the reader is:");
        const auto year = metadata_value(ex->input, "Year of the first paper published by the reader is:");
        return fmt::format("This reader is a domain expert in {} who has published {} papers since {}.", subfield.empty() ? "their field" : subfield,
                           papers.empty() ? "several" : papers, year.empty() ? "an unknown year" : year);
    }

    const auto parsed = parse_prompt_input(ex->input);
    if (!parsed) return std::string(kUnparseable);

    std::size_t ones = 0;
    for (const auto& [key, label] : s.memory) ones += label;
    const Label majority = (2 * ones >= s.memory.size()) ? Label{1} : Label{0};

    const auto digest = sha256_hex(parsed->abstract_text);
    LabelList labels;
    labels.reserve(parsed->entities.size());
    for (const auto& entity : parsed->entities) {
        const auto hit = s.memory.find({digest, to_lower_ascii(entity)});
        if (hit != s.memory.end()) {
            labels.push_back(hit->second);
            continue;
        }
        const auto tokens = tokenize(entity);
        bool known = !tokens.empty();
        for (const auto& t : tokens) known = known && s.vocabulary.contains(t);
        labels.push_back(known ? Label{0} : majority);
    }
    return serialize_label_list(labels);
}

std::size_t MockBackend::generate_calls() const {
    std::lock_guard lock(mu_);
    return generate_calls_;
}

std::size_t MockBackend::finetune_sft_calls() const {
    std::lock_guard lock(mu_);
    return sft_calls_;
}

std::size_t MockBackend::finetune_clm_calls() const {
    std::lock_guard lock(mu_);
    return clm_calls_;
}

}  // namespace perjar
