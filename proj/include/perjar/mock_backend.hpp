#pragma once

#include "perjar/backend.hpp"

#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <utility>

namespace perjar {

/// Deterministic in-process backend for desk-scale runs.
///
/// finetune_sft memorizes (abstract digest, lowercased term) -> label from
/// the example responses. finetune_clm records the token vocabulary of its
/// texts. generate answers a familiarity-style prompt entity by entity:
///   1. the memorized label, if this (abstract, term) was seen;
///   2. else 0 when every token of the entity is in the CLM vocabulary;
///   3. else the majority memorized label (ties and empty memory give 1).
/// A prompt it cannot parse yields the literal "UNPARSEABLE". Profile
/// requests get a templated one-paragraph profile.
class MockBackend final : public ModelBackend {
public:
    MockBackend() = default;

    std::string generate(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) override;
    AdapterHandle finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) override;
    AdapterHandle finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) override;
    std::string name() const override { return "mock"; }

    std::size_t generate_calls() const;
    std::size_t finetune_sft_calls() const;
    std::size_t finetune_clm_calls() const;

    static constexpr std::string_view kUnparseable = "UNPARSEABLE";

private:
    struct AdapterState {
        std::map<std::pair<std::string, std::string>, Label> memory;
        std::set<std::string> vocabulary;
    };

    const AdapterState& state_for(const AdapterHandle* adapter) const;
    AdapterHandle register_adapter(AdapterState state, long long steps);

    mutable std::mutex mu_;
    std::map<std::string, std::shared_ptr<const AdapterState>> adapters_;
    std::size_t next_adapter_ = 1;
    std::size_t generate_calls_ = 0;
    std::size_t sft_calls_ = 0;
    std::size_t clm_calls_ = 0;
};

/// Parts of a familiarity-style input the mock reads back.
struct ParsedPromptInput {
    std::vector<std::string> entities;
    std::string abstract_text;
};

/// Extracts the bracketed entity list and abstract from an Alpaca prompt
/// input rendered by render_input. nullopt when the shape does not match.
std::optional<ParsedPromptInput> parse_prompt_input(std::string_view input);

/// Simulated optimizer steps: ceil(n / (batch * accum)) * epochs.
long long simulated_steps(std::size_t n_items, const FineTuneConfig& config);

}  // namespace perjar
