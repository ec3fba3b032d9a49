#pragma once

#include "perjar/prompting.hpp"

#include <json.hpp>

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace perjar {

/// LoRA fine-tuning recipe handed verbatim to a backend.
struct FineTuneConfig {
    int lora_rank = 16;
    double lora_alpha = 16.0;
    double lora_dropout = 0.0;
    std::vector<std::string> target_modules{"q_proj", "k_proj", "v_proj", "o_proj", "gate_proj", "up_proj", "down_proj"};
    int max_seq_len = 2048;
    double learning_rate = 2e-4;
    double weight_decay = 0.01;
    int batch_size = 2;
    int grad_accum = 4;
    int warmup_steps = 5;
    std::string schedule = "linear";
    int epochs = 20;
    std::uint64_t seed = 0;

    static constexpr int kSupervisedEpochs = 20;
    static constexpr int kSelfSupervisedEpochs = 50;

    static FineTuneConfig for_phase_defaults(int epochs) {
        FineTuneConfig c;
        c.epochs = epochs;
        return c;
    }

    /// Throws ConfigError when a field is out of range.
    void validate() const;

    /// Applies overrides keyed by field name; list values are comma-separated.
    /// Unknown keys are a ConfigError.
    void apply_overrides(const std::map<std::string, std::string>& overrides);

    static bool is_field(std::string_view key);

    nlohmann::json to_json() const;
    static FineTuneConfig from_json(const nlohmann::json& j);

    bool operator==(const FineTuneConfig&) const = default;
};

/// Reference to a trained adapter living inside a backend.
struct AdapterHandle {
    std::string id;
    std::string annotator_id;
    std::string strategy;
    std::string config_hash;
    /// Optimizer steps reported by the backend, logged verbatim.
    std::optional<long long> steps;
};

/// Where the model work happens. Implementations: MockBackend (in-process,
/// deterministic) and RemoteBackend (HTTP wire contract).
class ModelBackend {
public:
    virtual ~ModelBackend() = default;

    /// `adapter` null means the base model. Temperature 0 must be deterministic.
    virtual std::string generate(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) = 0;

    /// Supervised fine-tuning; continues from `base` when given.
    virtual AdapterHandle finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) = 0;

    /// Causal-LM fine-tuning on raw texts.
    virtual AdapterHandle finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) = 0;

    virtual std::string name() const = 0;
};

}  // namespace perjar
