#pragma once

#include "perjar/evaluation.hpp"

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace perjar {

/// Everything a sweep needs. Read from a flat "key = value" file; list
/// values are comma-separated; '#' starts a comment.
struct ExperimentConfig {
    std::filesystem::path corpus_path;
    /// "mock" or an http(s) endpoint.
    std::string backend = "mock";
    std::vector<TrainingStrategy::Kind> strategies{TrainingStrategy::Kind::supervised};
    std::vector<PromptStrategy> promptings{PromptStrategy::vanilla};
    std::vector<TaskKind> tasks{TaskKind::familiarity};
    std::vector<double> fractions{1.0};
    std::vector<std::uint64_t> seeds{0};
    int runs = 1;
    std::filesystem::path output_dir = "results";
    int workers = 1;
    std::uint64_t split_seed = 0;
    Stratification stratification = Stratification::per_annotator;
    /// "auto" (off for the mock backend, wall otherwise), "off" or "wall".
    std::string timing = "auto";
    MismatchMode mismatch_mode = MismatchMode::exclude;
    int max_new_tokens = 64;
    double backend_timeout_seconds = 600.0;
    int backend_retries = 2;
    /// FineTuneConfig fields set explicitly; applied to both phases.
    std::map<std::string, std::string> finetune_overrides;

    /// Throws ConfigError when an invariant does not hold.
    void validate() const;

    bool record_wall_time() const { return timing == "wall" || (timing == "auto" && backend != "mock"); }

    /// Canonical snapshot; feeding it to from_json gives the same config.
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

/// Raw key/value pairs.
using ConfigEntries = std::map<std::string, std::string>;

/// Parses "key = value" lines. Throws ConfigError with the line number on
/// a malformed line or a repeated key.
ConfigEntries parse_config_text(std::string_view text);
ConfigEntries read_config_file(const std::filesystem::path& file);

/// PERJAR_<UPPERCASED KEY> variables for every known key.
ConfigEntries environment_overrides();

/// Applies entries on top of `config`; unknown keys are a ConfigError.
void apply_entries(ExperimentConfig& config, const ConfigEntries& entries);

/// File, then environment, then explicit overrides; validated.
ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const ConfigEntries& overrides = {});

/// Every key apply_entries accepts.
std::vector<std::string> known_config_keys();

}  // namespace perjar
