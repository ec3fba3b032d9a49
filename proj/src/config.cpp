#include "perjar/config.hpp"

#include <fmt/format.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace perjar {

namespace {

constexpr std::string_view kKeys[] = {"corpus_path",  "backend",       "strategies",     "promptings",     "tasks",
                                      "fractions",    "seeds",         "runs",           "output_dir",     "workers",
                                      "split_seed",   "stratification", "timing",        "mismatch_mode",  "max_new_tokens",
                                      "backend_timeout_seconds",      "backend_retries"};

std::vector<std::string> split_list(std::string_view v) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= v.size()) {
        const auto comma = v.find(',', pos);
        auto item = trim(v.substr(pos, comma == std::string_view::npos ? std::string_view::npos : comma - pos));
        if (!item.empty()) out.push_back(std::move(item));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

template <class T>
T parse_integer(std::string_view key, std::string_view v) {
    T out{};
    const auto t = trim(v);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError(fmt::format("'{}' expects an integer, got '{}'", key, v));
    return out;
}

double parse_real(std::string_view key, std::string_view v) {
    const auto t = trim(v);
    std::istringstream in(t);
    in.imbue(std::locale::classic());
    double out = 0;
    in >> out;
    if (t.empty() || in.fail() || !in.eof()) throw ConfigError(fmt::format("'{}' expects a number, got '{}'", key, v));
    return out;
}

template <class T, class F>
std::string join(const std::vector<T>& items, F&& render) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += render(items[i]);
    }
    return out;
}

ConfigEntries to_entries(const ExperimentConfig& c) {
    ConfigEntries e;
    e["corpus_path"] = c.corpus_path.string();
    e["backend"] = c.backend;
    e["strategies"] = join(c.strategies, [](auto k) { return std::string(to_string(k)); });
    e["promptings"] = join(c.promptings, [](auto p) { return std::string(to_string(p)); });
    e["tasks"] = join(c.tasks, [](auto t) { return std::string(to_string(t)); });
    e["fractions"] = join(c.fractions, [](double f) { return fmt::format("{}", f); });
    e["seeds"] = join(c.seeds, [](std::uint64_t s) { return std::to_string(s); });
    e["runs"] = std::to_string(c.runs);
    e["output_dir"] = c.output_dir.string();
    e["workers"] = std::to_string(c.workers);
    e["split_seed"] = std::to_string(c.split_seed);
    e["stratification"] = std::string(to_string(c.stratification));
    e["timing"] = c.timing;
    e["mismatch_mode"] = std::string(to_string(c.mismatch_mode));
    e["max_new_tokens"] = std::to_string(c.max_new_tokens);
    e["backend_timeout_seconds"] = fmt::format("{}", c.backend_timeout_seconds);
    e["backend_retries"] = std::to_string(c.backend_retries);
    for (const auto& [k, v] : c.finetune_overrides) e[k] = v;
    return e;
}

}  // namespace

std::vector<std::string> known_config_keys() {
    std::vector<std::string> keys(std::begin(kKeys), std::end(kKeys));
    for (const auto* f : {"lora_rank", "lora_alpha", "lora_dropout", "target_modules", "max_seq_len", "learning_rate", "weight_decay",
                          "batch_size", "grad_accum", "warmup_steps", "schedule", "epochs", "seed"}) {
        keys.emplace_back(f);
    }
    return keys;
}

void ExperimentConfig::validate() const {
    if (strategies.empty()) throw ConfigError("'strategies' must not be empty");
    if (promptings.empty()) throw ConfigError("'promptings' must not be empty");
    if (tasks.empty()) throw ConfigError("'tasks' must not be empty");
    if (fractions.empty()) throw ConfigError("'fractions' must not be empty");
    for (const double f : fractions) {
        if (!(f > 0.0 && f <= 1.0)) throw ConfigError(fmt::format("fraction {} outside (0, 1]", f));
    }
    if (runs < 1) throw ConfigError("'runs' must be >= 1");
    if (seeds.size() < static_cast<std::size_t>(runs)) {
        throw ConfigError(fmt::format("'seeds' lists {} values but runs = {}", seeds.size(), runs));
    }
    if (workers < 1) throw ConfigError("'workers' must be >= 1");
    if (timing != "auto" && timing != "off" && timing != "wall") throw ConfigError("'timing' must be auto, off or wall");
    if (max_new_tokens < 1) throw ConfigError("'max_new_tokens' must be >= 1");
    if (!(backend_timeout_seconds > 0)) throw ConfigError("'backend_timeout_seconds' must be positive");
    if (backend_retries < 0) throw ConfigError("'backend_retries' must be >= 0");
    if (backend.empty()) throw ConfigError("'backend' must not be empty");
    FineTuneConfig probe;
    probe.apply_overrides(finetune_overrides);
    probe.validate();
}

nlohmann::json ExperimentConfig::to_json() const { return nlohmann::json(to_entries(*this)); }

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config snapshot must be an object");
    ConfigEntries e;
    for (const auto& [k, v] : j.items()) {
        if (!v.is_string()) throw ConfigError("config snapshot value for '" + k + "' must be a string");
        e[k] = v.get<std::string>();
    }
    ExperimentConfig c;
    apply_entries(c, e);
    c.validate();
    return c;
}

ConfigEntries parse_config_text(std::string_view text) {
    ConfigEntries out;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        const auto nl = text.find('\n', pos);
        auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() : nl + 1;
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        const auto t = trim(line);
        if (t.empty()) continue;
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw ConfigError(fmt::format("config line {}: expected 'key = value'", line_no));
        auto key = trim(std::string_view(t).substr(0, eq));
        auto value = trim(std::string_view(t).substr(eq + 1));
        if (key.empty()) throw ConfigError(fmt::format("config line {}: empty key", line_no));
        if (!out.emplace(key, std::move(value)).second) throw ConfigError(fmt::format("config line {}: repeated key '{}'", line_no, key));
    }
    return out;
}

ConfigEntries read_config_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError("cannot open config file " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        throw ConfigError(file.string() + ": " + e.what());
    }
}

ConfigEntries environment_overrides() {
    ConfigEntries out;
    for (const auto& key : known_config_keys()) {
        std::string var = "PERJAR_";
        for (const char c : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
        if (const char* v = std::getenv(var.c_str())) out[key] = v;
    }
    return out;
}

void apply_entries(ExperimentConfig& c, const ConfigEntries& entries) {
    for (const auto& [key, value] : entries) {
        if (key == "corpus_path") c.corpus_path = value;
        else if (key == "backend") c.backend = value;
        else if (key == "strategies") {
            c.strategies.clear();
            for (const auto& s : split_list(value)) c.strategies.push_back(parse_strategy_kind(s));
        } else if (key == "promptings") {
            c.promptings.clear();
            for (const auto& s : split_list(value)) c.promptings.push_back(parse_prompt_strategy(s));
        } else if (key == "tasks") {
            c.tasks.clear();
            for (const auto& s : split_list(value)) c.tasks.push_back(parse_task_kind(s));
        } else if (key == "fractions") {
            c.fractions.clear();
            for (const auto& s : split_list(value)) c.fractions.push_back(parse_real(key, s));
        } else if (key == "seeds") {
            c.seeds.clear();
            for (const auto& s : split_list(value)) c.seeds.push_back(parse_integer<std::uint64_t>(key, s));
        } else if (key == "runs") c.runs = parse_integer<int>(key, value);
        else if (key == "output_dir") c.output_dir = value;
        else if (key == "workers") c.workers = parse_integer<int>(key, value);
        else if (key == "split_seed") c.split_seed = parse_integer<std::uint64_t>(key, value);
        else if (key == "stratification") {
            if (value == "per_annotator") c.stratification = Stratification::per_annotator;
            else if (value == "global") c.stratification = Stratification::global;
            else throw ConfigError("'stratification' must be per_annotator or global");
        } else if (key == "timing") c.timing = value;
        else if (key == "mismatch_mode") c.mismatch_mode = parse_mismatch_mode(value);
        else if (key == "max_new_tokens") c.max_new_tokens = parse_integer<int>(key, value);
        else if (key == "backend_timeout_seconds") c.backend_timeout_seconds = parse_real(key, value);
        else if (key == "backend_retries") c.backend_retries = parse_integer<int>(key, value);
        else if (FineTuneConfig::is_field(key)) c.finetune_overrides[key] = value;
        else throw ConfigError("unknown config key '" + key + "'");
    }
}

ExperimentConfig load_config(const std::optional<std::filesystem::path>& file, const ConfigEntries& overrides) {
    ExperimentConfig c;
    if (file) apply_entries(c, read_config_file(*file));
    apply_entries(c, environment_overrides());
    apply_entries(c, overrides);
    c.validate();
    return c;
}

}  // namespace perjar
