#include "perjar/backend.hpp"

#include <charconv>
#include <sstream>

namespace perjar {

namespace {

constexpr std::string_view kFields[] = {"lora_rank",     "lora_alpha", "lora_dropout", "target_modules", "max_seq_len",
                                        "learning_rate", "weight_decay", "batch_size", "grad_accum",     "warmup_steps",
                                        "schedule",      "epochs",     "seed"};

long long parse_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto t = trim(v);
    const auto [p, ec] = std::from_chars(t.data(), t.data() + t.size(), out);
    if (ec != std::errc() || p != t.data() + t.size()) throw ConfigError("'" + key + "' expects an integer, got '" + v + "'");
    return out;
}

double parse_real(const std::string& key, const std::string& v) {
    const auto t = trim(v);
    std::istringstream in(t);
    in.imbue(std::locale::classic());
    double out = 0;
    in >> out;
    if (in.fail() || !in.eof()) throw ConfigError("'" + key + "' expects a number, got '" + v + "'");
    return out;
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(v);
    while (std::getline(in, item, ',')) {
        auto t = trim(item);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

bool FineTuneConfig::is_field(std::string_view key) {
    for (const auto f : kFields) {
        if (f == key) return true;
    }
    return false;
}

void FineTuneConfig::validate() const {
    const auto positive = [](const char* name, double v) {
        if (!(v > 0)) throw ConfigError(std::string("finetune '") + name + "' must be positive");
    };
    positive("lora_rank", lora_rank);
    positive("lora_alpha", lora_alpha);
    if (!(lora_dropout >= 0 && lora_dropout < 1)) throw ConfigError("finetune 'lora_dropout' must be in [0, 1)");
    if (target_modules.empty()) throw ConfigError("finetune 'target_modules' must not be empty");
    positive("max_seq_len", max_seq_len);
    positive("learning_rate", learning_rate);
    positive("weight_decay", weight_decay);
    positive("batch_size", batch_size);
    positive("grad_accum", grad_accum);
    positive("warmup_steps", warmup_steps);
    positive("epochs", epochs);
    if (schedule != "linear") throw ConfigError("finetune 'schedule' must be 'linear'");
}

void FineTuneConfig::apply_overrides(const std::map<std::string, std::string>& overrides) {
    for (const auto& [key, value] : overrides) {
        if (key == "lora_rank") lora_rank = static_cast<int>(parse_int(key, value));
        else if (key == "lora_alpha") lora_alpha = parse_real(key, value);
        else if (key == "lora_dropout") lora_dropout = parse_real(key, value);
        else if (key == "target_modules") target_modules = split_list(value);
        else if (key == "max_seq_len") max_seq_len = static_cast<int>(parse_int(key, value));
        else if (key == "learning_rate") learning_rate = parse_real(key, value);
        else if (key == "weight_decay") weight_decay = parse_real(key, value);
        else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
        else if (key == "grad_accum") grad_accum = static_cast<int>(parse_int(key, value));
        else if (key == "warmup_steps") warmup_steps = static_cast<int>(parse_int(key, value));
        else if (key == "schedule") schedule = trim(value);
        else if (key == "epochs") epochs = static_cast<int>(parse_int(key, value));
        else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
        else throw ConfigError("unknown finetune key '" + key + "'");
    }
    validate();
}

nlohmann::json FineTuneConfig::to_json() const {
    return nlohmann::json{{"lora_rank", lora_rank},       {"lora_alpha", lora_alpha},     {"lora_dropout", lora_dropout},
                          {"target_modules", target_modules}, {"max_seq_len", max_seq_len},   {"learning_rate", learning_rate},
                          {"weight_decay", weight_decay}, {"batch_size", batch_size},     {"grad_accum", grad_accum},
                          {"warmup_steps", warmup_steps}, {"schedule", schedule},         {"epochs", epochs},
                          {"seed", seed}};
}

FineTuneConfig FineTuneConfig::from_json(const nlohmann::json& j) {
    FineTuneConfig c;
    c.lora_rank = j.at("lora_rank").get<int>();
    c.lora_alpha = j.at("lora_alpha").get<double>();
    c.lora_dropout = j.at("lora_dropout").get<double>();
    c.target_modules = j.at("target_modules").get<std::vector<std::string>>();
    c.max_seq_len = j.at("max_seq_len").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.batch_size = j.at("batch_size").get<int>();
    c.grad_accum = j.at("grad_accum").get<int>();
    c.warmup_steps = j.at("warmup_steps").get<int>();
    c.schedule = j.at("schedule").get<std::string>();
    c.epochs = j.at("epochs").get<int>();
    c.seed = j.at("seed").get<std::uint64_t>();
    return c;
}

}  // namespace perjar
