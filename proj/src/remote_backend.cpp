#include "perjar/remote_backend.hpp"

#include <httplib.h>

#include <fmt/format.h>

#include <chrono>
#include <mutex>
#include <thread>

namespace perjar {

using nlohmann::json;

namespace wire {

namespace {

json example_json(const AlpacaExample& ex) {
    return json{{"instruction", ex.instruction}, {"input", ex.input}, {"response", ex.response ? json(*ex.response) : json()}};
}

std::string require_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string()) throw std::invalid_argument(std::string("wire: missing string field '") + key + "'");
    return j.at(key).get<std::string>();
}

std::optional<std::string> optional_string(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return require_string(j, key);
}

}  // namespace

json encode_generate_request(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) {
    json j{{"prompt", prompt}, {"max_new_tokens", max_new_tokens}, {"temperature", temperature}};
    if (adapter) j["adapter_id"] = adapter->id;
    return j;
}

json encode_finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) {
    json payload = json::array();
    for (const auto& ex : examples) payload.push_back(example_json(ex));
    json j{{"mode", "sft"}, {"payload", payload}, {"config", config.to_json()}, {"template_version", std::string(template_version())}};
    if (base) j["base_adapter"] = base->id;
    return j;
}

json encode_finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) {
    return json{{"mode", "clm"},
                {"payload", json(std::vector<std::string>(texts.begin(), texts.end()))},
                {"config", config.to_json()},
                {"template_version", std::string(template_version())}};
}

GenerateRequest decode_generate_request(const json& j) {
    GenerateRequest r;
    r.prompt = require_string(j, "prompt");
    if (!j.contains("max_new_tokens") || !j.at("max_new_tokens").is_number_integer()) throw std::invalid_argument("wire: bad max_new_tokens");
    if (!j.contains("temperature") || !j.at("temperature").is_number()) throw std::invalid_argument("wire: bad temperature");
    r.max_new_tokens = j.at("max_new_tokens").get<int>();
    r.temperature = j.at("temperature").get<double>();
    r.adapter_id = optional_string(j, "adapter_id");
    return r;
}

FinetuneRequest decode_finetune_request(const json& j) {
    FinetuneRequest r;
    const auto mode = require_string(j, "mode");
    if (!j.contains("payload") || !j.at("payload").is_array()) throw std::invalid_argument("wire: payload must be a list");
    if (!j.contains("config") || !j.at("config").is_object()) throw std::invalid_argument("wire: config must be an object");
    try {
        r.config = FineTuneConfig::from_json(j.at("config"));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("wire: bad config: ") + e.what());
    }
    r.base_adapter = optional_string(j, "base_adapter");
    if (mode == "sft") {
        r.mode = FinetuneRequest::Mode::sft;
        for (const auto& e : j.at("payload")) {
            AlpacaExample ex;
            ex.instruction = require_string(e, "instruction");
            ex.input = require_string(e, "input");
            ex.response = optional_string(e, "response");
            r.examples.push_back(std::move(ex));
        }
    } else if (mode == "clm") {
        r.mode = FinetuneRequest::Mode::clm;
        for (const auto& t : j.at("payload")) {
            if (!t.is_string()) throw std::invalid_argument("wire: clm payload must be a list of strings");
            r.texts.push_back(t.get<std::string>());
        }
    } else {
        throw std::invalid_argument("wire: unknown mode '" + mode + "'");
    }
    return r;
}

json encode_generate_response(const std::string& text) { return json{{"text", text}}; }

json encode_finetune_response(const AdapterHandle& handle) {
    json j{{"adapter_id", handle.id}};
    if (handle.steps) j["steps"] = *handle.steps;
    return j;
}

std::string decode_generate_response(const json& j) { return require_string(j, "text"); }

AdapterHandle decode_finetune_response(const json& j) {
    AdapterHandle h;
    h.id = require_string(j, "adapter_id");
    if (j.contains("steps") && j.at("steps").is_number_integer()) h.steps = j.at("steps").get<long long>();
    return h;
}

}  // namespace wire

struct RemoteBackend::Impl {
    std::mutex mu;
    std::unique_ptr<httplib::Client> client;
};

RemoteBackend::RemoteBackend(RemoteBackendOptions options) : options_(std::move(options)), impl_(std::make_unique<Impl>()) {
    if (options_.endpoint.empty()) throw ConfigError("remote backend endpoint is empty");
    impl_->client = std::make_unique<httplib::Client>(options_.endpoint);
    if (!impl_->client->is_valid()) throw ConfigError("invalid backend endpoint '" + options_.endpoint + "'");
    const auto timeout = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::duration<double>(options_.timeout_seconds));
    const auto secs = static_cast<time_t>(timeout.count() / 1000000);
    const auto usecs = static_cast<time_t>(timeout.count() % 1000000);
    impl_->client->set_read_timeout(secs, usecs);
    impl_->client->set_write_timeout(secs, usecs);
    impl_->client->set_connection_timeout(secs, usecs);
}

RemoteBackend::~RemoteBackend() = default;

json RemoteBackend::post(const std::string& path, const json& body) {
    const auto request_id = fmt::format("req-{}", next_request_.fetch_add(1));
    const httplib::Headers headers{{"X-Request-Id", request_id}};
    const auto payload = body.dump();
    std::string last_error;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        httplib::Result res;
        {
            std::lock_guard lock(impl_->mu);
            res = impl_->client->Post(path, headers, payload, "application/json");
        }
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw BackendError(request_id, path + ": unparseable reply: " + e.what());
        }
        if (res->status < 200 || res->status >= 300) {
            const auto msg = reply.contains("error") && reply.at("error").is_string() ? reply.at("error").get<std::string>() : res->body;
            // Server-side rejections are not retried.
            throw BackendError(request_id, fmt::format("{}: HTTP {}: {}", path, res->status, msg));
        }
        return reply;
    }
    throw BackendError(request_id, path + ": " + last_error + " after " + std::to_string(options_.retries + 1) + " attempts");
}

std::string RemoteBackend::generate(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) {
    return wire::decode_generate_response(post("/generate", wire::encode_generate_request(prompt, max_new_tokens, temperature, adapter)));
}

AdapterHandle RemoteBackend::finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) {
    return wire::decode_finetune_response(post("/finetune", wire::encode_finetune_sft(examples, config, base)));
}

AdapterHandle RemoteBackend::finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) {
    return wire::decode_finetune_response(post("/finetune", wire::encode_finetune_clm(texts, config)));
}

struct BackendServer::Impl {
    ModelBackend& backend;
    httplib::Server server;
    std::mutex mu;
    std::map<std::string, AdapterHandle> handles;

    explicit Impl(ModelBackend& b) : backend(b) {}

    static void reply_error(httplib::Response& res, int status, const std::string& msg) {
        res.status = status;
        res.set_content(json{{"error", msg}}.dump(), "application/json");
    }

    const AdapterHandle* find(const std::optional<std::string>& id) {
        if (!id) return nullptr;
        const auto it = handles.find(*id);
        if (it == handles.end()) throw std::invalid_argument("unknown adapter '" + *id + "'");
        return &it->second;
    }
};

BackendServer::BackendServer(ModelBackend& backend) : impl_(std::make_unique<Impl>(backend)) {
    auto& impl = *impl_;
    impl.server.Post("/generate", [&impl](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto r = wire::decode_generate_request(json::parse(req.body));
            std::lock_guard lock(impl.mu);
            const auto text = impl.backend.generate(r.prompt, r.max_new_tokens, r.temperature, impl.find(r.adapter_id));
            res.set_content(wire::encode_generate_response(text).dump(), "application/json");
        } catch (const std::invalid_argument& e) {
            Impl::reply_error(res, 400, e.what());
        } catch (const std::exception& e) {
            Impl::reply_error(res, 500, e.what());
        }
    });
    impl.server.Post("/finetune", [&impl](const httplib::Request& req, httplib::Response& res) {
        try {
            const auto r = wire::decode_finetune_request(json::parse(req.body));
            std::lock_guard lock(impl.mu);
            AdapterHandle h = r.mode == wire::FinetuneRequest::Mode::sft
                                  ? impl.backend.finetune_sft(r.examples, r.config, impl.find(r.base_adapter))
                                  : impl.backend.finetune_clm(r.texts, r.config);
            impl.handles[h.id] = h;
            res.set_content(wire::encode_finetune_response(h).dump(), "application/json");
        } catch (const std::invalid_argument& e) {
            Impl::reply_error(res, 400, e.what());
        } catch (const std::exception& e) {
            Impl::reply_error(res, 500, e.what());
        }
    });
}

BackendServer::~BackendServer() { stop(); }

int BackendServer::bind_any_port(const std::string& host) { return impl_->server.bind_to_any_port(host); }
void BackendServer::listen_after_bind() { impl_->server.listen_after_bind(); }
void BackendServer::stop() { impl_->server.stop(); }
void BackendServer::wait_until_ready() const { impl_->server.wait_until_ready(); }

}  // namespace perjar
