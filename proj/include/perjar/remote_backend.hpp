#pragma once

#include "perjar/backend.hpp"

#include <atomic>
#include <functional>
#include <memory>

namespace perjar {

// Wire contract for out-of-process backends. Every message is one JSON
// object over HTTP POST:
//
//   POST /generate  {"prompt", "max_new_tokens", "temperature", "adapter_id"?}
//                -> {"text"}
//   POST /finetune  {"mode": "sft"|"clm", "payload", "config", "base_adapter"?,
//                    "template_version"}
//                -> {"adapter_id", "steps"?}
//
// For mode "sft" the payload is a list of {"instruction", "input",
// "response"} records; for "clm" it is a list of texts. Errors come back
// as a non-2xx status with {"error": "..."}. Each request carries an
// X-Request-Id header echoed in error messages.

namespace wire {

nlohmann::json encode_generate_request(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter);
nlohmann::json encode_finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base);
nlohmann::json encode_finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config);

struct GenerateRequest {
    std::string prompt;
    int max_new_tokens = 0;
    double temperature = 0.0;
    std::optional<std::string> adapter_id;
};

struct FinetuneRequest {
    enum class Mode { sft, clm } mode = Mode::sft;
    std::vector<AlpacaExample> examples;
    std::vector<std::string> texts;
    FineTuneConfig config;
    std::optional<std::string> base_adapter;
};

/// Server-side decoders; throw std::invalid_argument on a malformed record.
GenerateRequest decode_generate_request(const nlohmann::json& j);
FinetuneRequest decode_finetune_request(const nlohmann::json& j);

nlohmann::json encode_generate_response(const std::string& text);
nlohmann::json encode_finetune_response(const AdapterHandle& handle);
std::string decode_generate_response(const nlohmann::json& j);
AdapterHandle decode_finetune_response(const nlohmann::json& j);

}  // namespace wire

struct RemoteBackendOptions {
    /// e.g. "http://127.0.0.1:8080"
    std::string endpoint;
    double timeout_seconds = 600.0;
    int retries = 2;
};

/// Client side of the wire contract.
class RemoteBackend final : public ModelBackend {
public:
    explicit RemoteBackend(RemoteBackendOptions options);
    ~RemoteBackend() override;

    std::string generate(const std::string& prompt, int max_new_tokens, double temperature, const AdapterHandle* adapter) override;
    AdapterHandle finetune_sft(std::span<const AlpacaExample> examples, const FineTuneConfig& config, const AdapterHandle* base) override;
    AdapterHandle finetune_clm(std::span<const std::string> texts, const FineTuneConfig& config) override;
    std::string name() const override { return options_.endpoint; }

private:
    nlohmann::json post(const std::string& path, const nlohmann::json& body);

    RemoteBackendOptions options_;
    struct Impl;
    std::unique_ptr<Impl> impl_;
    std::atomic<std::uint64_t> next_request_{1};
};

/// Serves any ModelBackend over the wire contract. Blocks in listen();
/// stop() may be called from another thread.
class BackendServer {
public:
    explicit BackendServer(ModelBackend& backend);
    ~BackendServer();

    /// Binds to host on an ephemeral port and returns it.
    int bind_any_port(const std::string& host);
    void listen_after_bind();
    void stop();
    void wait_until_ready() const;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace perjar
