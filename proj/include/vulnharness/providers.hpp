#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "vulnharness/embedder.hpp"
#include "vulnharness/llm.hpp"

namespace vulnharness {

/// One entry of a providers file. The API key is never stored; only the name of the
/// environment variable holding it.
struct ProviderConfig {
    std::string provider_id;
    std::string kind = "openai";  // openai | mock
    std::string base_url;         // e.g. https://api.openai.com/v1
    std::string model_id;
    std::string api_key_env;
    bool supports_tools = false;
    bool supports_temperature = true;
    int max_in_flight = 4;
    std::optional<std::filesystem::path> mock_script;  // kind == mock
};

/// Reads a JSON array (or {"providers": [...]}) of provider entries.
std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path);

LlmHandle handle_for(const ProviderConfig& config, std::optional<int64_t> seed = std::nullopt);

/// OpenAI-compatible /chat/completions client.
class OpenAiBackend : public ChatBackend {
public:
    explicit OpenAiBackend(ProviderConfig config, int timeout_seconds = 120);
    BackendReply chat(const ChatRequest& request) override;

    /// Request body as sent on the wire; exposed for tests.
    static nlohmann::json request_body(const ChatRequest& request);
    static BackendReply parse_response(const nlohmann::json& body);

private:
    ProviderConfig config_;
    int timeout_seconds_;
};

/// OpenAI-compatible /embeddings client.
class OpenAiEmbedder : public Embedder {
public:
    OpenAiEmbedder(ProviderConfig config, std::string model, Eigen::Index dimension);
    std::string id() const override { return model_; }
    Eigen::Index dimension() const override { return dimension_; }
    Eigen::VectorXf embed(std::string_view text) override;

private:
    ProviderConfig config_;
    std::string model_;
    Eigen::Index dimension_;
};

/// Mock backend loaded from a JSONL file of {fingerprint, text} or
/// {match, text} rows; `match` is a substring of the user prompt. Rows without either
/// key set the default reply.
std::shared_ptr<MockBackend> load_mock_backend(const std::filesystem::path& path);

/// "hash-<dim>" for the deterministic mock, or "openai:<provider_id>:<model>:<dim>" for a
/// remote embedding endpoint described by one of `configs`.
std::unique_ptr<Embedder> make_embedder(const std::string& spec, const std::vector<ProviderConfig>& configs);

/// Config whose model_id or provider_id equals `id`. Throws validation when none does.
const ProviderConfig& find_provider(const std::vector<ProviderConfig>& configs, std::string_view id);

/// Registers a backend for every config on `gateway`.
void register_providers(LlmGateway& gateway, const std::vector<ProviderConfig>& configs);

}  // namespace vulnharness
