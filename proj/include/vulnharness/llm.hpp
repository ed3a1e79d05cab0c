#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnharness/common.hpp"
#include "vulnharness/prompt_bundle.hpp"

namespace vulnharness {

struct SourceIndex;

struct LlmHandle {
    std::string provider_id;
    std::string model_id;
    double temperature = 0.0;
    std::optional<int64_t> seed;
    bool supports_tools = false;
    // Some reasoning models reject the parameter; it is then omitted from requests.
    bool supports_temperature = true;
    int max_tokens = 4096;
};

struct ToolCall {
    std::string id;
    std::string name;
    nlohmann::json arguments = nlohmann::json::object();
    std::string result;
};

struct Usage {
    int64_t prompt_tokens = 0;
    int64_t completion_tokens = 0;

    Usage& operator+=(const Usage& o) {
        prompt_tokens += o.prompt_tokens;
        completion_tokens += o.completion_tokens;
        return *this;
    }
};

struct ChatExchange {
    PromptBundle bundle;
    std::string model_id;
    std::string response_text;
    std::vector<ToolCall> tool_calls;
    Usage usage;
    bool cached = false;
    int attempts = 0;  // backend calls made for the first round, 0 on a cache hit
};

struct ChatMessage {
    std::string role;  // system | user | assistant | tool
    std::string content;
    std::vector<ToolCall> tool_calls;  // assistant turns that requested tools
    std::string tool_call_id;          // tool turns
};

struct ChatRequest {
    const LlmHandle& handle;
    const PromptBundle& bundle;
    const std::vector<ChatMessage>& messages;
    const nlohmann::json& tools;  // empty array when tools are not offered
    int round = 0;                // assistant turns already taken in this conversation
};

struct BackendReply {
    std::string text;
    std::vector<ToolCall> tool_calls;
    Usage usage;
};

/// A chat-completion provider. Implementations throw HarnessError(transport) on failure.
class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual BackendReply chat(const ChatRequest& request) = 0;
};

/// Scripted backend keyed by prompt fingerprint. A script is the sequence of model turns
/// for one conversation; turn `round` answers the request made after `round` tool rounds.
class MockBackend : public ChatBackend {
public:
    struct Turn {
        std::string text;
        std::vector<ToolCall> tool_calls;
    };
    struct Script {
        std::vector<Turn> turns;
        int fail_first = 0;  // transport failures before the first success
    };
    using Responder = std::function<Script(const PromptBundle&)>;

    void script(const std::string& fingerprint, Script s);
    void reply(const std::string& fingerprint, std::string text);
    void set_fallback(Responder responder);

    BackendReply chat(const ChatRequest& request) override;

    int64_t call_count() const { return calls_.load(); }
    int64_t calls_for(const std::string& fingerprint) const;

    // Observability for concurrency tests.
    void set_latency(std::chrono::milliseconds latency) { latency_ = latency; }
    int max_in_flight() const { return max_in_flight_.load(); }

    static Script text(std::string s) { return Script{{Turn{std::move(s), {}}}, 0}; }

private:
    mutable std::mutex mutex_;
    std::map<std::string, Script> scripts_;
    std::map<std::string, int64_t> per_fingerprint_;
    std::map<std::string, int> failures_left_;
    Responder fallback_;
    std::atomic<int64_t> calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
    std::chrono::milliseconds latency_{0};
};

/// Callable tools offered to a model. A tool registered without a handler is terminal:
/// when the model calls it, the conversation ends and the call is handed back to the
/// caller (used for structured "report" answers).
class ToolRegistry {
public:
    using Handler = std::function<std::string(const nlohmann::json& arguments)>;

    void add(nlohmann::json schema, Handler handler = nullptr);
    nlohmann::json schemas() const;
    bool has(const std::string& name) const;
    bool is_terminal(const std::string& name) const;
    std::string invoke(const std::string& name, const nlohmann::json& arguments) const;

    /// getFunctionDefinition / getClassInheritance / getVariableDefinition over `corpus`.
    static ToolRegistry for_corpus(const SourceIndex& corpus);

private:
    struct Entry {
        nlohmann::json schema;
        Handler handler;
    };
    std::map<std::string, Entry> tools_;
    std::vector<std::string> order_;
};

/// Raised when a model keeps requesting tools past the round cap.
class ToolRoundCapError : public HarnessError {
public:
    ToolRoundCapError(const std::string& message, std::vector<ToolCall> transcript)
        : HarnessError(ErrorKind::tool_round_cap, message), transcript_(std::move(transcript)) {}
    const std::vector<ToolCall>& transcript() const { return transcript_; }

private:
    std::vector<ToolCall> transcript_;
};

/// Content-addressed response cache: one JSON record per (model, fingerprint, seed).
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir);

    static std::string key(const std::string& model_id, const std::string& fingerprint,
                           const std::optional<int64_t>& seed);
    std::optional<ChatExchange> get(const std::string& key, const PromptBundle& bundle) const;
    void put(const std::string& key, const ChatExchange& exchange, const std::optional<int64_t>& seed);

    // Single replies inside a tool conversation, so a run killed between rounds does not
    // ask again for the rounds it already has.
    static std::string round_key(const std::string& key, int round, const std::vector<ChatMessage>& messages);
    std::optional<BackendReply> get_round(const std::string& round_key) const;
    void put_round(const std::string& round_key, const BackendReply& reply);

private:
    std::filesystem::path path_for(const std::string& key) const;
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

struct GatewayOptions {
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{250};
    int tool_round_cap = 5;
    int max_in_flight_per_provider = 4;
    std::optional<std::filesystem::path> cache_dir;
};

/// Provider-agnostic chat access with retries, tool resolution, caching and a
/// per-provider concurrency bound. Safe to share across worker threads.
class LlmGateway {
public:
    explicit LlmGateway(GatewayOptions options = {});

    void register_backend(const std::string& provider_id, std::shared_ptr<ChatBackend> backend,
                          std::optional<int> max_in_flight = std::nullopt);
    bool has_backend(const std::string& provider_id) const;

    /// Runs one conversation. Tool calls are resolved against `tools` until the model
    /// answers, calls a terminal tool, or exceeds the round cap.
    ChatExchange complete(const LlmHandle& handle, const PromptBundle& bundle,
                          const ToolRegistry* tools = nullptr);

    int64_t backend_calls() const { return backend_calls_.load(); }
    int64_t cache_hits() const { return cache_hits_.load(); }
    const GatewayOptions& options() const { return options_; }

private:
    struct Provider {
        std::shared_ptr<ChatBackend> backend;
        std::unique_ptr<std::counting_semaphore<1024>> slots;
    };

    BackendReply call_with_retry(Provider& provider, const ChatRequest& request, int& attempts);
    Provider& provider_for(const std::string& provider_id);

    GatewayOptions options_;
    std::optional<ResponseCache> cache_;
    mutable std::mutex providers_mutex_;
    std::map<std::string, Provider> providers_;
    std::atomic<int64_t> backend_calls_{0};
    std::atomic<int64_t> cache_hits_{0};
};

/// Seed drawn from the clock at experiment creation; persisted with the run so replays
/// reuse it.
int64_t time_based_seed();

}  // namespace vulnharness
