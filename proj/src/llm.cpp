#include "vulnharness/llm.hpp"

#include <algorithm>
#include <random>
#include <thread>

#include "vulnharness/context.hpp"
#include "vulnharness/io.hpp"

namespace vulnharness {

std::string compute_fingerprint(const std::string& system_text, const std::string& user_text,
                                const nlohmann::json& tool_schemas) {
    // Length-prefixed so that moving text between fields changes the digest.
    const auto tools = tool_schemas.dump();
    std::string material;
    for (const auto* part : {&system_text, &user_text, &tools}) {
        material += std::to_string(part->size());
        material += ':';
        material += *part;
    }
    return sha256_hex(material);
}

PromptBundle make_bundle(std::string system_text, std::string user_text,
                         nlohmann::json tool_schemas) {
    if (tool_schemas.is_null()) tool_schemas = nlohmann::json::array();
    PromptBundle b{std::move(system_text), std::move(user_text), std::move(tool_schemas), ""};
    b.fingerprint = compute_fingerprint(b.system_text, b.user_text, b.tool_schemas);
    return b;
}

// ---- MockBackend ----------------------------------------------------------------------

void MockBackend::script(const std::string& fingerprint, Script s) {
    std::lock_guard lock(mutex_);
    failures_left_[fingerprint] = s.fail_first;
    scripts_[fingerprint] = std::move(s);
}

void MockBackend::reply(const std::string& fingerprint, std::string text) {
    script(fingerprint, MockBackend::text(std::move(text)));
}

void MockBackend::set_fallback(Responder responder) {
    std::lock_guard lock(mutex_);
    fallback_ = std::move(responder);
}

int64_t MockBackend::calls_for(const std::string& fingerprint) const {
    std::lock_guard lock(mutex_);
    const auto it = per_fingerprint_.find(fingerprint);
    return it == per_fingerprint_.end() ? 0 : it->second;
}

BackendReply MockBackend::chat(const ChatRequest& request) {
    const int now = ++in_flight_;
    int seen = max_in_flight_.load();
    while (now > seen && !max_in_flight_.compare_exchange_weak(seen, now)) {
    }
    struct Leave {
        std::atomic<int>& counter;
        ~Leave() { --counter; }
    } leave{in_flight_};
    ++calls_;
    if (latency_.count() > 0) std::this_thread::sleep_for(latency_);

    const auto& fp = request.bundle.fingerprint;
    Script script;
    {
        std::lock_guard lock(mutex_);
        ++per_fingerprint_[fp];
        auto it = scripts_.find(fp);
        if (it == scripts_.end()) {
            if (!fallback_)
                throw HarnessError(ErrorKind::transport, "mock: no script for fingerprint " + fp);
            // Scripts produced by the fallback are memoized so failure counts persist.
            auto produced = fallback_(request.bundle);
            failures_left_[fp] = produced.fail_first;
            it = scripts_.emplace(fp, std::move(produced)).first;
        }
        auto& left = failures_left_[fp];
        if (left > 0) {
            --left;
            throw HarnessError(ErrorKind::transport, "mock: injected transport failure");
        }
        script = it->second;
    }
    if (script.turns.empty()) return {};
    const auto& turn = script.turns[std::min<size_t>(request.round, script.turns.size() - 1)];
    BackendReply reply{turn.text, turn.tool_calls, {}};
    reply.usage.prompt_tokens = static_cast<int64_t>(estimate_tokens(request.bundle.user_text));
    reply.usage.completion_tokens = static_cast<int64_t>(estimate_tokens(turn.text));
    return reply;
}

// ---- ToolRegistry ---------------------------------------------------------------------

namespace {
std::string schema_name(const nlohmann::json& schema) {
    if (schema.contains("function")) return schema.at("function").at("name").get<std::string>();
    return schema.at("name").get<std::string>();
}
}  // namespace

void ToolRegistry::add(nlohmann::json schema, Handler handler) {
    auto name = schema_name(schema);
    if (!tools_.count(name)) order_.push_back(name);
    tools_[name] = Entry{std::move(schema), std::move(handler)};
}

nlohmann::json ToolRegistry::schemas() const {
    auto out = nlohmann::json::array();
    for (const auto& name : order_) out.push_back(tools_.at(name).schema);
    return out;
}

bool ToolRegistry::has(const std::string& name) const { return tools_.count(name) > 0; }

bool ToolRegistry::is_terminal(const std::string& name) const {
    const auto it = tools_.find(name);
    return it != tools_.end() && !it->second.handler;
}

std::string ToolRegistry::invoke(const std::string& name, const nlohmann::json& arguments) const {
    const auto it = tools_.find(name);
    if (it == tools_.end() || !it->second.handler)
        return std::string(kToolNotFound) + ": no tool named '" + name + "'";
    return it->second.handler(arguments);
}

ToolRegistry ToolRegistry::for_corpus(const SourceIndex& corpus) {
    ToolRegistry registry;
    for (const auto& schema : context_tool_schemas()) {
        const auto kind = parse_tool_kind(schema_name(schema));
        registry.add(schema, [&corpus, kind](const nlohmann::json& args) {
            const auto name = args.is_object() ? args.value("name", std::string()) : std::string();
            return tool_lookup(kind, name, corpus);
        });
    }
    return registry;
}

// ---- ResponseCache --------------------------------------------------------------------

namespace {

nlohmann::json to_json(const ToolCall& c) {
    return {{"id", c.id}, {"name", c.name}, {"arguments", c.arguments}, {"result", c.result}};
}

ToolCall tool_call_from_json(const nlohmann::json& j) {
    return {j.value("id", ""), j.at("name").get<std::string>(),
            j.value("arguments", nlohmann::json::object()), j.value("result", "")};
}

}  // namespace

ResponseCache::ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

std::string ResponseCache::key(const std::string& model_id, const std::string& fingerprint,
                               const std::optional<int64_t>& seed) {
    return sha256_hex(model_id + "\n" + fingerprint + "\n" +
                      (seed ? std::to_string(*seed) : std::string("none")));
}

std::filesystem::path ResponseCache::path_for(const std::string& key) const {
    return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<ChatExchange> ResponseCache::get(const std::string& key,
                                               const PromptBundle& bundle) const {
    std::lock_guard lock(mutex_);
    const auto path = path_for(key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const std::exception&) {
        return std::nullopt;  // an unreadable entry is treated as a miss and overwritten
    }
    ChatExchange ex;
    ex.bundle = bundle;
    ex.model_id = j.at("model_id").get<std::string>();
    ex.response_text = j.at("response_text").get<std::string>();
    for (const auto& c : j.value("tool_calls", nlohmann::json::array()))
        ex.tool_calls.push_back(tool_call_from_json(c));
    ex.usage.prompt_tokens = j.value("prompt_tokens", int64_t{0});
    ex.usage.completion_tokens = j.value("completion_tokens", int64_t{0});
    ex.cached = true;
    ex.attempts = 0;
    return ex;
}

void ResponseCache::put(const std::string& key, const ChatExchange& exchange,
                        const std::optional<int64_t>& seed) {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : exchange.tool_calls) calls.push_back(to_json(c));
    const nlohmann::json j = {{"key", key},
                              {"model_id", exchange.model_id},
                              {"fingerprint", exchange.bundle.fingerprint},
                              {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
                              {"response_text", exchange.response_text},
                              {"tool_calls", calls},
                              {"prompt_tokens", exchange.usage.prompt_tokens},
                              {"completion_tokens", exchange.usage.completion_tokens}};
    std::lock_guard lock(mutex_);
    write_text_file_atomic(path_for(key), j.dump());
}

std::string ResponseCache::round_key(const std::string& key, int round, const std::vector<ChatMessage>& messages) {
    nlohmann::json transcript = nlohmann::json::array();
    for (const auto& m : messages) {
        nlohmann::json calls = nlohmann::json::array();
        for (const auto& c : m.tool_calls) calls.push_back(to_json(c));
        transcript.push_back({m.role, m.content, calls, m.tool_call_id});
    }
    return sha256_hex(key + "\nround " + std::to_string(round) + "\n" + transcript.dump());
}

std::optional<BackendReply> ResponseCache::get_round(const std::string& round_key) const {
    std::lock_guard lock(mutex_);
    const auto path = path_for(round_key);
    if (!std::filesystem::exists(path)) return std::nullopt;
    try {
        const auto j = nlohmann::json::parse(read_text_file(path));
        BackendReply reply;
        reply.text = j.at("text").get<std::string>();
        for (const auto& c : j.at("tool_calls")) reply.tool_calls.push_back(tool_call_from_json(c));
        reply.usage.prompt_tokens = j.value("prompt_tokens", int64_t{0});
        reply.usage.completion_tokens = j.value("completion_tokens", int64_t{0});
        return reply;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

void ResponseCache::put_round(const std::string& round_key, const BackendReply& reply) {
    nlohmann::json calls = nlohmann::json::array();
    for (const auto& c : reply.tool_calls) calls.push_back(to_json(c));
    const nlohmann::json j = {{"text", reply.text},
                              {"tool_calls", calls},
                              {"prompt_tokens", reply.usage.prompt_tokens},
                              {"completion_tokens", reply.usage.completion_tokens}};
    std::lock_guard lock(mutex_);
    write_text_file_atomic(path_for(round_key), j.dump());
}

// ---- LlmGateway -----------------------------------------------------------------------

LlmGateway::LlmGateway(GatewayOptions options) : options_(std::move(options)) {
    if (options_.max_attempts < 1) options_.max_attempts = 1;
    if (options_.cache_dir) cache_.emplace(*options_.cache_dir);
}

void LlmGateway::register_backend(const std::string& provider_id,
                                  std::shared_ptr<ChatBackend> backend,
                                  std::optional<int> max_in_flight) {
    const int slots = std::clamp(max_in_flight.value_or(options_.max_in_flight_per_provider), 1, 1024);
    std::lock_guard lock(providers_mutex_);
    providers_[provider_id] =
        Provider{std::move(backend), std::make_unique<std::counting_semaphore<1024>>(slots)};
}

bool LlmGateway::has_backend(const std::string& provider_id) const {
    std::lock_guard lock(providers_mutex_);
    return providers_.count(provider_id) > 0;
}

LlmGateway::Provider& LlmGateway::provider_for(const std::string& provider_id) {
    std::lock_guard lock(providers_mutex_);
    const auto it = providers_.find(provider_id);
    if (it == providers_.end())
        throw HarnessError(ErrorKind::precondition, "no backend registered for provider '" +
                                                        provider_id + "'");
    return it->second;
}

BackendReply LlmGateway::call_with_retry(Provider& provider, const ChatRequest& request,
                                         int& attempts) {
    for (int attempt = 1;; ++attempt) {
        attempts = attempt;
        try {
            provider.slots->acquire();
            struct Release {
                std::counting_semaphore<1024>& s;
                ~Release() { s.release(); }
            } release{*provider.slots};
            ++backend_calls_;
            return provider.backend->chat(request);
        } catch (const HarnessError& e) {
            if (e.kind() != ErrorKind::transport || attempt >= options_.max_attempts) throw;
        }
        const auto delay = options_.backoff_base * (1 << (attempt - 1));
        if (delay.count() > 0) std::this_thread::sleep_for(delay);
    }
}

ChatExchange LlmGateway::complete(const LlmHandle& handle, const PromptBundle& bundle,
                                  const ToolRegistry* tools) {
    std::string cache_key;
    if (cache_) {
        cache_key = ResponseCache::key(handle.model_id, bundle.fingerprint, handle.seed);
        if (auto hit = cache_->get(cache_key, bundle)) {
            ++cache_hits_;
            return *hit;
        }
    }

    auto& provider = provider_for(handle.provider_id);
    const bool offer_tools = handle.supports_tools && !bundle.tool_schemas.empty();
    const nlohmann::json offered = offer_tools ? bundle.tool_schemas : nlohmann::json::array();

    std::vector<ChatMessage> messages;
    if (!bundle.system_text.empty()) messages.push_back({"system", bundle.system_text, {}, ""});
    messages.push_back({"user", bundle.user_text, {}, ""});

    ChatExchange ex;
    ex.bundle = bundle;
    ex.model_id = handle.model_id;

    for (int round = 0;; ++round) {
        ChatRequest request{handle, bundle, messages, offered, round};
        int attempts = 0;
        // replies that continue a tool conversation are cached on their own so a run killed
        // mid-conversation replays them instead of asking again
        const auto rkey = cache_ && offer_tools ? ResponseCache::round_key(cache_key, round, messages) : std::string();
        std::optional<BackendReply> replayed;
        if (!rkey.empty()) replayed = cache_->get_round(rkey);
        auto reply = replayed ? *replayed : call_with_retry(provider, request, attempts);
        if (!replayed && !rkey.empty() && !reply.tool_calls.empty()) cache_->put_round(rkey, reply);
        if (round == 0) ex.attempts = attempts;
        ex.usage += reply.usage;
        if (!offer_tools) reply.tool_calls.clear();  // no tool traffic without tool support

        if (reply.tool_calls.empty()) {
            ex.response_text = std::move(reply.text);
            break;
        }
        const bool terminal = std::any_of(
            reply.tool_calls.begin(), reply.tool_calls.end(), [&](const ToolCall& c) {
                return tools && tools->is_terminal(c.name);
            });
        if (terminal) {
            for (auto& c : reply.tool_calls) ex.tool_calls.push_back(c);
            ex.response_text = std::move(reply.text);
            break;
        }
        if (round >= options_.tool_round_cap) {
            for (auto& c : reply.tool_calls) ex.tool_calls.push_back(c);
            throw ToolRoundCapError("model " + handle.model_id + " exceeded " +
                                        std::to_string(options_.tool_round_cap) + " tool rounds",
                                    ex.tool_calls);
        }
        ChatMessage assistant{"assistant", reply.text, {}, ""};
        std::vector<ChatMessage> results;
        for (size_t i = 0; i < reply.tool_calls.size(); ++i) {
            auto& call = reply.tool_calls[i];
            if (call.id.empty()) call.id = "call_" + std::to_string(round) + "_" + std::to_string(i);
            call.result = tools ? tools->invoke(call.name, call.arguments)
                                : std::string(kToolNotFound) + ": no tool named '" + call.name + "'";
            assistant.tool_calls.push_back(call);
            results.push_back({"tool", call.result, {}, call.id});
            ex.tool_calls.push_back(call);
        }
        messages.push_back(std::move(assistant));
        for (auto& r : results) messages.push_back(std::move(r));
    }

    if (cache_) cache_->put(cache_key, ex, handle.seed);
    return ex;
}

int64_t time_based_seed() {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    return std::chrono::duration_cast<std::chrono::microseconds>(now).count() % 2147483647;
}

}  // namespace vulnharness
