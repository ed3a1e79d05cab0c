#include "vulnharness/providers.hpp"

#include <cstdlib>

#include <httplib.h>

#include "vulnharness/io.hpp"

namespace vulnharness {

namespace {

ProviderConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base) {
    ProviderConfig c;
    c.provider_id = j.at("provider_id").get<std::string>();
    c.kind = j.value("kind", "openai");
    c.base_url = j.value("base_url", "");
    c.model_id = j.at("model_id").get<std::string>();
    c.api_key_env = j.value("api_key_env", "");
    c.supports_tools = j.value("supports_tools", false);
    c.supports_temperature = j.value("supports_temperature", true);
    c.max_in_flight = j.value("max_in_flight", 4);
    if (j.contains("mock_script") && !j.at("mock_script").is_null()) {
        std::filesystem::path p = j.at("mock_script").get<std::string>();
        c.mock_script = p.is_absolute() ? p : base / p;
    }
    if (j.contains("api_key"))
        throw HarnessError(ErrorKind::validation, "provider " + c.provider_id +
                                                      ": keys belong in the environment, "
                                                      "set api_key_env instead");
    if (c.kind != "openai" && c.kind != "mock")
        throw HarnessError(ErrorKind::validation,
                           "provider " + c.provider_id + ": unknown kind '" + c.kind + "'");
    if (c.kind == "openai" && c.base_url.empty())
        throw HarnessError(ErrorKind::validation, "provider " + c.provider_id + ": base_url missing");
    return c;
}

struct Endpoint {
    std::string origin;  // scheme://host[:port]
    std::string prefix;  // path prefix without trailing slash
};

Endpoint split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    const auto path_start = url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
    Endpoint e;
    e.origin = url.substr(0, path_start);
    e.prefix = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!e.prefix.empty() && e.prefix.back() == '/') e.prefix.pop_back();
    return e;
}

nlohmann::json post_json(const ProviderConfig& config, const std::string& route,
                         const nlohmann::json& body, int timeout_seconds) {
    const auto endpoint = split_url(config.base_url);
    httplib::Client client(endpoint.origin);
    client.set_connection_timeout(timeout_seconds);
    client.set_read_timeout(timeout_seconds);
    client.set_write_timeout(timeout_seconds);
    httplib::Headers headers;
    if (!config.api_key_env.empty()) {
        if (const char* key = std::getenv(config.api_key_env.c_str()))
            headers.emplace("Authorization", std::string("Bearer ") + key);
    }
    auto res = client.Post(endpoint.prefix + route, headers, body.dump(), "application/json");
    if (!res)
        throw HarnessError(ErrorKind::transport, config.provider_id + ": " +
                                                     httplib::to_string(res.error()));
    if (res->status < 200 || res->status >= 300)
        throw HarnessError(ErrorKind::transport, config.provider_id + ": HTTP " +
                                                     std::to_string(res->status) + ": " +
                                                     res->body.substr(0, 300));
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::transport,
                           config.provider_id + ": response is not JSON: " + e.what());
    }
}

}  // namespace

std::vector<ProviderConfig> load_provider_configs(const std::filesystem::path& path) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::parse, path.string() + ": " + e.what());
    }
    const auto& list = doc.is_object() ? doc.at("providers") : doc;
    std::vector<ProviderConfig> out;
    try {
        for (const auto& j : list) out.push_back(config_from_json(j, path.parent_path()));
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::validation, path.string() + ": " + e.what());
    }
    return out;
}

LlmHandle handle_for(const ProviderConfig& config, std::optional<int64_t> seed) {
    LlmHandle h;
    h.provider_id = config.provider_id;
    h.model_id = config.model_id;
    h.supports_tools = config.supports_tools;
    h.supports_temperature = config.supports_temperature;
    h.seed = seed;
    return h;
}

// ---- OpenAiBackend --------------------------------------------------------------------

OpenAiBackend::OpenAiBackend(ProviderConfig config, int timeout_seconds)
    : config_(std::move(config)), timeout_seconds_(timeout_seconds) {}

nlohmann::json OpenAiBackend::request_body(const ChatRequest& request) {
    nlohmann::json messages = nlohmann::json::array();
    for (const auto& m : request.messages) {
        nlohmann::json msg = {{"role", m.role}, {"content", m.content}};
        if (!m.tool_calls.empty()) {
            nlohmann::json calls = nlohmann::json::array();
            for (const auto& c : m.tool_calls) {
                calls.push_back({{"id", c.id},
                                 {"type", "function"},
                                 {"function", {{"name", c.name}, {"arguments", c.arguments.dump()}}}});
            }
            msg["tool_calls"] = std::move(calls);
        }
        if (!m.tool_call_id.empty()) msg["tool_call_id"] = m.tool_call_id;
        messages.push_back(std::move(msg));
    }
    nlohmann::json body = {{"model", request.handle.model_id},
                           {"messages", std::move(messages)},
                           {"max_tokens", request.handle.max_tokens}};
    if (request.handle.supports_temperature) body["temperature"] = request.handle.temperature;
    if (request.handle.seed) body["seed"] = *request.handle.seed;
    if (!request.tools.empty()) body["tools"] = request.tools;
    return body;
}

BackendReply OpenAiBackend::parse_response(const nlohmann::json& body) {
    BackendReply reply;
    try {
        const auto& message = body.at("choices").at(0).at("message");
        if (message.contains("content") && message.at("content").is_string())
            reply.text = message.at("content").get<std::string>();
        for (const auto& c : message.value("tool_calls", nlohmann::json::array())) {
            ToolCall call;
            call.id = c.value("id", "");
            call.name = c.at("function").at("name").get<std::string>();
            const auto& args = c.at("function").value("arguments", nlohmann::json("{}"));
            if (args.is_string()) {
                call.arguments = nlohmann::json::parse(args.get<std::string>(), nullptr, false);
                if (call.arguments.is_discarded()) call.arguments = nlohmann::json::object();
            } else {
                call.arguments = args;
            }
            reply.tool_calls.push_back(std::move(call));
        }
        if (body.contains("usage")) {
            reply.usage.prompt_tokens = body.at("usage").value("prompt_tokens", int64_t{0});
            reply.usage.completion_tokens = body.at("usage").value("completion_tokens", int64_t{0});
        }
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::transport, std::string("malformed completion: ") + e.what());
    }
    return reply;
}

BackendReply OpenAiBackend::chat(const ChatRequest& request) {
    return parse_response(post_json(config_, "/chat/completions", request_body(request),
                                    timeout_seconds_));
}

// ---- OpenAiEmbedder -------------------------------------------------------------------

OpenAiEmbedder::OpenAiEmbedder(ProviderConfig config, std::string model, Eigen::Index dimension)
    : config_(std::move(config)), model_(std::move(model)), dimension_(dimension) {}

Eigen::VectorXf OpenAiEmbedder::embed(std::string_view text) {
    const auto body = post_json(config_, "/embeddings",
                                {{"model", model_}, {"input", std::string(text)}}, 120);
    std::vector<float> values;
    try {
        values = body.at("data").at(0).at("embedding").get<std::vector<float>>();
    } catch (const nlohmann::json::exception& e) {
        throw HarnessError(ErrorKind::transport, std::string("malformed embedding: ") + e.what());
    }
    if (static_cast<Eigen::Index>(values.size()) != dimension_)
        throw HarnessError(ErrorKind::dimension_mismatch,
                           model_ + " returned " + std::to_string(values.size()) +
                               " dimensions, expected " + std::to_string(dimension_));
    return Eigen::Map<Eigen::VectorXf>(values.data(), dimension_);
}

// ---- mock provider --------------------------------------------------------------------

std::shared_ptr<MockBackend> load_mock_backend(const std::filesystem::path& path) {
    auto mock = std::make_shared<MockBackend>();
    std::vector<std::pair<std::string, std::string>> substring_rules;
    std::optional<std::string> default_reply;
    for (const auto& row : read_jsonl(path)) {
        auto text = row.at("text").get<std::string>();
        if (row.contains("fingerprint")) {
            mock->reply(row.at("fingerprint").get<std::string>(), std::move(text));
        } else if (row.contains("match")) {
            substring_rules.emplace_back(row.at("match").get<std::string>(), std::move(text));
        } else {
            default_reply = std::move(text);
        }
    }
    mock->set_fallback([substring_rules, default_reply](const PromptBundle& bundle) {
        for (const auto& [needle, text] : substring_rules)
            if (bundle.user_text.find(needle) != std::string::npos) return MockBackend::text(text);
        if (default_reply) return MockBackend::text(*default_reply);
        throw HarnessError(ErrorKind::transport, "mock: no rule matches prompt " + bundle.fingerprint);
    });
    return mock;
}

std::unique_ptr<Embedder> make_embedder(const std::string& spec, const std::vector<ProviderConfig>& configs) {
    auto bad = [&](const std::string& why) {
        return HarnessError(ErrorKind::validation, "embedder '" + spec + "': " + why);
    };
    auto positive = [&](const std::string& text) {
        try {
            size_t used = 0;
            const long dim = std::stol(text, &used);
            if (used == text.size() && dim > 0) return static_cast<Eigen::Index>(dim);
        } catch (const std::exception&) {
        }
        throw bad("dimension must be a positive integer");
    };
    if (spec.rfind("hash-", 0) == 0) return std::make_unique<HashEmbedder>(positive(spec.substr(5)));
    if (spec.rfind("openai:", 0) == 0) {
        const auto parts = split(spec, ':');
        if (parts.size() != 4) throw bad("expected openai:<provider>:<model>:<dim>");
        return std::make_unique<OpenAiEmbedder>(find_provider(configs, parts[1]), parts[2], positive(parts[3]));
    }
    throw bad("expected hash-<dim> or openai:<provider>:<model>:<dim>");
}

const ProviderConfig& find_provider(const std::vector<ProviderConfig>& configs, std::string_view id) {
    for (const auto& c : configs)
        if (c.model_id == id) return c;
    for (const auto& c : configs)
        if (c.provider_id == id) return c;
    throw HarnessError(ErrorKind::validation, "no provider configured for '" + std::string(id) + "'");
}

void register_providers(LlmGateway& gateway, const std::vector<ProviderConfig>& configs) {
    for (const auto& c : configs) {
        std::shared_ptr<ChatBackend> backend;
        if (c.kind == "mock") {
            backend = c.mock_script ? std::static_pointer_cast<ChatBackend>(load_mock_backend(*c.mock_script))
                                    : std::make_shared<MockBackend>();
        } else {
            backend = std::make_shared<OpenAiBackend>(c);
        }
        gateway.register_backend(c.provider_id, std::move(backend), c.max_in_flight);
    }
}

}  // namespace vulnharness
