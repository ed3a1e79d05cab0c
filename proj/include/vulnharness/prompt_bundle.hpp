#pragma once

#include <string>

#include <nlohmann/json.hpp>

namespace vulnharness {

/// Fully assembled prompt text for one request. The fingerprint covers every byte that
/// reaches the model, so it doubles as the response-cache key.
struct PromptBundle {
    std::string system_text;
    std::string user_text;
    nlohmann::json tool_schemas = nlohmann::json::array();
    std::string fingerprint;
};

std::string compute_fingerprint(const std::string& system_text, const std::string& user_text,
                                const nlohmann::json& tool_schemas);

PromptBundle make_bundle(std::string system_text, std::string user_text,
                         nlohmann::json tool_schemas = nlohmann::json::array());

}  // namespace vulnharness
