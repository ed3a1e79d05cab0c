#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace vulnharness {

enum class Language { solidity, java, cpp };

enum class KnowledgeMode { none, raw, summarized };

enum class SchemeKind { raw_scheme, cot };

enum class ErrorKind {
    validation,
    precondition,
    dimension_mismatch,
    malformed_summary,
    transport,
    tool_round_cap,
    unparseable_verdict,
    contract,
    assembly,
    parse,
    io,
    run_aborted,
    manifest_drift,
    unknown_dimension,
    sanitization,
};

/// Single exception type for the harness; `kind()` tells callers which contract failed.
class HarnessError : public std::runtime_error {
public:
    HarnessError(ErrorKind kind, const std::string& message)
        : std::runtime_error(message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

std::string_view to_string(Language lang);
std::string_view to_string(KnowledgeMode mode);
std::string_view to_string(SchemeKind scheme);
std::string_view to_string(ErrorKind kind);

// Accepts the canonical names plus a few common aliases ("sol", "c++", "c", "summ").
Language parse_language(std::string_view text);
KnowledgeMode parse_knowledge_mode(std::string_view text);
SchemeKind parse_scheme(std::string_view text);

std::string trim(std::string_view text);
std::string to_lower(std::string_view text);
bool iequals(std::string_view a, std::string_view b);
std::vector<std::string> split(std::string_view text, char sep);

}  // namespace vulnharness
