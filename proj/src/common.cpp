#include "vulnharness/common.hpp"

#include <algorithm>
#include <cctype>

namespace vulnharness {

std::string_view to_string(Language lang) {
    switch (lang) {
        case Language::solidity: return "solidity";
        case Language::java: return "java";
        case Language::cpp: return "cpp";
    }
    return "?";
}

std::string_view to_string(KnowledgeMode mode) {
    switch (mode) {
        case KnowledgeMode::none: return "none";
        case KnowledgeMode::raw: return "raw";
        case KnowledgeMode::summarized: return "summarized";
    }
    return "?";
}

std::string_view to_string(SchemeKind scheme) {
    switch (scheme) {
        case SchemeKind::raw_scheme: return "raw_scheme";
        case SchemeKind::cot: return "cot";
    }
    return "?";
}

std::string_view to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::validation: return "validation";
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::dimension_mismatch: return "dimension_mismatch";
        case ErrorKind::malformed_summary: return "malformed_summary";
        case ErrorKind::transport: return "transport";
        case ErrorKind::tool_round_cap: return "tool_round_cap";
        case ErrorKind::unparseable_verdict: return "unparseable_verdict";
        case ErrorKind::contract: return "contract";
        case ErrorKind::assembly: return "assembly";
        case ErrorKind::parse: return "parse";
        case ErrorKind::io: return "io";
        case ErrorKind::run_aborted: return "run_aborted";
        case ErrorKind::manifest_drift: return "manifest_drift";
        case ErrorKind::unknown_dimension: return "unknown_dimension";
        case ErrorKind::sanitization: return "sanitization";
    }
    return "?";
}

Language parse_language(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "solidity" || t == "sol") return Language::solidity;
    if (t == "java") return Language::java;
    if (t == "cpp" || t == "c++" || t == "c" || t == "c/c++") return Language::cpp;
    throw HarnessError(ErrorKind::validation, "unknown language: " + std::string(text));
}

KnowledgeMode parse_knowledge_mode(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "none") return KnowledgeMode::none;
    if (t == "raw" || t == "original") return KnowledgeMode::raw;
    if (t == "summarized" || t == "summ") return KnowledgeMode::summarized;
    throw HarnessError(ErrorKind::validation, "unknown knowledge mode: " + std::string(text));
}

SchemeKind parse_scheme(std::string_view text) {
    const auto t = to_lower(trim(text));
    if (t == "raw_scheme" || t == "raw") return SchemeKind::raw_scheme;
    if (t == "cot") return SchemeKind::cot;
    throw HarnessError(ErrorKind::validation, "unknown prompt scheme: " + std::string(text));
}

std::string trim(std::string_view text) {
    auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    size_t b = 0;
    size_t e = text.size();
    while (b < e && is_space(text[b])) ++b;
    while (e > b && is_space(text[e - 1])) --e;
    return std::string(text.substr(b, e - b));
}

std::string to_lower(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && to_lower(a) == to_lower(b);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> parts;
    size_t start = 0;
    while (true) {
        const auto pos = text.find(sep, start);
        parts.emplace_back(text.substr(start, pos == std::string_view::npos ? pos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return parts;
}

}  // namespace vulnharness
