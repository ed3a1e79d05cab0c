#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vulnharness/common.hpp"
#include "vulnharness/knowledge.hpp"
#include "vulnharness/llm.hpp"
#include "vulnharness/target_case.hpp"

namespace vulnharness {

// ---- CWE-driven knowledge synthesis ----------------------------------------------------

struct CweEntry {
    std::string cwe_id;  // "CWE-190"
    Language language = Language::java;
    std::string description;

    void validate() const;
};

nlohmann::json to_json(const CweEntry& e);
CweEntry cwe_entry_from_json(const nlohmann::json& j);
/// Line-delimited {cwe_id, language, description}.
std::vector<CweEntry> load_cwe_entries(const std::filesystem::path& path);

inline constexpr int kDefaultSnippetsPerCwe = 10;

PromptBundle code_generation_prompt(const CweEntry& entry, int n = kDefaultSnippetsPerCwe);
PromptBundle report_generation_prompt(const CweEntry& entry, std::string_view code);

/// Bodies of closed ``` blocks, in order. Empty blocks and an unterminated tail are dropped.
std::vector<std::string> extract_fenced_blocks(std::string_view text);

struct SynthesisTally {
    int requested = 0;
    int produced = 0;
    int missing_snippets = 0;  // fewer fenced blocks than requested
    int bad_reports = 0;       // report empty or without a description section
    int skipped() const { return missing_snippets + bad_reports; }
};

struct SynthesisResult {
    std::vector<KnowledgeItem> items;
    SynthesisTally tally;
};

/// Asks for `n` snippets, then writes a report for each. Items come back unsummarized
/// with source cwe_synthesized. Extra blocks beyond `n` are ignored.
SynthesisResult synthesize_knowledge(const CweEntry& entry, LlmGateway& gateway,
                                     const LlmHandle& handle, int n = kDefaultSnippetsPerCwe);

/// Runs entries concurrently; the gateway's per-provider limit bounds the load.
SynthesisResult synthesize_all(const std::vector<CweEntry>& entries, LlmGateway& gateway,
                               const LlmHandle& handle, int n = kDefaultSnippetsPerCwe,
                               int workers = 4);

// ---- data-leakage sanitizer ------------------------------------------------------------

struct SanitizationMap {
    std::map<std::string, std::string> renames;
    bool comments_rewritten = false;
};

nlohmann::json to_json(const SanitizationMap& m);

/// Identifiers introduced by declarations inside `code` (functions, parameters, locals,
/// state variables), in first-occurrence order. Type, contract and class names, members
/// reached only through `.`, and language builtins are not included.
std::vector<std::string> declared_identifiers(std::string_view code, Language language);

/// Every identifier token in `code`.
std::vector<std::string> all_identifiers(std::string_view code, Language language);

/// Bracket and statement tree of `code` with identifier leaves replaced by a placeholder
/// and comments dropped.
struct ShapeNode {
    std::string label;
    std::vector<ShapeNode> children;
    bool operator==(const ShapeNode&) const = default;
};

/// Throws parse when the code does not tokenize or its brackets do not balance.
ShapeNode anonymized_shape(std::string_view code, Language language);

PromptBundle sanitize_prompt(const TargetCase& target, const std::vector<std::string>& identifiers,
                             const std::vector<std::string>& comments);

struct SanitizeResult {
    TargetCase sanitized;  // the original when rejected
    SanitizationMap map;
    std::vector<std::string> dropped;  // proposals for names that are not ours to rename
    std::optional<std::string> error;

    bool accepted() const { return !error.has_value(); }
};

/// Applies a proposed rename map and comment rewrite mechanically. Rejects non-injective
/// maps, replacements that are not plain identifiers or that collide with an existing
/// identifier, and any result whose anonymized shape differs or that still contains a
/// renamed name. A rejected result carries the original case.
SanitizeResult apply_sanitization(const TargetCase& target, const std::map<std::string, std::string>& renames,
                                  const std::optional<std::vector<std::string>>& comments);

/// Asks the model for a rename map and comment rewrite, then applies it. Throws
/// precondition when the case does not parse.
SanitizeResult sanitize_case(const TargetCase& target, LlmGateway& gateway, const LlmHandle& handle);

}  // namespace vulnharness
