#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnharness/common.hpp"
#include "vulnharness/target_case.hpp"

namespace vulnharness {

struct FunctionRecord {
    std::string qualified_name;
    Language language = Language::solidity;
    std::string source_text;
    std::filesystem::path file;
    int start_line = 0;
    int end_line = 0;
    // Simple names of everything this body calls, in source order, duplicates kept.
    std::vector<std::string> called_names;

    /// Name without container prefix: `Vault.withdraw` -> `withdraw`, `a::b` -> `b`,
    /// `Outer.run$lambda1` -> `lambda1`.
    std::string simple_name() const;
    /// Container part of the qualified name, or "" for free functions.
    std::string container() const;
};

/// Contract / class / struct with its declared parents.
struct ContainerRecord {
    std::string qualified_name;
    std::vector<std::string> parents;
    std::filesystem::path file;
    int line = 0;
};

/// State variable / field declared at container or file scope.
struct VariableRecord {
    std::string qualified_name;
    std::string source_text;
    std::filesystem::path file;
    int line = 0;
};

struct FileError {
    std::filesystem::path file;
    int line = 0;
    std::string message;
};

/// Everything extracted from one corpus snapshot. Records are sorted by qualified name.
struct SourceIndex {
    std::vector<FunctionRecord> functions;
    std::vector<ContainerRecord> containers;
    std::vector<VariableRecord> variables;
    std::vector<FileError> errors;

    const FunctionRecord* find_function(std::string_view name) const;
    void merge(SourceIndex other);
    void canonicalize();
};

/// Parses a single in-memory source. A lexing or bracket error yields zero records and
/// one entry in `errors`.
SourceIndex parse_source(std::string_view source, Language lang,
                         const std::filesystem::path& file = "<memory>");

/// Parses each file independently; unreadable or malformed files are recorded in
/// `errors` and the rest are still processed.
SourceIndex parse_functions(const std::vector<std::filesystem::path>& files, Language lang);

/// Source files under `root` with an extension belonging to `lang`, sorted.
std::vector<std::filesystem::path> collect_sources(const std::filesystem::path& root,
                                                   Language lang);

struct CallGraph {
    std::set<std::string> nodes;
    std::set<std::pair<std::string, std::string>> edges;
    size_t unresolved_calls = 0;

    std::vector<std::string> callees(std::string_view caller) const;
};

/// Name-based resolution: a call to `g` links to functions whose simple name is `g`,
/// preferring candidates in the caller's own container. Unresolved calls are counted.
CallGraph build_call_graph(const std::vector<FunctionRecord>& functions);

struct ContextBundle {
    std::vector<FunctionRecord> report_linked_code;
    std::vector<FunctionRecord> callees;
    bool truncated = false;

    bool empty() const { return report_linked_code.empty() && callees.empty(); }
    /// Text appended to prompts under the context heading.
    std::string render() const;
};

inline constexpr size_t kCharsPerToken = 4;
inline constexpr size_t kDefaultContextBudgetTokens = 8000;

size_t estimate_tokens(std::string_view text);

/// Direct callees of the case's function plus the report-linked functions, clipped to the
/// token budget in priority order (report-linked first, then callees by name).
ContextBundle context_for_case(const TargetCase& target, const CallGraph& graph,
                               const std::vector<FunctionRecord>& functions,
                               size_t budget_tokens = kDefaultContextBudgetTokens);

enum class ToolKind { function_definition, class_inheritance, variable_definition };

inline constexpr std::string_view kToolNotFound = "NOT_FOUND";

/// Tool names as exposed to models: getFunctionDefinition, getClassInheritance,
/// getVariableDefinition.
std::string_view tool_name(ToolKind kind);
ToolKind parse_tool_kind(std::string_view text);

/// Returns the entity's source text, or a string starting with kToolNotFound.
std::string tool_lookup(ToolKind kind, std::string_view name, const SourceIndex& corpus);
std::string tool_lookup(std::string_view kind, std::string_view name, const SourceIndex& corpus);

/// OpenAI-style function schemas for the three lookup tools.
nlohmann::json context_tool_schemas();

// Persistence: graph file is line-delimited {caller, callee}; function index is
// line-delimited FunctionRecord.
void save_graph(const std::filesystem::path& path, const CallGraph& graph);
CallGraph load_graph(const std::filesystem::path& path);
void save_function_index(const std::filesystem::path& path, const SourceIndex& index);
SourceIndex load_function_index(const std::filesystem::path& path);

nlohmann::json to_json(const FunctionRecord& f);
FunctionRecord function_record_from_json(const nlohmann::json& j);

}  // namespace vulnharness
