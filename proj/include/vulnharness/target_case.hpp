#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnharness/common.hpp"

namespace vulnharness {

/// One code segment under test with its ground truth.
struct TargetCase {
    std::string id;
    Language language = Language::solidity;
    std::string code;
    bool ground_truth_vulnerable = false;
    std::optional<std::string> ground_truth_type;
    // Functions named by the vulnerability report; empty for non-vulnerable samples.
    std::vector<std::string> report_functions;
    // Cached functionality summary used by summarized-mode retrieval.
    std::optional<std::string> functionality_summary;
    std::string project;
    std::string period;
    // Name of the function under test inside the corpus call graph. When unset, the
    // first function parsed out of `code` is used.
    std::optional<std::string> function_name;

    /// Throws validation errors for broken invariants (empty code, type/label mismatch).
    void validate() const;
};

nlohmann::json to_json(const TargetCase& c);
TargetCase target_case_from_json(const nlohmann::json& j);

std::vector<TargetCase> load_cases(const std::filesystem::path& path);
void save_cases(const std::filesystem::path& path, const std::vector<TargetCase>& cases);

}  // namespace vulnharness
