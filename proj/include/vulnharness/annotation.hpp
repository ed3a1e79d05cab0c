#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "vulnharness/llm.hpp"

namespace vulnharness {

enum class ExtractionMethod { structured, llm_assisted };

std::string_view to_string(ExtractionMethod method);
ExtractionMethod parse_extraction_method(std::string_view text);

struct Verdict {
    bool says_vulnerable = false;
    std::optional<std::string> claimed_type;
    std::string reason;
    ExtractionMethod extraction_method = ExtractionMethod::structured;
    // Set when the answer says "yes" but names no type; such verdicts cannot be a TP.
    bool low_confidence = false;
};

nlohmann::json to_json(const Verdict& v);
Verdict verdict_from_json(const nlohmann::json& j);

enum class Category { TP, TN, FN, FP, FPt };

inline constexpr std::array<Category, 5> kAllCategories = {Category::TP, Category::TN, Category::FN,
                                                           Category::FP, Category::FPt};

std::string_view to_string(Category c);
Category parse_category(std::string_view text);

struct AnnotatedOutcome {
    Category category = Category::TN;
    std::optional<bool> type_match;
};

struct Counts {
    int64_t tp = 0;
    int64_t tn = 0;
    int64_t fp = 0;
    int64_t fn = 0;
    int64_t fpt = 0;

    void add(Category c, int64_t n = 1);
    int64_t total() const { return tp + tn + fp + fn + fpt; }
    Counts& operator+=(const Counts& o);
    bool operator==(const Counts&) const = default;
};

/// Ratios in [0, 1]; nullopt marks a zero denominator.
struct MetricsReport {
    Counts counts;
    std::optional<double> precision;
    std::optional<double> recall;
    std::optional<double> f1;
};

/// precision = tp / (tp + fp + fpt), recall = tp / (tp + fn + fpt). A wrong-type answer
/// is both a false alarm and a miss, so fpt sits in both denominators.
MetricsReport compute_metrics(const Counts& counts);

inline constexpr std::string_view kUndefinedMetric = "—";

/// Percentage with two decimals ("4.76"), or an em dash when undefined.
std::string format_percent(const std::optional<double>& ratio);

/// Pure taxonomy: (vulnerable, yes, match) TP; (vulnerable, yes, no match) FPt;
/// (vulnerable, no) FN; (clean, yes) FP; (clean, no) TN. `type_match` must be present
/// exactly for vulnerable cases answered yes, otherwise a contract error is thrown.
AnnotatedOutcome classify(bool ground_truth_vulnerable, const Verdict& verdict,
                          std::optional<bool> type_match);

/// Local parse of an explicit yes/no answer with its type. Returns nullopt when the text
/// does not commit to yes or no, or says yes without naming a type.
std::optional<Verdict> parse_verdict_locally(std::string_view text);

// Annotator prompts with their function-calling schemas.
PromptBundle reformat_prompt(std::string_view response_text);
PromptBundle compare_types_prompt(std::string_view ground_truth, std::string_view description);
ToolRegistry report_verdict_tool();
ToolRegistry report_match_tool();

/// Structured parse first; otherwise the annotator reformats the answer through the
/// report tool. Throws precondition on an empty response and unparseable_verdict when
/// both paths fail.
Verdict extract_verdict(const ChatExchange& exchange, LlmGateway& gateway, const LlmHandle& annotator);

/// Splits "reentrancy, integer overflow" style answers into individual type names.
std::vector<std::string> claimed_types(std::string_view claimed);

/// Case-insensitive equality with any claimed type short-circuits to true; otherwise
/// the annotator decides. Requires a verdict that says vulnerable.
bool match_type(std::string_view ground_truth, const Verdict& verdict, LlmGateway& gateway,
                const LlmHandle& annotator);

}  // namespace vulnharness
