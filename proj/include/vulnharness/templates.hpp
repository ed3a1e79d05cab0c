#pragma once

#include <string_view>

// Normative prompt text. Golden tests pin each constant byte-for-byte; do not reflow.
namespace vulnharness::templates {

// Knowledge prefixes.
inline constexpr std::string_view kPrefixOwnKnowledge =
    "As a large language model, you have been trained with extensive knowledge of "
    "vulnerabilities. Based on this past knowledge, please evaluate whether the given smart "
    "contract code is vulnerable.";

inline constexpr std::string_view kPrefixRawKnowledge =
    "Now I provide you with a vulnerability report as follows: {report}.\n"
    "Based on this given vulnerability report, pls evaluate whether the given code is vulnerable.";

inline constexpr std::string_view kPrefixSummarizedKnowledge =
    "Now I provide you with a vulnerability knowledge that {knowl}.\n"
    "Based on this given vulnerability knowledge, evaluate whether the given code is vulnerable.";

inline constexpr std::string_view kOutputResult =
    "In your answer, you should at least include three parts: yes or no, type of vulnerability "
    "(answer only one most likely vulnerability type if yes), and the reason for your answer.";

// Schemes.
inline constexpr std::string_view kSchemeRaw =
    "Note that if you need more information, please call the corresponding functions.";

inline constexpr std::string_view kSchemeCot =
    "Note that during your reasoning, you should review the given code step by step and finally "
    "determine whether it is vulnerable. For example, you can first summarize the functionality "
    "of the given code, then analyze whether there is any error that causes the vulnerability. "
    "Lastly, provide me with the result.";

// Summaries.
inline constexpr std::string_view kSummarizeFunctionality =
    "Given the following vulnerability description, following the task:\n"
    "1. Describe the functionality implemented in the given code. This should be answered under "
    "the section \"Functionality:\" and written in the imperative mood, e.g., \"Calculate the "
    "price of a token.\" Your response should be concise and limited to one paragraph and within "
    "40-50 words.\n"
    "2. Remember, do not contain any variable or function or experssion name in the "
    "Functionality Result, focus on the functionality or business logic itself.";

inline constexpr std::string_view kSummarizeRootCause =
    "Please provide a comprehensive and clear abstract that identifies the fundamental mechanics "
    "behind a specific vulnerability, ensuring that this knowledge can be applied universally to "
    "detect similar vulnerabilities across different scenarios. Your abstract should:\n"
    "1. Avoid mentioning any moderation tools or systems.\n"
    "2. Exclude specific code references, such as function or variable names, while providing a "
    "general yet precise technical description.\n"
    "3. Use the format: KeyConcept:xxxx, placing the foundational explanation of the "
    "vulnerability inside the brackets.\n"
    "4. Guarantee that one can understand and identify the vulnerability using only the "
    "information from the VulnerableCode and this KeyConcept.\n"
    "5. Strive for clarity and precision in your description, rather than brevity.\n"
    "6. Break down the vulnerability to its core elements, ensuring all terms are explained and "
    "there are no ambiguities.\n"
    "By following these guidelines, ensure that your abstract remains general and applicable to "
    "various contexts, without relying on specific code samples or detailed case-specific "
    "information.";

// Instruction following and auto-annotation.
inline constexpr std::string_view kInstructionFollowing =
    "I will give you some text generated by another LLM. But the format may be wrong. You must "
    "call the report API to report the result.";

inline constexpr std::string_view kCompareTypes =
    "You are a senior code auditor. Now I will give you a ground truth of vulnerability, and a "
    "description written by an auditor. You need to help me identify whether the description "
    "given by the auditor contains a vulnerability in the ground truth. Please report the result "
    "using the function call.\n"
    "Ground truth: {Ground Truth}\n"
    "Description: {Output}";

// Data augmentation.
inline constexpr std::string_view kGenerateVulnerableCode =
    "[%CWE_INFO%]\n\n"
    "Base on the given CWE information, please help me generate 10 different vulnerable code "
    "snippets in [%LANGUAGE%] language. Each code snippet should be different from each other, "
    "and trying to cover as many as business logic as possible. You do not need to generate the "
    "description of the vulnerabilities, only the code is needed. For each code snippet, please "
    "include it in a code block, which starts with \"```\" and ends with \"```\".";

inline constexpr std::string_view kGenerateReport =
    "[%CODE%]\n\n"
    "The above code has [%CWE_TYPE%] vulnerability. Please help me generate a vulnerability "
    "report for it. The report should include the following sections: 1) Vulnerability "
    "Description, 2) Vulnerable Code, 3) Root Cause, 4) Impact, 5) Mitigation. Each section "
    "should be clearly labeled and contain relevant information. The report should be concise "
    "and easy to understand.";

}  // namespace vulnharness::templates
