#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "vulnharness/common.hpp"
#include "vulnharness/context.hpp"
#include "vulnharness/knowledge.hpp"
#include "vulnharness/prompt_bundle.hpp"
#include "vulnharness/target_case.hpp"

namespace vulnharness {

struct PromptScheme {
    KnowledgeMode knowledge_mode = KnowledgeMode::none;
    SchemeKind scheme = SchemeKind::raw_scheme;
    bool include_context = false;

    /// "mode,scheme,ctx|noctx", e.g. "summarized,cot,ctx".
    std::string label() const;
    bool operator==(const PromptScheme&) const = default;
};

PromptScheme parse_prompt_scheme(std::string_view label);

/// All 12 cells in a fixed order: knowledge mode, then scheme, then context.
std::vector<PromptScheme> prompt_grid();

/// Substitutes `{name}` and `[%NAME%]` placeholders found in `tmpl`. Substituted values
/// are not rescanned. A placeholder without a value is an assembly error.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

inline constexpr std::string_view kTargetCodeHeading = "Target code:";
inline constexpr std::string_view kContextHeading = "Context code:";

std::string_view fence_language(Language lang);

/// Builds the prompt for one grid cell. `knowledge` must be present exactly when the
/// mode is not none and `context` exactly when the cell includes context. When
/// `tools_available` is false the function-calling sentence and tool schemas are left
/// out.
PromptBundle assemble(const TargetCase& target, const PromptScheme& scheme,
                      const RetrievedKnowledge* knowledge, const ContextBundle* context,
                      bool tools_available = true);

}  // namespace vulnharness
