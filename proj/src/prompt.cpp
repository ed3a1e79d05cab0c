#include "vulnharness/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "vulnharness/templates.hpp"

namespace vulnharness {

std::string PromptScheme::label() const {
    return std::string(to_string(knowledge_mode)) + "," + std::string(to_string(scheme)) + "," +
           (include_context ? "ctx" : "noctx");
}

PromptScheme parse_prompt_scheme(std::string_view label) {
    const auto parts = split(label, ',');
    if (parts.size() != 3)
        throw HarnessError(ErrorKind::validation,
                           "cell must be mode,scheme,ctx|noctx: " + std::string(label));
    PromptScheme s;
    s.knowledge_mode = parse_knowledge_mode(parts[0]);
    s.scheme = parse_scheme(parts[1]);
    const auto ctx = to_lower(trim(parts[2]));
    if (ctx == "ctx" || ctx == "with" || ctx == "c" || ctx == "true") {
        s.include_context = true;
    } else if (ctx == "noctx" || ctx == "without" || ctx == "n" || ctx == "false") {
        s.include_context = false;
    } else {
        throw HarnessError(ErrorKind::validation, "bad context flag: " + std::string(parts[2]));
    }
    return s;
}

std::vector<PromptScheme> prompt_grid() {
    std::vector<PromptScheme> out;
    for (auto mode : {KnowledgeMode::none, KnowledgeMode::raw, KnowledgeMode::summarized})
        for (auto scheme : {SchemeKind::raw_scheme, SchemeKind::cot})
            for (bool ctx : {false, true}) out.push_back({mode, scheme, ctx});
    return out;
}

namespace {

// Length of a placeholder starting at `pos`, or 0.
size_t placeholder_at(std::string_view t, size_t pos, std::string& name) {
    if (t[pos] == '{') {
        size_t end = pos + 1;
        while (end < t.size() && (std::isalnum(static_cast<unsigned char>(t[end])) || t[end] == ' ' ||
                                  t[end] == '_'))
            ++end;
        if (end < t.size() && t[end] == '}' && end > pos + 1 &&
            std::isalpha(static_cast<unsigned char>(t[pos + 1]))) {
            name = std::string(t.substr(pos + 1, end - pos - 1));
            return end - pos + 1;
        }
    } else if (t.compare(pos, 2, "[%") == 0) {
        const auto end = t.find("%]", pos + 2);
        if (end != std::string_view::npos) {
            const auto inner = t.substr(pos + 2, end - pos - 2);
            const bool ok = !inner.empty() && std::all_of(inner.begin(), inner.end(), [](char c) {
                return std::isupper(static_cast<unsigned char>(c)) || c == '_';
            });
            if (ok) {
                name = std::string(inner);
                return end - pos + 2;
            }
        }
    }
    return 0;
}

}  // namespace

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size());
    for (size_t i = 0; i < tmpl.size();) {
        std::string name;
        if (const size_t len = placeholder_at(tmpl, i, name)) {
            const auto it = values.find(name);
            if (it == values.end())
                throw HarnessError(ErrorKind::assembly, "placeholder '" + std::string(tmpl.substr(i, len)) +
                                                            "' left unsubstituted");
            out += it->second;
            i += len;
        } else {
            out += tmpl[i++];
        }
    }
    return out;
}

std::string_view fence_language(Language lang) {
    switch (lang) {
        case Language::solidity: return "solidity";
        case Language::java: return "java";
        case Language::cpp: return "cpp";
    }
    return "";
}

namespace {

std::string fenced(std::string_view code, Language lang) {
    std::string out = "```";
    out += fence_language(lang);
    out += '\n';
    out += code;
    if (code.empty() || code.back() != '\n') out += '\n';
    return out + "```";
}

}  // namespace

PromptBundle assemble(const TargetCase& target, const PromptScheme& scheme,
                      const RetrievedKnowledge* knowledge, const ContextBundle* context,
                      bool tools_available) {
    const bool wants_knowledge = scheme.knowledge_mode != KnowledgeMode::none;
    if (wants_knowledge != (knowledge != nullptr))
        throw HarnessError(ErrorKind::precondition,
                           "cell " + scheme.label() + ": knowledge must be supplied iff mode is not none");
    if (scheme.include_context != (context != nullptr))
        throw HarnessError(ErrorKind::precondition,
                           "cell " + scheme.label() + ": context must be supplied iff the cell includes it");
    if (knowledge && knowledge->mode != scheme.knowledge_mode)
        throw HarnessError(ErrorKind::precondition,
                           "cell " + scheme.label() + ": knowledge retrieved in the wrong mode");

    std::string user;
    switch (scheme.knowledge_mode) {
        case KnowledgeMode::none:
            user = render_template(templates::kPrefixOwnKnowledge, {});
            break;
        case KnowledgeMode::raw:
            user = render_template(templates::kPrefixRawKnowledge, {{"report", knowledge->payload}});
            break;
        case KnowledgeMode::summarized:
            user = render_template(templates::kPrefixSummarizedKnowledge, {{"knowl", knowledge->payload}});
            break;
    }
    user += "\n\n";
    user += templates::kOutputResult;
    user += "\n\n";
    user += kTargetCodeHeading;
    user += '\n';
    user += fenced(target.code, target.language);
    if (context) {
        user += "\n\n";
        user += kContextHeading;
        user += '\n';
        const auto rendered = context->render();
        user += fenced(rendered.empty() ? "// no related functions found" : rendered, target.language);
    }

    nlohmann::json tools = nlohmann::json::array();
    if (scheme.scheme == SchemeKind::raw_scheme && tools_available) {
        user += "\n\n";
        user += templates::kSchemeRaw;
        tools = context_tool_schemas();
    } else if (scheme.scheme == SchemeKind::cot) {
        user += "\n\n";
        user += templates::kSchemeCot;
    }
    return make_bundle("", std::move(user), std::move(tools));
}

}  // namespace vulnharness
