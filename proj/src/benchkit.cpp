#include "vulnharness/benchkit.hpp"

#include <algorithm>
#include <atomic>
#include <mutex>
#include <regex>
#include <set>
#include <thread>

#include "vulnharness/context.hpp"
#include "vulnharness/io.hpp"
#include "vulnharness/lexer.hpp"
#include "vulnharness/prompt.hpp"
#include "vulnharness/templates.hpp"

namespace vulnharness {

namespace {

std::string fenced(std::string_view code, Language lang) {
    std::string out = "```";
    out += fence_language(lang);
    out += '\n';
    out += code;
    if (!code.empty() && code.back() != '\n') out += '\n';
    return out + "```";
}

bool significant(const Token& t) { return t.kind != TokenKind::comment && t.kind != TokenKind::directive; }

LexResult lex_or_throw(std::string_view code, Language lang, ErrorKind kind) {
    auto lex = tokenize(code, lang);
    if (lex.error)
        throw HarnessError(kind, "line " + std::to_string(lex.error->line) + ": " + lex.error->message);
    if (const auto bad = check_brackets(lex.tokens))
        throw HarnessError(kind, "line " + std::to_string(bad->line) + ": " + bad->message);
    return lex;
}

// Keywords after which an identifier is a use or a type name, never a new variable or function.
bool blocks_declaration(std::string_view kw) {
    static const std::set<std::string_view> words = {
        "return", "new", "delete", "emit", "if", "else", "for", "while", "do", "case", "throw",
        "goto", "import", "package", "using", "is", "extends", "implements", "contract",
        "interface", "library", "struct", "enum", "class", "event", "modifier", "namespace",
        "typename", "typedef", "sizeof", "instanceof", "assert", "yield", "co_return", "operator",
        "this", "super", "pragma", "revert", "union", "catch", "try", "switch", "default",
        "break", "continue", "and", "or", "not", "error", "type", "true", "false", "null", "nullptr"};
    return words.count(kw) > 0;
}

// True when tokens[close] is the `>` of a generic argument list such as List<String>.
bool closes_generic(const std::vector<const Token*>& toks, size_t close) {
    int depth = 0;
    for (size_t i = close + 1; i-- > 0;) {
        const auto& t = *toks[i];
        if (t.text == ">") {
            ++depth;
        } else if (t.text == ">>") {
            depth += 2;
        } else if (t.text == "<") {
            if (--depth == 0) return i > 0 && (toks[i - 1]->kind == TokenKind::identifier ||
                                               toks[i - 1]->kind == TokenKind::keyword);
        } else if (!(t.kind == TokenKind::identifier || t.kind == TokenKind::keyword || t.text == "," ||
                     t.text == "." || t.text == "::" || t.text == "?" || t.text == "[" || t.text == "]" ||
                     t.text == "*" || t.text == "&")) {
            return false;
        }
        if (depth <= 0) return false;
    }
    return false;
}

bool type_like(const Token& t) {
    // two adjacent names only occur in a declaration, builtin types such as String included
    if (t.kind == TokenKind::identifier) return true;
    return t.kind == TokenKind::keyword && !blocks_declaration(t.text);
}

std::string comment_body(const std::string& text) {
    std::string body = text;
    if (body.rfind("///", 0) == 0) {
        body = body.substr(3);
    } else if (body.rfind("//", 0) == 0) {
        body = body.substr(2);
    } else if (body.rfind("/*", 0) == 0) {
        body = body.substr(body.rfind("/**", 0) == 0 ? 3 : 2);
        if (body.size() >= 2 && body.compare(body.size() - 2, 2, "*/") == 0) body.resize(body.size() - 2);
    }
    return trim(body);
}

// Re-wraps rewritten text in the original comment's markers; the text can never end the
// comment early or spill onto the next line.
std::string rewrap_comment(const std::string& original, std::string text) {
    if (original.rfind("/*", 0) == 0) {
        for (size_t p; (p = text.find("*/")) != std::string::npos;) text.replace(p, 2, "* /");
        return (original.rfind("/**", 0) == 0 ? "/** " : "/* ") + text + " */";
    }
    std::replace(text.begin(), text.end(), '\n', ' ');
    std::replace(text.begin(), text.end(), '\r', ' ');
    return (original.rfind("///", 0) == 0 ? "/// " : "// ") + text;
}

std::string rename_words(const std::string& text, const std::map<std::string, std::string>& renames) {
    std::string out;
    size_t i = 0;
    auto ident = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$'; };
    while (i < text.size()) {
        if (!ident(text[i])) {
            out += text[i++];
            continue;
        }
        size_t j = i;
        while (j < text.size() && ident(text[j])) ++j;
        const auto word = text.substr(i, j - i);
        const auto it = renames.find(word);
        out += it == renames.end() ? word : it->second;
        i = j;
    }
    return out;
}

std::string rename_qualified(const std::string& name, const std::map<std::string, std::string>& renames) {
    return rename_words(name, renames);
}

SanitizeResult reject(const TargetCase& target, SanitizationMap map, std::vector<std::string> dropped,
                      std::string why) {
    SanitizeResult r;
    r.sanitized = target;
    r.map = std::move(map);
    r.dropped = std::move(dropped);
    r.error = std::move(why);
    return r;
}

}  // namespace

// ---- synthesis -------------------------------------------------------------------------

void CweEntry::validate() const {
    static const std::regex id(R"(CWE-\d+)");
    if (!std::regex_match(cwe_id, id))
        throw HarnessError(ErrorKind::validation, "CWE id must look like CWE-<digits>, got '" + cwe_id + "'");
    if (trim(description).empty()) throw HarnessError(ErrorKind::validation, cwe_id + " has no description");
}

nlohmann::json to_json(const CweEntry& e) {
    return {{"cwe_id", e.cwe_id}, {"language", to_string(e.language)}, {"description", e.description}};
}

CweEntry cwe_entry_from_json(const nlohmann::json& j) {
    CweEntry e;
    try {
        e.cwe_id = j.at("cwe_id").get<std::string>();
        e.language = parse_language(j.at("language").get<std::string>());
        e.description = j.at("description").get<std::string>();
    } catch (const nlohmann::json::exception& ex) {
        throw HarnessError(ErrorKind::validation, std::string("bad CWE entry: ") + ex.what());
    }
    e.validate();
    return e;
}

std::vector<CweEntry> load_cwe_entries(const std::filesystem::path& path) {
    std::vector<CweEntry> out;
    for (const auto& row : read_jsonl(path)) out.push_back(cwe_entry_from_json(row));
    return out;
}

PromptBundle code_generation_prompt(const CweEntry& entry, int n) {
    if (n < 1) throw HarnessError(ErrorKind::validation, "snippet count must be at least 1");
    std::string tmpl(templates::kGenerateVulnerableCode);
    if (n != kDefaultSnippetsPerCwe) {
        const std::string from = "generate 10 different";
        tmpl.replace(tmpl.find(from), from.size(), "generate " + std::to_string(n) + " different");
    }
    const std::string language = entry.language == Language::cpp ? "C/C++"
                                 : entry.language == Language::java ? "Java"
                                                                    : "Solidity";
    return make_bundle("", render_template(tmpl, {{"CWE_INFO", entry.cwe_id + ": " + entry.description},
                                                  {"LANGUAGE", language}}));
}

PromptBundle report_generation_prompt(const CweEntry& entry, std::string_view code) {
    return make_bundle("", render_template(templates::kGenerateReport,
                                           {{"CODE", fenced(code, entry.language)}, {"CWE_TYPE", entry.cwe_id}}));
}

std::vector<std::string> extract_fenced_blocks(std::string_view text) {
    std::vector<std::string> blocks;
    std::optional<std::string> open;
    for (const auto& raw : split(text, '\n')) {
        const auto line = trim(raw);
        if (line.rfind("```", 0) == 0) {
            if (open) {
                if (!trim(*open).empty()) blocks.push_back(*open);
                open.reset();
            } else {
                open.emplace();
            }
            continue;
        }
        if (open) *open += raw + "\n";
    }
    return blocks;
}

SynthesisResult synthesize_knowledge(const CweEntry& entry, LlmGateway& gateway, const LlmHandle& handle,
                                     int n) {
    entry.validate();
    SynthesisResult result;
    result.tally.requested = n;
    const auto generated = gateway.complete(handle, code_generation_prompt(entry, n));
    auto blocks = extract_fenced_blocks(generated.response_text);
    if (blocks.size() > static_cast<size_t>(n)) blocks.resize(static_cast<size_t>(n));
    result.tally.missing_snippets = n - static_cast<int>(blocks.size());

    static const std::regex description_section(R"(vulnerability\s+description)", std::regex::icase);
    for (const auto& code : blocks) {
        const auto report = gateway.complete(handle, report_generation_prompt(entry, code));
        const auto text = trim(report.response_text);
        if (text.empty() || !std::regex_search(text, description_section)) {
            ++result.tally.bad_reports;
            continue;
        }
        KnowledgeItem item;
        item.id = knowledge_id(text, code, entry.language);
        item.language = entry.language;
        item.report_text = text;
        item.vulnerable_code = code;
        item.source = KnowledgeSource::cwe_synthesized;
        result.items.push_back(std::move(item));
    }
    result.tally.produced = static_cast<int>(result.items.size());
    return result;
}

SynthesisResult synthesize_all(const std::vector<CweEntry>& entries, LlmGateway& gateway,
                               const LlmHandle& handle, int n, int workers) {
    std::vector<std::optional<SynthesisResult>> per(entries.size());
    std::vector<std::string> failures(entries.size());
    std::atomic<size_t> next{0};
    auto work = [&] {
        for (size_t i; (i = next.fetch_add(1)) < entries.size();) {
            try {
                per[i] = synthesize_knowledge(entries[i], gateway, handle, n);
            } catch (const HarnessError& e) {
                failures[i] = entries[i].cwe_id + ": " + e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < std::max(1, workers); ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();

    SynthesisResult total;
    for (size_t i = 0; i < entries.size(); ++i) {
        total.tally.requested += n;
        if (!per[i]) {
            // a failed generation call counts as n missing snippets
            total.tally.missing_snippets += n;
            continue;
        }
        total.tally.produced += per[i]->tally.produced;
        total.tally.missing_snippets += per[i]->tally.missing_snippets;
        total.tally.bad_reports += per[i]->tally.bad_reports;
        for (auto& item : per[i]->items) total.items.push_back(std::move(item));
    }
    return total;
}

// ---- sanitizer -------------------------------------------------------------------------

nlohmann::json to_json(const SanitizationMap& m) {
    return {{"renames", m.renames}, {"comments_rewritten", m.comments_rewritten}};
}

std::vector<std::string> all_identifiers(std::string_view code, Language language) {
    const auto lex = tokenize(code, language);
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const auto& t : lex.tokens)
        if (t.kind == TokenKind::identifier && seen.insert(t.text).second) out.push_back(t.text);
    return out;
}

std::vector<std::string> declared_identifiers(std::string_view code, Language language) {
    const auto lex = tokenize(code, language);
    std::vector<const Token*> toks;
    for (const auto& t : lex.tokens)
        if (significant(t)) toks.push_back(&t);

    static const std::set<std::string_view> follows = {"=", ";", ",", ")", "(", "[", ":"};
    // a builtin name declared locally (`int length`) is ours unless it is also used as a member
    std::set<std::string> member_names;
    for (size_t i = 1; i < toks.size(); ++i)
        if (toks[i - 1]->text == "." || toks[i - 1]->text == "->" || toks[i - 1]->text == "::")
            member_names.insert(toks[i]->text);

    std::vector<std::string> out;
    std::set<std::string> seen;
    for (size_t i = 1; i + 1 < toks.size(); ++i) {
        const auto& t = *toks[i];
        if (t.kind != TokenKind::identifier) continue;
        if (is_builtin_name(t.text, language) && member_names.count(t.text)) continue;
        if (!follows.count(toks[i + 1]->text)) continue;
        const auto& prev = *toks[i - 1];
        bool declared = false;
        if (type_like(prev)) {
            declared = true;
        } else if (prev.text == "]") {
            declared = i >= 2 && toks[i - 2]->text == "[";  // uint256[] values
        } else if (prev.text == ">" || prev.text == ">>") {
            declared = closes_generic(toks, i - 1);
        } else if ((prev.text == "*" || prev.text == "&") && language == Language::cpp && i >= 2) {
            // `const char* src`, `Node& n`: the type must be a keyword or a capitalized name
            const auto& ty = *toks[i - 2];
            declared = (ty.kind == TokenKind::keyword && !blocks_declaration(ty.text)) ||
                       (ty.kind == TokenKind::identifier && std::isupper(static_cast<unsigned char>(ty.text[0])));
        }
        if (!declared) continue;
        // `a.b c` never happens, but `x.y = 1` must not count `y`
        if (i >= 2 && (toks[i - 2]->text == "." || toks[i - 2]->text == "->") && prev.kind == TokenKind::identifier)
            continue;
        if (seen.insert(t.text).second) out.push_back(t.text);
    }
    return out;
}

ShapeNode anonymized_shape(std::string_view code, Language language) {
    const auto lex = lex_or_throw(code, language, ErrorKind::parse);
    // stack of open groups; each group collects statements, each statement collects leaves
    struct Frame {
        ShapeNode group;
        ShapeNode stmt{"stmt", {}};
    };
    std::vector<Frame> stack;
    stack.push_back({ShapeNode{"unit", {}}, ShapeNode{"stmt", {}}});
    auto flush = [](Frame& f) {
        if (!f.stmt.children.empty()) f.group.children.push_back(std::move(f.stmt));
        f.stmt = ShapeNode{"stmt", {}};
    };
    for (const auto& t : lex.tokens) {
        if (!significant(t)) continue;
        const auto& s = t.text;
        if (s == "(" || s == "[" || s == "{") {
            stack.push_back({ShapeNode{s, {}}, ShapeNode{"stmt", {}}});
            continue;
        }
        if (s == ")" || s == "]" || s == "}") {
            auto done = std::move(stack.back());
            stack.pop_back();
            flush(done);
            stack.back().stmt.children.push_back(std::move(done.group));
            if (s == "}") flush(stack.back());
            continue;
        }
        stack.back().stmt.children.push_back(
            ShapeNode{t.kind == TokenKind::identifier ? std::string("<id>") : s, {}});
        if (s == ";") flush(stack.back());
    }
    flush(stack.back());
    return std::move(stack.front().group);
}

PromptBundle sanitize_prompt(const TargetCase& target, const std::vector<std::string>& identifiers,
                             const std::vector<std::string>& comments) {
    std::string user =
        "Rename the listed identifiers and reword the listed comments of the code below so that "
        "none of the original names or comment wording remain. Do not change what the code does.\n"
        "Reply with one JSON object: {\"renames\": {\"<old>\": \"<new>\", ...}, \"comments\": "
        "[\"<new comment text>\", ...]} with one comment entry per listed comment, in order. New "
        "names must be plain identifiers that do not already appear in the code.\n\nIdentifiers:\n";
    for (const auto& id : identifiers) user += "- " + id + "\n";
    user += "\nComments:\n";
    for (size_t i = 0; i < comments.size(); ++i) user += std::to_string(i + 1) + ". " + comments[i] + "\n";
    user += "\nCode:\n" + fenced(target.code, target.language);
    return make_bundle("", std::move(user));
}

SanitizeResult apply_sanitization(const TargetCase& target, const std::map<std::string, std::string>& proposed,
                                  const std::optional<std::vector<std::string>>& comments) {
    const auto lex = lex_or_throw(target.code, target.language, ErrorKind::precondition);
    const auto eligible_list = declared_identifiers(target.code, target.language);
    const std::set<std::string> eligible(eligible_list.begin(), eligible_list.end());
    const auto existing_list = all_identifiers(target.code, target.language);
    const std::set<std::string> existing(existing_list.begin(), existing_list.end());

    SanitizationMap map;
    std::vector<std::string> dropped;
    std::map<std::string, std::string> inverse;
    for (const auto& [from, to] : proposed) {
        if (!eligible.count(from) || from == to) {
            dropped.push_back(from);
            continue;
        }
        if (!is_identifier_text(to) || is_keyword(to, target.language) || is_builtin_name(to, target.language))
            return reject(target, map, dropped, "replacement '" + to + "' for '" + from + "' is not a usable identifier");
        if (existing.count(to))
            return reject(target, map, dropped, "replacement '" + to + "' for '" + from + "' collides with an existing identifier");
        if (const auto [it, fresh] = inverse.emplace(to, from); !fresh)
            return reject(target, map, dropped, "'" + it->second + "' and '" + from + "' would both become '" + to + "'");
        map.renames.emplace(from, to);
    }

    size_t comment_count = 0;
    for (const auto& t : lex.tokens) comment_count += t.kind == TokenKind::comment;
    const bool rewrite_comments = comments && comments->size() == comment_count && comment_count > 0;

    std::string out;
    size_t pos = 0;
    size_t comment_index = 0;
    for (const auto& t : lex.tokens) {
        out.append(target.code, pos, t.offset - pos);
        if (t.kind == TokenKind::identifier) {
            const auto it = map.renames.find(t.text);
            out += it == map.renames.end() ? t.text : it->second;
        } else if (t.kind == TokenKind::comment) {
            const auto& text = rewrite_comments ? rewrap_comment(t.text, (*comments)[comment_index]) : t.text;
            out += rename_words(text, map.renames);
            ++comment_index;
        } else {
            out += t.text;
        }
        pos = t.offset + t.length;
    }
    out.append(target.code, pos, std::string::npos);
    map.comments_rewritten = rewrite_comments;

    // verification
    try {
        if (!(anonymized_shape(out, target.language) == anonymized_shape(target.code, target.language)))
            return reject(target, map, dropped, "statement shape changed");
    } catch (const HarnessError& e) {
        return reject(target, map, dropped, std::string("rewritten code does not parse: ") + e.what());
    }
    const auto after = tokenize(out, target.language);
    for (const auto& t : after.tokens) {
        const bool leaked = t.kind == TokenKind::identifier
                                ? map.renames.count(t.text) > 0
                                : t.kind == TokenKind::comment &&
                                      rename_words(t.text, map.renames) != t.text;
        if (leaked) return reject(target, map, dropped, "an original name survived the rewrite");
    }
    const auto before_fns = parse_source(target.code, target.language).functions.size();
    const auto after_fns = parse_source(out, target.language).functions.size();
    if (before_fns != after_fns) return reject(target, map, dropped, "function count changed");

    SanitizeResult result;
    result.sanitized = target;
    result.sanitized.code = std::move(out);
    result.sanitized.functionality_summary.reset();
    for (auto& f : result.sanitized.report_functions) f = rename_qualified(f, map.renames);
    if (result.sanitized.function_name)
        result.sanitized.function_name = rename_qualified(*result.sanitized.function_name, map.renames);
    result.map = std::move(map);
    result.dropped = std::move(dropped);
    return result;
}

SanitizeResult sanitize_case(const TargetCase& target, LlmGateway& gateway, const LlmHandle& handle) {
    const auto lex = lex_or_throw(target.code, target.language, ErrorKind::precondition);
    const auto identifiers = declared_identifiers(target.code, target.language);
    std::vector<std::string> comments;
    for (const auto& t : lex.tokens)
        if (t.kind == TokenKind::comment) comments.push_back(comment_body(t.text));
    if (identifiers.empty() && comments.empty()) {
        SanitizeResult identity;
        identity.sanitized = target;
        return identity;
    }

    const auto ex = gateway.complete(handle, sanitize_prompt(target, identifiers, comments));
    const auto& text = ex.response_text;
    const auto open = text.find('{');
    const auto close = text.rfind('}');
    nlohmann::json proposal;
    if (open != std::string::npos && close != std::string::npos && close > open)
        proposal = nlohmann::json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!proposal.is_object() || !proposal.contains("renames") || !proposal["renames"].is_object())
        return reject(target, {}, {}, "model reply has no rename map");

    std::map<std::string, std::string> renames;
    for (const auto& [k, v] : proposal["renames"].items())
        if (v.is_string()) renames[k] = v.get<std::string>();
    std::optional<std::vector<std::string>> new_comments;
    if (proposal.contains("comments") && proposal["comments"].is_array()) {
        new_comments.emplace();
        for (const auto& c : proposal["comments"]) new_comments->push_back(c.is_string() ? c.get<std::string>() : c.dump());
    }
    return apply_sanitization(target, renames, new_comments);
}

}  // namespace vulnharness
