#include "vulnharness/annotation.hpp"

#include <cctype>
#include <cstdio>
#include <regex>

#include "vulnharness/prompt.hpp"
#include "vulnharness/templates.hpp"

namespace vulnharness {

std::string_view to_string(ExtractionMethod method) {
    return method == ExtractionMethod::structured ? "structured" : "llm_assisted";
}

ExtractionMethod parse_extraction_method(std::string_view text) {
    if (text == "structured") return ExtractionMethod::structured;
    if (text == "llm_assisted") return ExtractionMethod::llm_assisted;
    throw HarnessError(ErrorKind::validation, "unknown extraction method: " + std::string(text));
}

nlohmann::json to_json(const Verdict& v) {
    return {{"says_vulnerable", v.says_vulnerable},
            {"claimed_type", v.claimed_type ? nlohmann::json(*v.claimed_type) : nlohmann::json(nullptr)},
            {"reason", v.reason},
            {"extraction_method", to_string(v.extraction_method)},
            {"low_confidence", v.low_confidence}};
}

Verdict verdict_from_json(const nlohmann::json& j) {
    Verdict v;
    v.says_vulnerable = j.at("says_vulnerable").get<bool>();
    if (j.contains("claimed_type") && !j.at("claimed_type").is_null())
        v.claimed_type = j.at("claimed_type").get<std::string>();
    v.reason = j.value("reason", "");
    v.extraction_method = parse_extraction_method(j.value("extraction_method", "structured"));
    v.low_confidence = j.value("low_confidence", false);
    return v;
}

std::string_view to_string(Category c) {
    switch (c) {
        case Category::TP: return "TP";
        case Category::TN: return "TN";
        case Category::FN: return "FN";
        case Category::FP: return "FP";
        case Category::FPt: return "FPt";
    }
    return "?";
}

Category parse_category(std::string_view text) {
    for (auto c : kAllCategories)
        if (iequals(text, to_string(c))) return c;
    if (iequals(text, "FP_t")) return Category::FPt;
    throw HarnessError(ErrorKind::validation, "unknown category: " + std::string(text));
}

void Counts::add(Category c, int64_t n) {
    switch (c) {
        case Category::TP: tp += n; break;
        case Category::TN: tn += n; break;
        case Category::FN: fn += n; break;
        case Category::FP: fp += n; break;
        case Category::FPt: fpt += n; break;
    }
}

Counts& Counts::operator+=(const Counts& o) {
    tp += o.tp;
    tn += o.tn;
    fp += o.fp;
    fn += o.fn;
    fpt += o.fpt;
    return *this;
}

MetricsReport compute_metrics(const Counts& c) {
    if (c.tp < 0 || c.tn < 0 || c.fp < 0 || c.fn < 0 || c.fpt < 0)
        throw HarnessError(ErrorKind::validation, "counts must be non-negative");
    MetricsReport r;
    r.counts = c;
    const auto p_den = c.tp + c.fp + c.fpt;
    const auto r_den = c.tp + c.fn + c.fpt;
    if (p_den > 0) r.precision = static_cast<double>(c.tp) / static_cast<double>(p_den);
    if (r_den > 0) r.recall = static_cast<double>(c.tp) / static_cast<double>(r_den);
    if (r.precision && r.recall) {
        const double sum = *r.precision + *r.recall;
        r.f1 = sum > 0.0 ? 2.0 * *r.precision * *r.recall / sum : 0.0;
    }
    return r;
}

std::string format_percent(const std::optional<double>& ratio) {
    if (!ratio) return std::string(kUndefinedMetric);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", *ratio * 100.0);
    return buf;
}

AnnotatedOutcome classify(bool ground_truth_vulnerable, const Verdict& verdict,
                          std::optional<bool> type_match) {
    const bool needs_match = ground_truth_vulnerable && verdict.says_vulnerable;
    if (needs_match != type_match.has_value())
        throw HarnessError(ErrorKind::contract,
                           needs_match ? "type_match required for a vulnerable case answered yes"
                                       : "type_match given where no type comparison applies");
    if (ground_truth_vulnerable) {
        if (!verdict.says_vulnerable) return {Category::FN, std::nullopt};
        return *type_match ? AnnotatedOutcome{Category::TP, true} : AnnotatedOutcome{Category::FPt, false};
    }
    return {verdict.says_vulnerable ? Category::FP : Category::TN, std::nullopt};
}

// ---- local parse ----------------------------------------------------------------------

namespace {

std::string strip_markup(std::string_view line) {
    std::string out;
    for (char c : line)
        if (c != '*' && c != '#' && c != '`' && c != '>') out += c;
    return trim(out);
}

std::string strip_trailing_punct(std::string s) {
    while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ';' || s.back() == ':' ||
                          std::isspace(static_cast<unsigned char>(s.back()))))
        s.pop_back();
    return trim(s);
}

bool is_empty_type(const std::string& t) {
    const auto l = to_lower(t);
    return l.empty() || l == "none" || l == "n/a" || l == "na" || l == "-" || l == "null" ||
           l == "no vulnerability" || l == "not applicable";
}

size_t word_count(std::string_view s) {
    size_t n = 0;
    bool in = false;
    for (char c : s) {
        const bool sp = std::isspace(static_cast<unsigned char>(c));
        if (!sp && !in) ++n;
        in = !sp;
    }
    return n;
}

const std::regex& labeled_answer() {
    static const std::regex re(
        R"(^(?:\d+[.)]\s*)?(?:answer|result|verdict|vulnerable|yes or no|is (?:the (?:given )?code|it) vulnerable\??)\s*[:\-]\s*(yes|no)\b)",
        std::regex::icase);
    return re;
}

const std::regex& leading_answer() {
    static const std::regex re(R"(^(?:\d+[.)]\s*)?(yes|no)\b\W*(.*)$)", std::regex::icase);
    return re;
}

const std::regex& type_label() {
    static const std::regex re(
        R"((?:type of (?:the )?vulnerability|vulnerability type|type)\s*[:\-]\s*(.*)$)", std::regex::icase);
    return re;
}

const std::regex& reason_label() {
    static const std::regex re(R"(\b(?:reason|rationale|explanation)\s*[:\-]\s*)", std::regex::icase);
    return re;
}

}  // namespace

std::optional<Verdict> parse_verdict_locally(std::string_view text) {
    std::vector<std::string> lines;
    for (const auto& raw : split(text, '\n')) {
        auto l = strip_markup(raw);
        if (!l.empty()) lines.push_back(std::move(l));
    }
    if (lines.empty()) return std::nullopt;

    std::optional<bool> yes;
    size_t answer_line = 0;
    std::string answer_rest;
    std::smatch m;
    for (size_t i = 0; i < lines.size() && !yes; ++i) {
        if (std::regex_search(lines[i], m, labeled_answer())) {
            yes = iequals(m[1].str(), "yes");
            answer_line = i;
            answer_rest = m.suffix().str();
            while (!answer_rest.empty() && !std::isalnum(static_cast<unsigned char>(answer_rest[0])))
                answer_rest.erase(0, 1);
        }
    }
    if (!yes && std::regex_match(lines[0], m, leading_answer())) {
        yes = iequals(m[1].str(), "yes");
        answer_rest = m[2].str();
    }
    if (!yes) return std::nullopt;

    Verdict v;
    v.says_vulnerable = *yes;
    v.extraction_method = ExtractionMethod::structured;

    std::optional<std::string> type;
    for (const auto& l : lines) {
        if (std::regex_search(l, m, type_label())) {
            std::string value = m[1].str();
            std::smatch r;
            if (std::regex_search(value, r, reason_label())) value = value.substr(0, r.position(0));
            value = strip_trailing_punct(value);
            if (!is_empty_type(value)) type = value;
            break;
        }
    }
    if (!type && *yes) {
        // "yes, reentrancy, because ..." or a bare "yes" line followed by the type line.
        std::string candidate;
        if (!answer_rest.empty()) {
            const auto cut = answer_rest.find_first_of(",.;\n");
            candidate = answer_rest.substr(0, cut);
        } else if (answer_line + 1 < lines.size()) {
            candidate = lines[answer_line + 1];
        }
        candidate = strip_trailing_punct(std::regex_replace(candidate, std::regex(R"(^\d+[.)]\s*)"), ""));
        const auto lower = to_lower(candidate);
        const bool prose = lower.rfind("because", 0) == 0 || lower.rfind("the ", 0) == 0 ||
                           lower.rfind("it ", 0) == 0 || lower.rfind("this ", 0) == 0 ||
                           std::regex_search(candidate, reason_label());
        if (!candidate.empty() && word_count(candidate) <= 6 && !prose && !is_empty_type(candidate))
            type = candidate;
    }
    if (*yes && !type) return std::nullopt;
    v.claimed_type = *yes ? type : std::nullopt;

    const std::string joined = [&] {
        std::string s;
        for (const auto& l : lines) s += (s.empty() ? "" : "\n") + l;
        return s;
    }();
    if (std::regex_search(joined, m, reason_label())) {
        v.reason = trim(joined.substr(static_cast<size_t>(m.position(0) + m.length(0))));
    } else {
        v.reason = joined;
    }
    return v;
}

// ---- annotator ------------------------------------------------------------------------

PromptBundle reformat_prompt(std::string_view response_text) {
    std::string user(templates::kInstructionFollowing);
    user += "\n\n";
    user += response_text;
    return make_bundle("", std::move(user), report_verdict_tool().schemas());
}

PromptBundle compare_types_prompt(std::string_view ground_truth, std::string_view description) {
    return make_bundle("",
                       render_template(templates::kCompareTypes, {{"Ground Truth", std::string(ground_truth)},
                                                                  {"Output", std::string(description)}}),
                       report_match_tool().schemas());
}

ToolRegistry report_verdict_tool() {
    ToolRegistry r;
    r.add({{"type", "function"},
           {"function",
            {{"name", "report"},
             {"description", "Report the vulnerability verdict contained in the text."},
             {"parameters",
              {{"type", "object"},
               {"properties",
                {{"vulnerable", {{"type", "boolean"}, {"description", "Whether the text says the code is vulnerable."}}},
                 {"vulnerability_type", {{"type", "string"}, {"description", "The single vulnerability type named, empty if none."}}},
                 {"reason", {{"type", "string"}, {"description", "The reason given for the answer."}}}}},
               {"required", {"vulnerable", "vulnerability_type", "reason"}}}}}}});
    return r;
}

ToolRegistry report_match_tool() {
    ToolRegistry r;
    r.add({{"type", "function"},
           {"function",
            {{"name", "report"},
             {"description", "Report whether the description contains the ground-truth vulnerability."},
             {"parameters",
              {{"type", "object"},
               {"properties", {{"match", {{"type", "boolean"}, {"description", "True if it does."}}}}},
               {"required", {"match"}}}}}}});
    return r;
}

namespace {

const ToolCall* find_call(const ChatExchange& ex, std::string_view name) {
    for (const auto& c : ex.tool_calls)
        if (c.name == name) return &c;
    return nullptr;
}

std::optional<bool> json_bool(const nlohmann::json& args, const char* key) {
    if (!args.is_object() || !args.contains(key)) return std::nullopt;
    const auto& v = args.at(key);
    if (v.is_boolean()) return v.get<bool>();
    if (v.is_string()) {
        const auto s = to_lower(trim(v.get<std::string>()));
        if (s == "true" || s == "yes") return true;
        if (s == "false" || s == "no") return false;
    }
    return std::nullopt;
}

}  // namespace

Verdict extract_verdict(const ChatExchange& exchange, LlmGateway& gateway, const LlmHandle& annotator) {
    if (trim(exchange.response_text).empty())
        throw HarnessError(ErrorKind::precondition, "cannot extract a verdict from an empty response");
    if (auto local = parse_verdict_locally(exchange.response_text)) return *local;

    const auto tools = report_verdict_tool();
    const auto ex = gateway.complete(annotator, reformat_prompt(exchange.response_text), &tools);
    Verdict v;
    v.extraction_method = ExtractionMethod::llm_assisted;
    if (const auto* call = find_call(ex, "report")) {
        const auto yes = json_bool(call->arguments, "vulnerable");
        if (!yes) throw HarnessError(ErrorKind::unparseable_verdict, "annotator report lacks a verdict");
        v.says_vulnerable = *yes;
        const auto type = trim(call->arguments.value("vulnerability_type", ""));
        if (v.says_vulnerable && !is_empty_type(type)) v.claimed_type = type;
        v.reason = call->arguments.value("reason", "");
    } else if (auto reparsed = parse_verdict_locally(ex.response_text)) {
        v = *reparsed;
        v.extraction_method = ExtractionMethod::llm_assisted;
    } else {
        throw HarnessError(ErrorKind::unparseable_verdict, "neither local parsing nor the annotator produced a verdict");
    }
    if (v.says_vulnerable && !v.claimed_type) v.low_confidence = true;
    if (v.reason.empty()) v.reason = exchange.response_text;
    return v;
}

std::vector<std::string> claimed_types(std::string_view claimed) {
    std::string s(claimed);
    static const std::regex sep(R"(\s*(?:,|;|/|\band\b|\bor\b)\s*)", std::regex::icase);
    std::vector<std::string> out;
    for (std::sregex_token_iterator it(s.begin(), s.end(), sep, -1), end; it != end; ++it) {
        auto t = strip_trailing_punct(it->str());
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

bool match_type(std::string_view ground_truth, const Verdict& verdict, LlmGateway& gateway,
                const LlmHandle& annotator) {
    if (!verdict.says_vulnerable)
        throw HarnessError(ErrorKind::precondition, "type matching needs a verdict that says vulnerable");
    if (verdict.claimed_type) {
        const auto gt = trim(ground_truth);
        if (iequals(trim(*verdict.claimed_type), gt)) return true;
        for (const auto& t : claimed_types(*verdict.claimed_type))
            if (iequals(t, gt)) return true;
    }
    std::string description = verdict.claimed_type.value_or("");
    if (!verdict.reason.empty()) description += (description.empty() ? "" : ". ") + verdict.reason;
    const auto tools = report_match_tool();
    const auto ex = gateway.complete(annotator, compare_types_prompt(ground_truth, description), &tools);
    if (const auto* call = find_call(ex, "report")) {
        if (const auto match = json_bool(call->arguments, "match")) return *match;
    }
    std::smatch m;
    const auto first = strip_markup(split(ex.response_text, '\n').front());
    if (std::regex_match(first, m, leading_answer())) return iequals(m[1].str(), "yes");
    throw HarnessError(ErrorKind::unparseable_verdict, "annotator gave no type-match decision");
}

}  // namespace vulnharness
