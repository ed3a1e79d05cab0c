#include <algorithm>
#include <fstream>
#include <map>

#include "vulnharness/context.hpp"
#include "vulnharness/io.hpp"
#include "vulnharness/lexer.hpp"

namespace vulnharness {
namespace {

// Function and container extraction over a bracket-matched token stream. Only
// declaration scopes (file, namespace, contract/class bodies) are searched for
// definitions; function bodies are searched for calls and nested functions.
class Extractor {
public:
    Extractor(std::string_view src, Language lang, std::filesystem::path file)
        : src_(src), lang_(lang), file_(std::move(file)) {}

    SourceIndex run() {
        auto lexed = tokenize(src_, lang_);
        if (lexed.error) {
            out_.errors.push_back({file_, lexed.error->line, lexed.error->message});
            return std::move(out_);
        }
        for (auto& t : lexed.tokens)
            if (t.kind != TokenKind::comment && t.kind != TokenKind::directive)
                toks_.push_back(std::move(t));
        if (auto err = check_brackets(toks_)) {
            out_.errors.push_back({file_, err->line, err->message});
            return std::move(out_);
        }
        match_.assign(toks_.size(), 0);
        std::vector<size_t> stack;
        for (size_t i = 0; i < toks_.size(); ++i) {
            if (is_open(i)) {
                stack.push_back(i);
            } else if (is_close(i)) {
                match_[i] = stack.back();
                match_[stack.back()] = i;
                stack.pop_back();
            }
        }
        scan_scope(0, toks_.size(), "");
        return std::move(out_);
    }

private:
    bool is_punct(size_t i, std::string_view text) const {
        return i < toks_.size() && toks_[i].kind == TokenKind::punct && toks_[i].text == text;
    }
    bool is_kw(size_t i, std::string_view text) const {
        return i < toks_.size() && toks_[i].kind == TokenKind::keyword && toks_[i].text == text;
    }
    bool is_ident(size_t i) const {
        return i < toks_.size() && toks_[i].kind == TokenKind::identifier;
    }
    bool is_open(size_t i) const {
        return is_punct(i, "(") || is_punct(i, "[") || is_punct(i, "{");
    }
    bool is_close(size_t i) const {
        return is_punct(i, ")") || is_punct(i, "]") || is_punct(i, "}");
    }

    std::string sep() const { return lang_ == Language::cpp ? "::" : "."; }

    std::string qualify(const std::string& prefix, const std::string& name) const {
        if (prefix.empty()) return name;
        if (prefix.back() == '$') return prefix + name;
        return prefix + sep() + name;
    }

    std::string text_between(size_t first_tok, size_t last_tok) const {
        const auto begin = toks_[first_tok].offset;
        const auto end = toks_[last_tok].offset + toks_[last_tok].length;
        return std::string(src_.substr(begin, end - begin));
    }

    // Skips a template/generic argument list starting at '<'; returns index past '>'.
    size_t skip_angles(size_t i, size_t limit) const {
        int depth = 0;
        for (; i < limit; ++i) {
            const auto& t = toks_[i].text;
            if (toks_[i].kind != TokenKind::punct) continue;
            if (t == "<") ++depth;
            else if (t == ">") --depth;
            else if (t == ">>") depth -= 2;
            else if (t == ">>>") depth -= 3;
            else if (t == "(" || t == "[" || t == "{") i = match_[i];
            else if (t == ";") return i;
            if (depth <= 0) return i + 1;
        }
        return limit;
    }

    bool is_container_keyword(size_t i) const {
        if (toks_[i].kind != TokenKind::keyword) return false;
        const auto& t = toks_[i].text;
        switch (lang_) {
            case Language::solidity:
                return t == "contract" || t == "library" || t == "interface";
            case Language::java:
                if (i > 0 && is_punct(i - 1, ".")) return false;  // Foo.class
                if (i > 0 && is_punct(i - 1, "@")) return false;  // @interface
                return t == "class" || t == "interface" || t == "enum" || t == "record";
            case Language::cpp:
                if (i > 0 && (is_kw(i - 1, "enum") || is_kw(i - 1, "friend"))) return false;
                return t == "class" || t == "struct" || t == "union" || t == "namespace";
        }
        return false;
    }

    // Parses `is A, B(x)` / `extends A implements B, C` / `: public A, B<T>` lists.
    std::vector<std::string> parse_parents(size_t from, size_t to) const {
        std::vector<std::string> parents;
        bool collecting = false;
        std::string current;
        auto flush = [&] {
            if (!current.empty()) parents.push_back(current);
            current.clear();
        };
        for (size_t i = from; i < to; ++i) {
            const auto& t = toks_[i];
            if (t.kind == TokenKind::keyword &&
                (t.text == "is" || t.text == "extends" || t.text == "implements")) {
                flush();
                collecting = true;
                continue;
            }
            if (lang_ == Language::cpp && t.kind == TokenKind::punct && t.text == ":") {
                collecting = true;
                continue;
            }
            if (!collecting) continue;
            if (t.kind == TokenKind::punct) {
                if (t.text == ",") flush();
                else if (t.text == "<") i = skip_angles(i, to) - 1;
                else if (t.text == "(") i = match_[i];
                else if (t.text == "." || t.text == "::") current += t.text;
                continue;
            }
            if (t.kind == TokenKind::identifier) {
                if (!current.empty() && current.back() != '.' && current.back() != ':') flush();
                current += t.text;
            }
        }
        flush();
        return parents;
    }

    void scan_scope(size_t begin, size_t end, const std::string& prefix) {
        size_t stmt = begin;
        bool saw_assign = false;
        size_t i = begin;
        auto reset = [&](size_t at) {
            stmt = at;
            saw_assign = false;
        };
        while (i < end) {
            if (is_punct(i, ";")) {
                maybe_variable(stmt, i, prefix);
                reset(++i);
                continue;
            }
            // access specifier labels (`public:`) end a statement
            if (lang_ == Language::cpp && is_punct(i, ":") && i == stmt + 1 &&
                (is_kw(stmt, "public") || is_kw(stmt, "private") || is_kw(stmt, "protected"))) {
                reset(++i);
                continue;
            }
            if (lang_ == Language::cpp && is_kw(i, "template") && is_punct(i + 1, "<")) {
                i = skip_angles(i + 1, end);
                continue;
            }
            if (lang_ == Language::cpp && is_kw(i, "extern") && i + 2 < end &&
                toks_[i + 1].kind == TokenKind::string && is_punct(i + 2, "{")) {
                scan_scope(i + 3, match_[i + 2], prefix);
                i = match_[i + 2] + 1;
                reset(i);
                continue;
            }
            if (!saw_assign && is_container_keyword(i)) {
                if (auto next = try_container(i, end, prefix)) {
                    i = *next;
                    reset(i);
                    continue;
                }
            }
            if (is_punct(i, "=")) saw_assign = true;
            if (is_punct(i, "(")) {
                if (!saw_assign) {
                    if (auto next = try_function(stmt, i, end, prefix)) {
                        i = *next;
                        reset(i);
                        continue;
                    }
                }
                i = match_[i] + 1;
                continue;
            }
            if (is_punct(i, "[")) {
                i = match_[i] + 1;
                continue;
            }
            if (is_punct(i, "{")) {
                // Solidity `modifier name { ... }` has no parameter list.
                if (lang_ == Language::solidity && i >= 2 && is_kw(i - 2, "modifier") &&
                    is_ident(i - 1)) {
                    add_function(stmt, i, qualify(prefix, toks_[i - 1].text));
                    i = match_[i] + 1;
                    reset(i);
                    continue;
                }
                const bool initializer = saw_assign;
                i = match_[i] + 1;
                if (!initializer) reset(i);
                continue;
            }
            ++i;
        }
    }

    std::optional<size_t> try_container(size_t kw, size_t end, const std::string& prefix) {
        const bool is_namespace = is_kw(kw, "namespace");
        size_t j = kw + 1;
        std::string name;
        // `namespace a::b`, C++ attributes, `final`
        while (j < end && !is_punct(j, "{") && !is_punct(j, ";") && !is_punct(j, ":") &&
               !is_kw(j, "is") && !is_kw(j, "extends") && !is_kw(j, "implements") &&
               !is_punct(j, "(") && !is_punct(j, "<") && !is_punct(j, "=")) {
            if (is_ident(j) && (name.empty() || is_punct(j - 1, "::"))) {
                if (!name.empty()) name += "::";
                name += toks_[j].text;
            } else if (is_punct(j, "[")) {
                j = match_[j];
            } else if (!is_punct(j, "::") && !is_kw(j, "final") && !is_ident(j)) {
                return std::nullopt;
            }
            ++j;
        }
        size_t header_end = j;
        for (; header_end < end; ++header_end) {
            if (is_punct(header_end, "{") || is_punct(header_end, ";") ||
                is_punct(header_end, "=")) {
                break;
            }
            if (is_punct(header_end, "(") || is_punct(header_end, "[")) {
                header_end = match_[header_end];
            } else if (is_punct(header_end, "<")) {
                header_end = skip_angles(header_end, end) - 1;
            }
        }
        if (header_end >= end || !is_punct(header_end, "{")) return std::nullopt;
        if (name.empty() && !is_namespace) return std::nullopt;

        const std::string qname = name.empty() ? prefix : qualify(prefix, name);
        if (!is_namespace) {
            ContainerRecord rec;
            rec.qualified_name = qname;
            rec.parents = parse_parents(j, header_end);
            rec.file = file_;
            rec.line = toks_[kw].line;
            out_.containers.push_back(std::move(rec));
        }
        scan_scope(header_end + 1, match_[header_end], qname);
        return match_[header_end] + 1;
    }

    // Resolves the declared name ending right before `open` ('(' of the parameter list).
    // Returns the name and, for C++, any `A::B::` qualifier written at the definition.
    std::optional<std::string> declared_name(size_t stmt, size_t open) const {
        if (open == 0 || open <= stmt) return std::nullopt;
        const size_t n = open - 1;
        const auto& t = toks_[n];
        if (lang_ == Language::solidity) {
            if (t.kind == TokenKind::keyword &&
                (t.text == "constructor" || t.text == "fallback" || t.text == "receive"))
                return t.text;
            if (t.kind == TokenKind::keyword && t.text == "function") return "fallback";
            if (t.kind == TokenKind::identifier && n > 0 &&
                (is_kw(n - 1, "function") || is_kw(n - 1, "modifier")))
                return t.text;
            return std::nullopt;
        }
        if (lang_ == Language::java) {
            if (t.kind != TokenKind::identifier) return std::nullopt;
            if (n > 0 && (is_punct(n - 1, "@") || is_punct(n - 1, "."))) return std::nullopt;
            return t.text;
        }
        // C++: operators, destructors and qualified names
        for (size_t back = 0; back < 4 && back <= n && n - back >= stmt; ++back) {
            if (is_kw(n - back, "operator")) {
                std::string name;
                for (size_t k = n - back; k <= n; ++k) name += toks_[k].text;
                return with_cpp_qualifier(n - back, name);
            }
        }
        if (t.kind != TokenKind::identifier) return std::nullopt;
        std::string name = t.text;
        size_t first = n;
        if (n > stmt && is_punct(n - 1, "~")) {
            name = "~" + name;
            first = n - 1;
        }
        return with_cpp_qualifier(first, name);
    }

    std::string with_cpp_qualifier(size_t first, std::string name) const {
        size_t k = first;
        while (k >= 2 && is_punct(k - 1, "::") && is_ident(k - 2)) {
            name = toks_[k - 2].text + "::" + name;
            k -= 2;
        }
        return name;
    }

    // Walks the tokens after the parameter list. Returns the index of the body '{' or
    // nullopt when this is a prototype, an expression, or not a function at all.
    std::optional<size_t> find_body(size_t close, size_t end) const {
        size_t k = close + 1;
        while (k < end) {
            const auto& t = toks_[k];
            if (t.kind == TokenKind::punct) {
                const auto& p = t.text;
                if (p == "{") return k;
                if (p == ";" || p == "=") return std::nullopt;
                if (p == "(") {
                    const bool allowed =
                        lang_ == Language::solidity ||
                        (lang_ == Language::cpp && k > 0 &&
                         (is_kw(k - 1, "noexcept") || is_kw(k - 1, "throw") ||
                          is_kw(k - 1, "decltype") ||
                          (is_ident(k - 1) && toks_[k - 1].text == "__attribute__")));
                    if (!allowed) return std::nullopt;
                    k = match_[k] + 1;
                    continue;
                }
                if (p == "[") {
                    k = match_[k] + 1;
                    continue;
                }
                if (p == ":" && lang_ == Language::cpp) return find_init_list_body(k + 1, end);
                if (p == "," || p == "." || p == "::" || p == "<" || p == ">" || p == ">>" ||
                    p == "*" || p == "&" || p == "&&" || p == "->") {
                    ++k;
                    continue;
                }
                return std::nullopt;
            }
            if (t.kind == TokenKind::identifier || t.kind == TokenKind::keyword) {
                ++k;
                continue;
            }
            return std::nullopt;
        }
        return std::nullopt;
    }

    // C++ constructor initializer list: `a(x), b{y}, Base<T>(z) {`
    std::optional<size_t> find_init_list_body(size_t k, size_t end) const {
        while (k < end) {
            while (k < end && (is_ident(k) || is_punct(k, "::") || toks_[k].kind == TokenKind::keyword))
                ++k;
            if (is_punct(k, "<")) k = skip_angles(k, end);
            if (!(is_punct(k, "(") || is_punct(k, "{"))) return std::nullopt;
            k = match_[k] + 1;
            if (is_punct(k, "...")) ++k;
            if (is_punct(k, ",")) {
                ++k;
                continue;
            }
            if (is_punct(k, "{")) return k;
            return std::nullopt;
        }
        return std::nullopt;
    }

    std::optional<size_t> try_function(size_t stmt, size_t open, size_t end,
                                       const std::string& prefix) {
        const auto name = declared_name(stmt, open);
        if (!name) return std::nullopt;
        size_t params_open = open;
        // `operator()(...)`: the first () is part of the name
        if (lang_ == Language::cpp && *name == "operator" && is_punct(open + 1, ")") &&
            is_punct(open + 2, "(")) {
            params_open = open + 2;
        }
        const auto body = find_body(match_[params_open], end);
        if (!body) return std::nullopt;
        const auto full_name = *name == "operator" && params_open != open ? "operator()" : *name;
        add_function(stmt, *body, qualify(prefix, full_name));
        return match_[*body] + 1;
    }

    void add_function(size_t stmt, size_t body_open, const std::string& qname) {
        const size_t body_close = match_[body_open];
        FunctionRecord rec;
        rec.qualified_name = qname;
        rec.language = lang_;
        rec.source_text = text_between(stmt, body_close);
        rec.file = file_;
        rec.start_line = toks_[stmt].line;
        rec.end_line = toks_[body_close].line;
        const size_t index = out_.functions.size();
        out_.functions.push_back(std::move(rec));
        auto calls = scan_body(body_open, body_close, qname);
        out_.functions[index].called_names = std::move(calls);
    }

    std::vector<std::string> scan_body(size_t open, size_t close, const std::string& qname) {
        std::vector<std::string> calls;
        int lambda_count = 0;
        for (size_t j = open + 1; j < close; ++j) {
            const auto& t = toks_[j];
            if (t.kind == TokenKind::identifier) {
                const bool after_new = j > 0 && (is_kw(j - 1, "new") || is_kw(j - 1, "function"));
                if (!after_new && is_punct(j + 1, "(")) {
                    calls.push_back(t.text);
                } else if (!after_new && lang_ == Language::solidity && is_punct(j + 1, "{") &&
                           is_punct(match_[j + 1] + 1, "(")) {
                    calls.push_back(t.text);  // call options: f{value: v}(...)
                } else if (!after_new && lang_ == Language::cpp && is_punct(j + 1, "<")) {
                    const size_t after = skip_angles(j + 1, close);
                    if (after < close && is_punct(after, "(") && after - j < 16)
                        calls.push_back(t.text);
                }
                continue;
            }
            if (lang_ == Language::java && is_kw(j, "new")) {
                size_t k = j + 1;
                while (k < close && (is_ident(k) || is_punct(k, "."))) ++k;
                if (is_punct(k, "<")) k = skip_angles(k, close);
                if (is_punct(k, "(") && is_punct(match_[k] + 1, "{")) {
                    const size_t body = match_[k] + 1;
                    absorb_nested(calls, [&] { scan_scope(body + 1, match_[body], qname + "$"); });
                    j = match_[body];
                }
                continue;
            }
            if (lang_ == Language::java && is_container_keyword(j) && is_ident(j + 1)) {
                size_t k = j + 2;
                while (k < close && !is_punct(k, "{") && !is_punct(k, ";")) ++k;
                if (is_punct(k, "{")) {
                    const std::string local = qname + "$" + toks_[j + 1].text;
                    absorb_nested(calls, [&] { scan_scope(k + 1, match_[k], local); });
                    j = match_[k];
                }
                continue;
            }
            if (lang_ == Language::java && is_punct(j, "->") && is_punct(j + 1, "{")) {
                size_t start = j;
                if (j > open + 1 && is_punct(j - 1, ")")) start = match_[j - 1];
                else if (j > open + 1 && is_ident(j - 1)) start = j - 1;
                const auto name = qname + "$lambda" + std::to_string(++lambda_count);
                absorb_nested(calls, [&] { add_function(start, j + 1, name); });
                j = match_[j + 1];
                continue;
            }
            if (lang_ == Language::cpp && is_punct(j, "[") && !is_ident(j - 1) &&
                !is_punct(j - 1, "]") && !is_punct(j - 1, ")") && !is_punct(j - 1, "[")) {
                size_t k = match_[j] + 1;
                if (is_punct(k, "(")) k = match_[k] + 1;
                while (k < close && (toks_[k].kind == TokenKind::keyword || is_ident(k) ||
                                     is_punct(k, "->") || is_punct(k, "::") ||
                                     is_punct(k, "*") || is_punct(k, "&")))
                    ++k;
                if (is_punct(k, "{")) {
                    const auto name = qname + "$lambda" + std::to_string(++lambda_count);
                    absorb_nested(calls, [&] { add_function(j, k, name); });
                    j = match_[k];
                }
                continue;
            }
        }
        return calls;
    }

    // Runs `extract`, then credits the calls of every function it produced to the
    // enclosing body as well.
    template <typename Fn>
    void absorb_nested(std::vector<std::string>& calls, Fn&& extract) {
        const size_t before = out_.functions.size();
        extract();
        for (size_t k = before; k < out_.functions.size(); ++k) {
            const auto& nested = out_.functions[k].called_names;
            calls.insert(calls.end(), nested.begin(), nested.end());
        }
    }

    void maybe_variable(size_t stmt, size_t semi, const std::string& prefix) {
        if (semi <= stmt + 1) return;
        static const std::vector<std::string_view> skip_first = {
            "pragma", "import", "using", "event", "error", "emit", "return", "typedef",
            "package", "friend", "static_assert", "namespace", "throw"};
        for (auto kw : skip_first)
            if (toks_[stmt].text == kw) return;
        size_t limit = semi;
        for (size_t k = stmt; k < semi; ++k) {
            if (is_open(k)) {
                k = match_[k];
                continue;
            }
            if (is_punct(k, "=")) {
                limit = k;
                break;
            }
        }
        std::optional<size_t> name;
        for (size_t k = stmt; k < limit; ++k) {
            if (is_open(k)) {
                k = match_[k];
                continue;
            }
            if (is_ident(k)) name = k;
        }
        if (!name || *name == stmt) return;
        if (is_punct(*name + 1, "(")) return;
        VariableRecord rec;
        rec.qualified_name = qualify(prefix, toks_[*name].text);
        rec.source_text = text_between(stmt, semi);
        rec.file = file_;
        rec.line = toks_[stmt].line;
        out_.variables.push_back(std::move(rec));
    }

    std::string_view src_;
    Language lang_;
    std::filesystem::path file_;
    std::vector<Token> toks_;
    std::vector<size_t> match_;
    SourceIndex out_;
};

size_t last_separator_end(std::string_view name) {
    size_t best = 0;
    for (std::string_view sep : {".", "::", "$"}) {
        const auto pos = name.rfind(sep);
        if (pos != std::string_view::npos) best = std::max(best, pos + sep.size());
    }
    return best;
}

}  // namespace

std::string FunctionRecord::simple_name() const {
    std::string_view name = qualified_name;
    const auto hash = name.find('#');
    if (hash != std::string_view::npos) name = name.substr(0, hash);
    return std::string(name.substr(last_separator_end(name)));
}

std::string FunctionRecord::container() const {
    std::string_view name = qualified_name;
    const auto hash = name.find('#');
    if (hash != std::string_view::npos) name = name.substr(0, hash);
    const auto cut = last_separator_end(name);
    if (cut == 0) return "";
    size_t sep_len = 1;
    if (cut >= 2 && name.substr(cut - 2, 2) == "::") sep_len = 2;
    return std::string(name.substr(0, cut - sep_len));
}

const FunctionRecord* SourceIndex::find_function(std::string_view name) const {
    for (const auto& f : functions)
        if (f.qualified_name == name) return &f;
    for (const auto& f : functions)
        if (f.simple_name() == name) return &f;
    return nullptr;
}

void SourceIndex::merge(SourceIndex other) {
    auto move_all = [](auto& dst, auto& src) {
        dst.insert(dst.end(), std::make_move_iterator(src.begin()),
                   std::make_move_iterator(src.end()));
    };
    move_all(functions, other.functions);
    move_all(containers, other.containers);
    move_all(variables, other.variables);
    move_all(errors, other.errors);
}

void SourceIndex::canonicalize() {
    auto by_location = [](const auto& a, const auto& b) {
        return std::tie(a.qualified_name, a.file, a.start_line) <
               std::tie(b.qualified_name, b.file, b.start_line);
    };
    std::stable_sort(functions.begin(), functions.end(), by_location);
    // Overloads and duplicate definitions get `#2`, `#3`, ... so names stay unique.
    std::map<std::string, int> seen;
    for (auto& f : functions) {
        const int n = ++seen[f.qualified_name];
        if (n > 1) f.qualified_name += "#" + std::to_string(n);
    }
    std::stable_sort(functions.begin(), functions.end(),
                     [](const auto& a, const auto& b) { return a.qualified_name < b.qualified_name; });
    std::stable_sort(containers.begin(), containers.end(), [](const auto& a, const auto& b) {
        return std::tie(a.qualified_name, a.file, a.line) <
               std::tie(b.qualified_name, b.file, b.line);
    });
    std::stable_sort(variables.begin(), variables.end(), [](const auto& a, const auto& b) {
        return std::tie(a.qualified_name, a.file, a.line) <
               std::tie(b.qualified_name, b.file, b.line);
    });
    std::stable_sort(errors.begin(), errors.end(), [](const auto& a, const auto& b) {
        return std::tie(a.file, a.line) < std::tie(b.file, b.line);
    });
}

SourceIndex parse_source(std::string_view source, Language lang,
                         const std::filesystem::path& file) {
    auto index = Extractor(source, lang, file).run();
    index.canonicalize();
    return index;
}

SourceIndex parse_functions(const std::vector<std::filesystem::path>& files, Language lang) {
    SourceIndex all;
    for (const auto& path : files) {
        std::string text;
        try {
            text = read_text_file(path);
        } catch (const HarnessError& e) {
            all.errors.push_back({path, 0, e.what()});
            continue;
        }
        all.merge(Extractor(text, lang, path).run());
    }
    all.canonicalize();
    return all;
}

std::vector<std::filesystem::path> collect_sources(const std::filesystem::path& root,
                                                   Language lang) {
    std::vector<std::string> exts;
    switch (lang) {
        case Language::solidity: exts = {".sol"}; break;
        case Language::java: exts = {".java"}; break;
        case Language::cpp: exts = {".c", ".cc", ".cpp", ".cxx", ".h", ".hh", ".hpp", ".hxx"}; break;
    }
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_regular_file(root)) return {root};
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const auto ext = entry.path().extension().string();
        if (std::find(exts.begin(), exts.end(), ext) != exts.end()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace vulnharness
