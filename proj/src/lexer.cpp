#include "vulnharness/lexer.hpp"

#include <array>
#include <cctype>
#include <unordered_set>

namespace vulnharness {
namespace {

const std::unordered_set<std::string_view>& solidity_keywords() {
    static const std::unordered_set<std::string_view> k = {
        "pragma", "import", "contract", "library", "interface", "abstract", "is", "function",
        "modifier", "constructor", "fallback", "receive", "event", "emit", "struct", "enum",
        "mapping", "returns", "return", "if", "else", "for", "while", "do", "break", "continue",
        "public", "private", "internal", "external", "view", "pure", "payable", "constant",
        "immutable", "override", "virtual", "memory", "storage", "calldata", "new", "delete",
        "using", "true", "false", "unchecked", "try", "catch", "this", "super", "address",
        "bool", "string", "bytes", "byte", "uint", "int", "fixed", "ufixed", "var", "error",
        "indexed", "anonymous", "assembly", "let", "type", "as", "from", "wei", "gwei", "ether",
        "seconds", "minutes", "hours", "days", "weeks", "revert"};
    return k;
}

const std::unordered_set<std::string_view>& java_keywords() {
    static const std::unordered_set<std::string_view> k = {
        "abstract", "assert", "boolean", "break", "byte", "case", "catch", "char", "class",
        "const", "continue", "default", "do", "double", "else", "enum", "extends", "final",
        "finally", "float", "for", "goto", "if", "implements", "import", "instanceof", "int",
        "interface", "long", "native", "new", "package", "private", "protected", "public",
        "return", "short", "static", "strictfp", "super", "switch", "synchronized", "this",
        "throw", "throws", "transient", "try", "void", "volatile", "while", "true", "false",
        "null", "var", "record", "yield"};
    return k;
}

const std::unordered_set<std::string_view>& cpp_keywords() {
    static const std::unordered_set<std::string_view> k = {
        "alignas", "alignof", "auto", "bool", "break", "case", "catch", "char", "char16_t",
        "char32_t", "char8_t", "class", "const", "constexpr", "consteval", "constinit",
        "const_cast", "continue", "decltype", "default", "delete", "do", "double",
        "dynamic_cast", "else", "enum", "explicit", "export", "extern", "false", "float", "for",
        "friend", "goto", "if", "inline", "int", "long", "mutable", "namespace", "new",
        "noexcept", "nullptr", "operator", "private", "protected", "public", "register",
        "reinterpret_cast", "return", "short", "signed", "sizeof", "static", "static_assert",
        "static_cast", "struct", "switch", "template", "this", "thread_local", "throw", "true",
        "try", "typedef", "typeid", "typename", "union", "unsigned", "using", "virtual", "void",
        "volatile", "wchar_t", "while", "override", "final", "NULL", "restrict"};
    return k;
}

bool is_sized_solidity_type(std::string_view w) {
    auto digits_after = [&](std::string_view prefix) {
        if (w.size() <= prefix.size() || w.substr(0, prefix.size()) != prefix) return false;
        for (char c : w.substr(prefix.size()))
            if (!std::isdigit(static_cast<unsigned char>(c))) return false;
        return true;
    };
    return digits_after("uint") || digits_after("int") || digits_after("bytes");
}

bool ident_start(char c) {
    return std::isalpha(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}
bool ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '$';
}

constexpr std::array<std::string_view, 30> kPuncts = {
    ">>>=", "<<=", ">>=", ">>>", "...", "->*", "::", "->", "=>", "==", "!=", "<=", ">=", "&&",
    "||", "++", "--", "+=", "-=", "*=", "/=", "%=", "&=", "|=", "^=", "<<", ">>", "**", ".*",
    ":="};

}  // namespace

bool is_keyword(std::string_view word, Language lang) {
    switch (lang) {
        case Language::solidity:
            return solidity_keywords().count(word) > 0 || is_sized_solidity_type(word);
        case Language::java: return java_keywords().count(word) > 0;
        case Language::cpp: return cpp_keywords().count(word) > 0;
    }
    return false;
}

bool is_builtin_name(std::string_view word, Language lang) {
    static const std::unordered_set<std::string_view> sol = {
        "msg", "block", "tx", "abi", "require", "assert", "keccak256", "sha256", "ripemd160",
        "ecrecover", "addmod", "mulmod", "selfdestruct", "gasleft", "blockhash", "now",
        "sender", "value", "data", "timestamp", "number", "origin", "gasprice", "encode",
        "encodePacked", "encodeWithSelector", "encodeWithSignature", "decode", "length", "push",
        "pop", "balance", "transfer", "send", "call", "delegatecall", "staticcall", "code",
        "codehash", "max", "min", "selector", "SafeMath", "IERC20", "ERC20", "Ownable"};
    static const std::unordered_set<std::string_view> java = {
        "System", "String", "Object", "Integer", "Long", "Double", "Float", "Boolean",
        "Character", "Byte", "Short", "Math", "List", "ArrayList", "Map", "HashMap", "Set",
        "HashSet", "Exception", "RuntimeException", "IOException", "Override", "out", "err",
        "println", "print", "printf", "length", "size", "get", "put", "add", "equals",
        "hashCode", "toString", "valueOf", "parseInt", "main", "args", "Thread", "Runnable",
        "StringBuilder", "append", "Arrays", "Collections", "Optional", "File", "Files",
        "Paths", "Path", "InputStream", "OutputStream", "Scanner", "in"};
    static const std::unordered_set<std::string_view> cpp = {
        "std", "printf", "fprintf", "sprintf", "snprintf", "scanf", "malloc", "calloc",
        "realloc", "free", "memcpy", "memmove", "memset", "memcmp", "strcpy", "strncpy",
        "strcat", "strncat", "strlen", "strcmp", "strncmp", "strdup", "gets", "fgets", "puts",
        "fopen", "fclose", "fread", "fwrite", "exit", "abort", "size_t", "uint8_t", "uint16_t",
        "uint32_t", "uint64_t", "int8_t", "int16_t", "int32_t", "int64_t", "FILE", "stdin",
        "stdout", "stderr", "main", "argc", "argv", "string", "vector", "cout", "cin", "endl",
        "size", "data", "push_back", "begin", "end", "errno", "assert"};
    switch (lang) {
        case Language::solidity: return sol.count(word) > 0;
        case Language::java: return java.count(word) > 0;
        case Language::cpp: return cpp.count(word) > 0;
    }
    return false;
}

bool is_identifier_text(std::string_view text) {
    if (text.empty() || !ident_start(text.front())) return false;
    for (char c : text)
        if (!ident_char(c)) return false;
    return true;
}

LexResult tokenize(std::string_view src, Language lang) {
    LexResult result;
    size_t i = 0;
    int line = 1;
    bool at_line_start = true;
    const size_t n = src.size();

    auto push = [&](TokenKind kind, size_t start, int start_line) {
        result.tokens.push_back(
            Token{kind, std::string(src.substr(start, i - start)), start_line, start, i - start});
    };
    auto fail = [&](int at_line, std::string message) {
        result.error = LexError{at_line, std::move(message)};
        return result;
    };

    while (i < n) {
        const char c = src[i];
        if (c == '\n') {
            ++line;
            ++i;
            at_line_start = true;
            continue;
        }
        if (std::isspace(static_cast<unsigned char>(c))) {
            ++i;
            continue;
        }
        const size_t start = i;
        const int start_line = line;

        if (lang == Language::cpp && c == '#' && at_line_start) {
            while (i < n && src[i] != '\n') {
                if (src[i] == '\\' && i + 1 < n && src[i + 1] == '\n') {
                    i += 2;
                    ++line;
                    continue;
                }
                ++i;
            }
            push(TokenKind::directive, start, start_line);
            continue;
        }
        at_line_start = false;

        if (c == '/' && i + 1 < n && src[i + 1] == '/') {
            while (i < n && src[i] != '\n') ++i;
            push(TokenKind::comment, start, start_line);
            continue;
        }
        if (c == '/' && i + 1 < n && src[i + 1] == '*') {
            i += 2;
            bool closed = false;
            while (i < n) {
                if (src[i] == '*' && i + 1 < n && src[i + 1] == '/') {
                    i += 2;
                    closed = true;
                    break;
                }
                if (src[i] == '\n') ++line;
                ++i;
            }
            if (!closed) return fail(start_line, "unterminated block comment");
            push(TokenKind::comment, start, start_line);
            continue;
        }
        // C++ raw string literal R"delim( ... )delim"
        if (lang == Language::cpp && c == 'R' && i + 1 < n && src[i + 1] == '"') {
            const auto open = src.find('(', i + 2);
            if (open == std::string_view::npos) return fail(start_line, "malformed raw string");
            const std::string closing =
                ")" + std::string(src.substr(i + 2, open - i - 2)) + "\"";
            const auto close = src.find(closing, open + 1);
            if (close == std::string_view::npos)
                return fail(start_line, "unterminated raw string literal");
            for (size_t j = i; j < close; ++j)
                if (src[j] == '\n') ++line;
            i = close + closing.size();
            push(TokenKind::string, start, start_line);
            continue;
        }
        if (ident_start(c)) {
            while (i < n && ident_char(src[i])) ++i;
            const auto word = src.substr(start, i - start);
            push(is_keyword(word, lang) ? TokenKind::keyword : TokenKind::identifier, start,
                 start_line);
            continue;
        }
        if (std::isdigit(static_cast<unsigned char>(c)) ||
            (c == '.' && i + 1 < n && std::isdigit(static_cast<unsigned char>(src[i + 1])))) {
            while (i < n && (ident_char(src[i]) || src[i] == '.' || src[i] == '\'' ||
                             ((src[i] == '+' || src[i] == '-') &&
                              (src[i - 1] == 'e' || src[i - 1] == 'E') &&
                              !(src[start] == '0' && start + 1 < n &&
                                (src[start + 1] == 'x' || src[start + 1] == 'X')))))
                ++i;
            push(TokenKind::number, start, start_line);
            continue;
        }
        if (c == '"' || c == '\'') {
            // Solidity uses single quotes for strings; elsewhere they delimit characters.
            // Both lex identically.
            ++i;
            bool closed = false;
            while (i < n) {
                if (src[i] == '\\' && i + 1 < n) {
                    if (src[i + 1] == '\n') ++line;
                    i += 2;
                    continue;
                }
                if (src[i] == '\n') break;
                if (src[i] == c) {
                    ++i;
                    closed = true;
                    break;
                }
                ++i;
            }
            if (!closed) return fail(start_line, "unterminated string literal");
            push(TokenKind::string, start, start_line);
            continue;
        }
        bool matched = false;
        for (auto p : kPuncts) {
            if (src.substr(i, p.size()) == p) {
                i += p.size();
                matched = true;
                break;
            }
        }
        if (!matched) ++i;
        push(TokenKind::punct, start, start_line);
    }
    return result;
}

std::optional<LexError> check_brackets(const std::vector<Token>& tokens) {
    std::vector<const Token*> stack;
    for (const auto& t : tokens) {
        if (t.kind != TokenKind::punct) continue;
        if (t.text == "(" || t.text == "[" || t.text == "{") {
            stack.push_back(&t);
        } else if (t.text == ")" || t.text == "]" || t.text == "}") {
            const char want = t.text == ")" ? '(' : t.text == "]" ? '[' : '{';
            if (stack.empty()) return LexError{t.line, "unmatched '" + t.text + "'"};
            if (stack.back()->text[0] != want)
                return LexError{t.line, "mismatched '" + t.text + "' (opened '" +
                                            stack.back()->text + "' on line " +
                                            std::to_string(stack.back()->line) + ")"};
            stack.pop_back();
        }
    }
    if (!stack.empty())
        return LexError{stack.back()->line, "unclosed '" + stack.back()->text + "'"};
    return std::nullopt;
}

}  // namespace vulnharness
