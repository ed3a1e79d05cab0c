#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vulnharness/common.hpp"

namespace vulnharness {

enum class TokenKind { identifier, keyword, number, string, punct, comment, directive };

struct Token {
    TokenKind kind;
    std::string text;
    int line = 1;        // 1-based line of the first character
    size_t offset = 0;   // byte offset into the source
    size_t length = 0;   // byte length in the source
};

struct LexError {
    int line = 0;
    std::string message;
};

struct LexResult {
    std::vector<Token> tokens;
    std::optional<LexError> error;
};

/// C-family tokenizer shared by Solidity, Java and C/C++. Comments and preprocessor
/// lines are kept as tokens so that rewriters can round-trip the source.
LexResult tokenize(std::string_view source, Language lang);

bool is_keyword(std::string_view word, Language lang);

/// Identifiers that name language builtins or well-known globals (`msg`, `require`,
/// `System`, `printf`, ...). They are never treated as user declarations.
bool is_builtin_name(std::string_view word, Language lang);

bool is_identifier_text(std::string_view text);

/// Checks (), [] and {} nesting over non-comment tokens. Returns the first mismatch.
std::optional<LexError> check_brackets(const std::vector<Token>& tokens);

}  // namespace vulnharness
