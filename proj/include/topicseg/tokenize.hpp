#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace topicseg {

enum class Tokenizer {
    // Lowercase, split on whitespace, strip punctuation from token edges.
    // Lowercasing covers ASCII; non-ASCII bytes pass through untouched.
    whitespace_lower,
    // One token per UTF-8 code point, whitespace skipped. Meant for text
    // without word delimiters (CJK).
    char_level,
};

std::vector<std::string> tokenize(std::string_view text, Tokenizer mode);

Tokenizer tokenizer_from_name(const std::string& name);
std::string tokenizer_name(Tokenizer mode);

}  // namespace topicseg
