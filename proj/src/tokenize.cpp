#include "topicseg/tokenize.hpp"

#include <cctype>
#include <stdexcept>

namespace topicseg {

namespace {

bool is_space_byte(unsigned char c) { return std::isspace(c) != 0; }

bool is_punct_byte(unsigned char c) { return c < 0x80 && std::ispunct(c) != 0; }

std::string strip_punct(std::string_view token) {
    size_t begin = 0;
    size_t end = token.size();
    while (begin < end && is_punct_byte(static_cast<unsigned char>(token[begin]))) ++begin;
    while (end > begin && is_punct_byte(static_cast<unsigned char>(token[end - 1]))) --end;
    return std::string(token.substr(begin, end - begin));
}

size_t utf8_len(unsigned char lead) {
    if (lead < 0x80) return 1;
    if ((lead >> 5) == 0x6) return 2;
    if ((lead >> 4) == 0xe) return 3;
    if ((lead >> 3) == 0x1e) return 4;
    return 1;  // invalid lead byte, consume one
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text, Tokenizer mode) {
    std::vector<std::string> tokens;
    if (mode == Tokenizer::whitespace_lower) {
        size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
            size_t start = i;
            while (i < text.size() && !is_space_byte(static_cast<unsigned char>(text[i]))) ++i;
            if (i > start) {
                std::string word = strip_punct(text.substr(start, i - start));
                if (word.empty()) continue;
                for (char& c : word) {
                    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
                }
                tokens.push_back(std::move(word));
            }
        }
    } else {
        size_t i = 0;
        while (i < text.size()) {
            unsigned char lead = static_cast<unsigned char>(text[i]);
            if (lead < 0x80 && is_space_byte(lead)) {
                ++i;
                continue;
            }
            size_t len = std::min(utf8_len(lead), text.size() - i);
            std::string ch(text.substr(i, len));
            if (len == 1) {
                ch[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(ch[0])));
            }
            tokens.push_back(std::move(ch));
            i += len;
        }
    }
    return tokens;
}

Tokenizer tokenizer_from_name(const std::string& name) {
    if (name == "whitespace_lower") return Tokenizer::whitespace_lower;
    if (name == "char_level") return Tokenizer::char_level;
    throw std::invalid_argument("unknown tokenizer: " + name);
}

std::string tokenizer_name(Tokenizer mode) {
    return mode == Tokenizer::whitespace_lower ? "whitespace_lower" : "char_level";
}

}  // namespace topicseg
