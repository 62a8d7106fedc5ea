#include "forge/tokens.hpp"

#include <algorithm>

#include "forge/text.hpp"

namespace forge {

TokenSet::TokenSet(std::vector<std::string> tokens) : tokens_(std::move(tokens)) {
    std::sort(tokens_.begin(), tokens_.end());
    tokens_.erase(std::unique(tokens_.begin(), tokens_.end()), tokens_.end());
}

bool TokenSet::contains(std::string_view token) const {
    return std::binary_search(tokens_.begin(), tokens_.end(), token,
                              [](std::string_view a, std::string_view b) { return a < b; });
}

namespace {

bool is_separator(char32_t c) {
    if (c < 0x80) {
        return c <= 0x20 || c == 0x7F || (c >= 0x21 && c <= 0x2F) || (c >= 0x3A && c <= 0x40) ||
               (c >= 0x5B && c <= 0x60) || (c >= 0x7B && c <= 0x7E);
    }
    switch (c) {
        case 0x85: case 0xA0: case 0xA1: case 0xA7: case 0xAB: case 0xB6: case 0xB7: case 0xBB: case 0xBF:
        case 0xD7: case 0xF7:
            return true;
        default: break;
    }
    if (c >= 0x2000 && c <= 0x206F) return true;  // general punctuation and spaces
    if (c >= 0x3000 && c <= 0x303F) return true;  // CJK symbols and punctuation
    if (c >= 0xFF01 && c <= 0xFF0F) return true;  // fullwidth ASCII punctuation
    if (c == 0xFEFF) return true;
    return false;
}

char32_t fold(char32_t c) {
    if (c >= U'A' && c <= U'Z') return c + 0x20;
    if (c >= 0xC0 && c <= 0xDE && c != 0xD7) return c + 0x20;
    if (c >= 0x391 && c <= 0x3A9 && c != 0x3A2) return c + 0x20;
    if (c >= 0x410 && c <= 0x42F) return c + 0x20;
    if (c >= 0x400 && c <= 0x40F) return c + 0x50;
    return c;
}

}  // namespace

TokenSet tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::u32string current;
    for (char32_t c : decode_utf8(text)) {
        if (is_separator(c)) {
            if (!current.empty()) {
                tokens.push_back(encode_utf8(current));
                current.clear();
            }
        } else {
            current.push_back(fold(c));
        }
    }
    if (!current.empty()) tokens.push_back(encode_utf8(current));
    return TokenSet(std::move(tokens));
}

std::size_t intersection_size(const TokenSet& a, const TokenSet& b) {
    const auto& x = a.tokens();
    const auto& y = b.tokens();
    std::size_t i = 0, j = 0, n = 0;
    while (i < x.size() && j < y.size()) {
        if (x[i] < y[j]) {
            ++i;
        } else if (y[j] < x[i]) {
            ++j;
        } else {
            ++n;
            ++i;
            ++j;
        }
    }
    return n;
}

double overlap_score(const TokenSet& doc, const TokenSet& field) {
    if (field.empty()) throw UndefinedScoreError("overlap score undefined: field has no tokens");
    return static_cast<double>(intersection_size(doc, field)) / static_cast<double>(field.size());
}

double overlap_score(std::string_view doc_text, std::string_view field_text) {
    return overlap_score(tokenize(doc_text), tokenize(field_text));
}

TaskScore task_score(const TokenSet& doc, const Task& task, const Tokenizer& tokenizer) {
    TaskScore s;
    TokenSet in = tokenizer(task.input);
    TokenSet out = tokenizer(task.output);
    if (!in.empty()) s.input = overlap_score(doc, in);
    if (!out.empty()) s.output = overlap_score(doc, out);
    if (!s.output) {
        s.score = 0.0;
    } else if (!s.input) {
        s.score = *s.output;
    } else {
        s.score = std::min(*s.input, *s.output);
    }
    return s;
}

TaskScore task_score(std::string_view doc_text, const Task& task, const Tokenizer& tokenizer) {
    return task_score(tokenizer(doc_text), task, tokenizer);
}

}  // namespace forge
