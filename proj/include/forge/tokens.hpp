#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/task.hpp"

namespace forge {

/// Distinct normalized tokens, kept sorted so intersections are a merge.
class TokenSet {
public:
    TokenSet() = default;
    explicit TokenSet(std::vector<std::string> tokens);

    std::size_t size() const { return tokens_.size(); }
    bool empty() const { return tokens_.empty(); }
    bool contains(std::string_view token) const;
    const std::vector<std::string>& tokens() const { return tokens_; }

    friend bool operator==(const TokenSet&, const TokenSet&) = default;

private:
    std::vector<std::string> tokens_;
};

using Tokenizer = std::function<TokenSet(std::string_view)>;

/// Word-level tokenizer: case-folds (ASCII, Latin-1, Greek, Cyrillic), splits
/// on whitespace and punctuation, drops empty fragments, keeps distinct tokens.
TokenSet tokenize(std::string_view text);

std::size_t intersection_size(const TokenSet& a, const TokenSet& b);

class UndefinedScoreError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// |t(doc) ∩ t(field)| / |t(field)|. Throws UndefinedScoreError when the field
/// has no tokens.
double overlap_score(const TokenSet& doc, const TokenSet& field);
double overlap_score(std::string_view doc_text, std::string_view field_text);

struct TaskScore {
    std::optional<double> input;   // nullopt: input has no tokens, term skipped
    std::optional<double> output;  // nullopt: output has no tokens
    double score = 0.0;            // min of the defined terms; 0 when output is undefined
};

/// σ = min(σ̃(D, I), σ̃(D, O)), skipping the input term when the input has no
/// tokens.
TaskScore task_score(const TokenSet& doc, const Task& task, const Tokenizer& tokenizer = tokenize);
TaskScore task_score(std::string_view doc_text, const Task& task, const Tokenizer& tokenizer = tokenize);

}  // namespace forge
