#pragma once

#include <cstddef>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/kernels.hpp"
#include "forge/record.hpp"

namespace forge {

using kernels::FieldStats;

enum class GroupBy { corpus, all };

inline constexpr std::string_view kAllGroup = "all";

// ---------------------------------------------------------------- lengths

struct LengthRow {
    std::size_t count = 0;
    FieldStats instruction;
    FieldStats input;
    FieldStats output;
};

/// Per-group mean and population std of Unicode character counts of each
/// field. Every record must carry a task.
std::map<std::string, LengthRow> length_stats(const std::vector<TaskRecord>& records, GroupBy group_by);
std::map<std::string, LengthRow> length_stats_serial(const std::vector<TaskRecord>& records, GroupBy group_by);

/// "70 ± 24": mean and std rounded to integers.
std::string format_stats_cell(const FieldStats& s);
/// "50 | 70 ± 24 | 74 ± 107 | 409 ± 448".
std::string format_stats_row(const LengthRow& row);
/// Aligned plain-text table, one row per group.
std::string render_length_table(const std::map<std::string, LengthRow>& rows);
json length_report_json(const std::map<std::string, LengthRow>& rows);

// ---------------------------------------------------------------- diversity

using VerbNoun = std::pair<std::string, std::string>;

/// Root verb and direct-object head noun of an instruction, if recognizable.
class SyntacticAnalyzer {
public:
    virtual ~SyntacticAnalyzer() = default;
    virtual std::optional<VerbNoun> analyze(std::string_view instruction) const = 0;
    virtual std::string name() const = 0;
};

/// First word must be a known imperative verb; the object is the last
/// content word of the noun chunk that follows it (up to the next
/// preposition, conjunction or punctuation mark).
class HeuristicAnalyzer : public SyntacticAnalyzer {
public:
    std::optional<VerbNoun> analyze(std::string_view instruction) const override;
    std::string name() const override { return "heuristic-imperative-v1"; }
};

struct DiversityProfile {
    std::map<VerbNoun, std::size_t> pairs;
    std::size_t unparsed_count = 0;

    std::size_t pair_total() const;
};

DiversityProfile verb_noun_profile(const std::vector<std::string>& instructions, const SyntacticAnalyzer& analyzer);

/// Plot-ready rings: inner = top verbs, outer = top nouns per verb, plus the
/// flat {verb, noun, count} list.
json diversity_json(const DiversityProfile& profile, const std::string& analyzer_name, std::size_t top_verbs = 20,
                    std::size_t top_nouns = 4);

// ---------------------------------------------------------------- relevance

struct RelevanceGroup {
    std::size_t count = 0;
    std::optional<double> literal_input;   // nullopt: n/a (every input skipped)
    std::size_t literal_input_skipped = 0;
    std::optional<double> literal_output;
    std::size_t literal_output_skipped = 0;
    std::optional<double> semantic_input;
    std::size_t semantic_input_skipped = 0;
    std::optional<double> semantic_output;
    bool semantic_run = false;
    bool semantic_complete = true;
    std::string semantic_error;
};

enum class SemanticMode { embedding_cosine, token_greedy };

struct RelevanceReport {
    std::map<std::string, RelevanceGroup> groups;
    std::string scorer_name;

    json to_json() const;
    std::string render_table() const;
};

/// Per-group means of σ̃(D, I) (inputs without tokens skipped and counted) and
/// σ̃(D, O).
RelevanceReport literal_relevance(const std::vector<TaskRecord>& records, GroupBy group_by);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

/// Greedy-matching F1 over per-token embeddings.
double greedy_token_similarity(const std::vector<std::vector<double>>& reference,
                               const std::vector<std::vector<double>>& candidate);

std::string semantic_scorer_name(SemanticMode mode, const std::string& model);

/// Adds embedding-based relevance to `report` (which may already hold the
/// literal scores). A gateway failure marks the group incomplete and leaves
/// its semantic means empty.
void semantic_relevance(RelevanceReport& report, const std::vector<TaskRecord>& records, Gateway& gateway,
                        GroupBy group_by, SemanticMode mode = SemanticMode::embedding_cosine);

}  // namespace forge
