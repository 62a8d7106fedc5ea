#pragma once

#include <optional>
#include <string>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/record.hpp"
#include "forge/tokens.hpp"

namespace forge {

struct FilterSplit {
    std::vector<TaskRecord> passed;
    std::vector<TaskRecord> rejected;
};

/// Partitions parsed records by σ ≥ θ. Every record gets a FilterTrace;
/// rejects move to status `filtered` with decision reject_overlap.
/// Throws std::invalid_argument for θ outside [0, 1] or a record that is not
/// in status parsed.
FilterSplit overlap_filter(std::vector<TaskRecord> records, double theta, const Tokenizer& tokenizer = tokenize);

/// Serial reference implementation of overlap_filter.
FilterSplit overlap_filter_serial(std::vector<TaskRecord> records, double theta,
                                  const Tokenizer& tokenizer = tokenize);

struct AnswerabilityOptions {
    /// Case-insensitive prefixes of the trimmed reply that count as refusals.
    std::vector<std::string> refusal_patterns = {
        "i cannot",  "i can't",     "i can not", "i'm unable", "i am unable", "i'm not able",
        "i am not able", "as an ai", "sorry, i", "i'm sorry", "i apologize", "unable to answer",
    };
    bool judge_mode = false;
    DecodingParams params = DecodingParams::deterministic();
};

/// Prompt Z: the instruction, then the input on the next line when present.
std::string answerability_prompt(const Task& task);
std::string judge_prompt(const Task& task, const std::string& reply);
bool is_refusal(std::string_view reply, const std::vector<std::string>& patterns);

/// Asks the gateway to do the task without the document. Gateway failures
/// propagate as exceptions; callers record the check as not run.
bool answerability_check(const Task& task, Gateway& gateway, const AnswerabilityOptions& options = {});

enum class ConsistencyDirection {
    output_in_reply,  // |t(reply) ∩ t(O)| / |t(O)|
    reply_in_output,  // |t(reply) ∩ t(O)| / |t(reply)|
};

std::string_view to_string(ConsistencyDirection d);
ConsistencyDirection parse_consistency_direction(std::string_view s);

/// Prompt Z': instruction, input (when present) and document, newline-joined.
std::string consistency_prompt(const Document& doc, const Task& task);

struct ConsistencyResult {
    double score = 0.0;
    bool pass = false;
    std::string reply;
};

ConsistencyResult consistency_check(const Document& doc, const Task& task, Gateway& gateway, double theta,
                                    ConsistencyDirection direction = ConsistencyDirection::output_in_reply,
                                    const DecodingParams& params = DecodingParams::deterministic());

struct FilterOptions {
    double theta = 0.5;
    std::optional<double> consistency_theta;  // defaults to theta
    bool overlap = true;
    bool answerability = true;
    bool consistency = true;
    AnswerabilityOptions answerability_options;
    ConsistencyDirection direction = ConsistencyDirection::output_in_reply;
    DecodingParams consistency_params = DecodingParams::deterministic();
};

struct FilterOutcome {
    std::vector<TaskRecord> passed;
    std::vector<TaskRecord> rejected;
    std::vector<TaskRecord> parked;  // a model check could not run; retry later
};

/// Overlap filter, then answerability, then consistency. Input order is
/// preserved within each output list.
FilterOutcome run_filters(std::vector<TaskRecord> records, const FilterOptions& options, Gateway* gateway);

}  // namespace forge
