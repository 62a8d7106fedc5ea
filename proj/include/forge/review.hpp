#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "forge/record.hpp"

namespace forge {

// ---------------------------------------------------------------- judgments

/// Five-metric verdict on one task. The input metrics are n/a (nullopt)
/// exactly when the task's input is empty.
struct Judgment {
    std::string record_id;
    bool clarity = false;                        // CL_P
    std::optional<bool> hallucination_input;     // HA_I
    bool hallucination_output = false;           // HA_O
    std::optional<bool> fluency_input;           // FL_I
    bool fluency_output = false;                 // FL_O
    std::string annotator;
    std::string timestamp;

    json to_json() const;
    static Judgment from_json(const json& j);
};

enum class PairVerdict { left_win, tie, right_win };

std::string_view to_string(PairVerdict v);
PairVerdict parse_pair_verdict(std::string_view s);

struct PairwiseJudgment {
    std::string left_record_id;
    std::string right_record_id;
    std::string document_id;
    PairVerdict verdict = PairVerdict::tie;
    std::string annotator;
    std::string timestamp;
    std::string left_system;   // filled in by the server, hidden from annotators
    std::string right_system;

    json to_json() const;
    static PairwiseJudgment from_json(const json& j);
};

struct MetricCount {
    std::size_t yes = 0;
    std::size_t applicable = 0;
};

struct MetricSummary {
    std::size_t judgments = 0;
    std::map<std::string, MetricCount> counts;             // keyed CL_P, HA_I, HA_O, FL_I, FL_O
    std::map<std::string, std::optional<double>> percent;  // nullopt: no applicable judgment

    json to_json() const;
};

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"CL_P", "HA_I", "HA_O", "FL_I", "FL_O"};
    return names;
}

/// 100 × yes / applicable per metric; n/a answers leave the denominator.
/// Hallucination metrics are raw rates (smaller is better). Throws
/// std::invalid_argument on an empty list.
MetricSummary aggregate_judgments(const std::vector<Judgment>& judgments);

struct PairwiseSummary {
    std::string subject;
    std::size_t judged = 0;
    std::size_t win = 0;
    std::size_t tie = 0;
    std::size_t lose = 0;
    double win_percent = 0.0;  // rounded to one decimal
    double tie_percent = 0.0;
    double lose_percent = 0.0;

    json to_json() const;
};

double round1(double value);

/// Win/tie/lose of `subject` over the judgments that involve it. Throws
/// std::invalid_argument when none does.
PairwiseSummary aggregate_pairwise(const std::vector<PairwiseJudgment>& judgments, const std::string& subject);

/// Records some judgment marks unclear (CL_P false) or hallucinated in the
/// output (HA_O true), with reject_reason "human:<reasons>", in dataset order.
std::vector<TaskRecord> export_review_negatives(const std::vector<Judgment>& judgments,
                                                const std::vector<TaskRecord>& dataset);

std::vector<Judgment> read_judgments(const std::filesystem::path& path);
std::vector<PairwiseJudgment> read_pairwise(const std::filesystem::path& path);

// ---------------------------------------------------------------- service

/// Maps to HTTP 409.
class ReviewConflict : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Maps to HTTP 400.
class ReviewBadRequest : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class PairMismatchError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

enum class ReviewMode { single, pairwise };

std::string_view to_string(ReviewMode m);
ReviewMode parse_review_mode(std::string_view s);

struct ReviewOptions {
    std::size_t sample_size = 50;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> judgments_path;  // append log, reloaded at startup
    std::optional<std::filesystem::path> pairwise_path;
    std::string subject_system;  // pairwise report orientation; defaults to the left system
};

/// Review queues and judgment store. The sample is drawn once from the
/// dataset (uniform, without replacement, seeded); each annotator walks it in
/// an order of their own, so annotators never share queue state. Thread-safe.
class ReviewService {
public:
    /// Single-judgment mode over `dataset`.
    ReviewService(std::vector<TaskRecord> dataset, ReviewOptions options);

    /// Pairwise mode: records of two systems are paired by source document id.
    static std::unique_ptr<ReviewService> pairwise(const std::vector<TaskRecord>& left,
                                                   const std::vector<TaskRecord>& right, std::string left_system,
                                                   std::string right_system, ReviewOptions options);

    /// Adds a pair; throws PairMismatchError unless both records come from
    /// the same document and differ.
    void enqueue_pair(const TaskRecord& left, const TaskRecord& right);

    ReviewMode mode() const { return mode_; }

    /// The annotator's current item, or {"done": true}. Asking again before
    /// judging returns the same item.
    json next(const std::string& annotator);

    /// Validates and stores a judgment for the item the annotator was served.
    Judgment submit_judgment(const json& body);
    PairwiseJudgment submit_pairwise(const json& body);

    json report() const;
    std::vector<Judgment> judgments() const;
    std::vector<PairwiseJudgment> pairwise_judgments() const;
    /// Review negatives as TaskRecord JSONL.
    std::string export_negatives_jsonl() const;

private:
    ReviewService(ReviewMode mode, ReviewOptions options);

    struct Pair {
        TaskRecord left;
        TaskRecord right;
    };
    struct Served {
        std::size_t item = 0;
        bool swapped = false;
    };
    struct AnnotatorState {
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
        std::optional<Served> pending;
        std::set<std::size_t> judged;
        std::size_t serves = 0;
    };

    AnnotatorState& state_for(const std::string& annotator);
    std::size_t item_count() const;
    void draw_sample();
    void restore();
    void append_line(const std::optional<std::filesystem::path>& path, const json& line);

    ReviewMode mode_;
    ReviewOptions options_;
    std::vector<TaskRecord> dataset_;
    std::vector<Pair> pairs_;
    std::string left_system_;
    std::string right_system_;
    std::vector<std::size_t> sample_;  // indices into dataset_ or pairs_
    bool sampled_ = false;
    std::map<std::string, AnnotatorState> annotators_;
    std::vector<Judgment> judgments_;
    std::vector<PairwiseJudgment> pairwise_;
    mutable std::mutex mu_;
};

/// Card shown to annotators: no system names, input_empty flag set.
json review_card(const TaskRecord& record);

}  // namespace forge
