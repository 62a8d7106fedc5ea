#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/task.hpp"

namespace forge {

enum class FilterDecision { pass, reject_overlap, reject_unanswerable, reject_inconsistent, parked };

std::string_view to_string(FilterDecision d);
FilterDecision parse_filter_decision(std::string_view s);

/// Audit trail of the post-processing filters for one record.
struct FilterTrace {
    std::optional<double> overlap_input;   // nullopt: skipped, input has no tokens
    double overlap_output = 0.0;
    double task_score = 0.0;
    std::optional<bool> answerable;        // nullopt: not run
    std::optional<double> consistency_score;
    double theta = 0.5;
    double consistency_theta = 0.5;
    FilterDecision decision = FilterDecision::pass;
    std::string note;

    json to_json() const;
    static FilterTrace from_json(const json& j);
};

enum class Verdict { valid, invalid };

struct GateVerdict {
    Verdict verdict = Verdict::invalid;
    bool anomaly = false;
    std::string raw;
};

enum class RecordStatus { parsed, parse_failed, filtered, gated_invalid, retained };

std::string_view to_string(RecordStatus s);
RecordStatus parse_record_status(std::string_view s);

/// True for the allowed moves parsed -> {filtered, gated_invalid, retained}.
bool can_transition(RecordStatus from, RecordStatus to);

/// A generated task plus provenance. `raw_completion` is kept whatever the
/// status; `task` is present for every status except parse_failed.
struct TaskRecord {
    std::string id;
    Document document;
    std::optional<Task> task;
    std::string raw_completion;
    std::string model_name;
    DecodingParams decoding;
    RecordStatus status = RecordStatus::parsed;
    std::optional<FilterTrace> filter_trace;
    std::optional<GateVerdict> gate;
    std::string parse_error;
    std::string reject_reason;
    std::string phase;  // "meta" (teacher) or "designer"
    std::string created_at;

    /// Applies a status change; throws std::logic_error on a non-monotone move.
    void advance(RecordStatus to);

    json to_json() const;
    static TaskRecord from_json(const json& j);
};

std::vector<TaskRecord> read_records(const std::filesystem::path& path);
std::string records_to_jsonl(const std::vector<TaskRecord>& records);

/// UTC "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_timestamp();

}  // namespace forge
