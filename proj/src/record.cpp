#include "forge/record.hpp"

#include <chrono>
#include <ctime>
#include <stdexcept>

namespace forge {

std::string_view to_string(FilterDecision d) {
    switch (d) {
        case FilterDecision::pass: return "pass";
        case FilterDecision::reject_overlap: return "reject_overlap";
        case FilterDecision::reject_unanswerable: return "reject_unanswerable";
        case FilterDecision::reject_inconsistent: return "reject_inconsistent";
        case FilterDecision::parked: return "parked";
    }
    return "pass";
}

FilterDecision parse_filter_decision(std::string_view s) {
    for (auto d : {FilterDecision::pass, FilterDecision::reject_overlap, FilterDecision::reject_unanswerable,
                   FilterDecision::reject_inconsistent, FilterDecision::parked}) {
        if (to_string(d) == s) return d;
    }
    throw std::invalid_argument("unknown filter decision: " + std::string(s));
}

json FilterTrace::to_json() const {
    json j;
    j["overlap_input"] = overlap_input ? json(*overlap_input) : json("skipped-empty-input");
    j["overlap_output"] = overlap_output;
    j["task_score"] = task_score;
    j["answerable"] = answerable ? json(*answerable) : json("not-run");
    j["consistency_score"] = consistency_score ? json(*consistency_score) : json("not-run");
    j["theta"] = theta;
    j["consistency_theta"] = consistency_theta;
    j["decision"] = to_string(decision);
    if (!note.empty()) j["note"] = note;
    return j;
}

FilterTrace FilterTrace::from_json(const json& j) {
    FilterTrace t;
    if (j.at("overlap_input").is_number()) t.overlap_input = j["overlap_input"].get<double>();
    t.overlap_output = j.at("overlap_output").get<double>();
    t.task_score = j.at("task_score").get<double>();
    if (j.at("answerable").is_boolean()) t.answerable = j["answerable"].get<bool>();
    if (j.at("consistency_score").is_number()) t.consistency_score = j["consistency_score"].get<double>();
    t.theta = j.at("theta").get<double>();
    t.consistency_theta = j.value("consistency_theta", t.theta);
    t.decision = parse_filter_decision(j.at("decision").get<std::string>());
    t.note = j.value("note", std::string{});
    return t;
}

std::string_view to_string(RecordStatus s) {
    switch (s) {
        case RecordStatus::parsed: return "parsed";
        case RecordStatus::parse_failed: return "parse_failed";
        case RecordStatus::filtered: return "filtered";
        case RecordStatus::gated_invalid: return "gated_invalid";
        case RecordStatus::retained: return "retained";
    }
    return "parsed";
}

RecordStatus parse_record_status(std::string_view s) {
    for (auto v : {RecordStatus::parsed, RecordStatus::parse_failed, RecordStatus::filtered,
                   RecordStatus::gated_invalid, RecordStatus::retained}) {
        if (to_string(v) == s) return v;
    }
    throw std::invalid_argument("unknown record status: " + std::string(s));
}

bool can_transition(RecordStatus from, RecordStatus to) {
    if (from == to) return true;
    return from == RecordStatus::parsed &&
           (to == RecordStatus::filtered || to == RecordStatus::gated_invalid || to == RecordStatus::retained);
}

void TaskRecord::advance(RecordStatus to) {
    if (!can_transition(status, to)) {
        throw std::logic_error("record " + id + ": illegal status change " + std::string(to_string(status)) + " -> " +
                               std::string(to_string(to)));
    }
    if (to != RecordStatus::parse_failed && !task) {
        throw std::logic_error("record " + id + ": status " + std::string(to_string(to)) + " requires a task");
    }
    status = to;
}

json TaskRecord::to_json() const {
    json j;
    j["id"] = id;
    j["document"] = forge::to_json(document);
    j["task"] = task ? forge::to_json(*task) : json(nullptr);
    j["raw_completion"] = raw_completion;
    j["model_name"] = model_name;
    j["decoding"] = decoding.to_json();
    j["status"] = to_string(status);
    j["filter_trace"] = filter_trace ? filter_trace->to_json() : json(nullptr);
    if (gate) {
        j["gate"] = json{{"verdict", gate->verdict == Verdict::valid ? "valid" : "invalid"},
                         {"anomaly", gate->anomaly},
                         {"raw", gate->raw}};
    } else {
        j["gate"] = nullptr;
    }
    if (!parse_error.empty()) j["parse_error"] = parse_error;
    if (!reject_reason.empty()) j["reject_reason"] = reject_reason;
    j["phase"] = phase;
    j["created_at"] = created_at;
    return j;
}

TaskRecord TaskRecord::from_json(const json& j) {
    TaskRecord r;
    r.id = j.at("id").get<std::string>();
    r.document = document_from_json(j.at("document"));
    if (j.contains("task") && j["task"].is_object()) r.task = task_from_json(j["task"]);
    r.raw_completion = j.value("raw_completion", std::string{});
    r.model_name = j.value("model_name", std::string{});
    if (j.contains("decoding") && j["decoding"].is_object()) r.decoding = DecodingParams::from_json(j["decoding"]);
    r.status = parse_record_status(j.value("status", std::string("parsed")));
    if (j.contains("filter_trace") && j["filter_trace"].is_object()) {
        r.filter_trace = FilterTrace::from_json(j["filter_trace"]);
    }
    if (j.contains("gate") && j["gate"].is_object()) {
        const json& g = j["gate"];
        r.gate = GateVerdict{g.at("verdict").get<std::string>() == "valid" ? Verdict::valid : Verdict::invalid,
                             g.value("anomaly", false), g.value("raw", std::string{})};
    }
    r.parse_error = j.value("parse_error", std::string{});
    r.reject_reason = j.value("reject_reason", std::string{});
    r.phase = j.value("phase", std::string{});
    r.created_at = j.value("created_at", std::string{});
    if (r.status != RecordStatus::parse_failed && !r.task) {
        throw std::invalid_argument("record " + r.id + ": status " + std::string(to_string(r.status)) +
                                    " without a task");
    }
    return r;
}

std::vector<TaskRecord> read_records(const std::filesystem::path& path) {
    std::vector<TaskRecord> out;
    for (const auto& j : read_jsonl_strict(path)) out.push_back(TaskRecord::from_json(j));
    return out;
}

std::string records_to_jsonl(const std::vector<TaskRecord>& records) {
    std::string out;
    for (const auto& r : records) out += dump_line(r.to_json()) + "\n";
    return out;
}

std::string utc_timestamp() {
    std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

}  // namespace forge
