#include "forge/filter.hpp"

#include <stdexcept>

#include "forge/kernels.hpp"
#include "forge/parallel.hpp"
#include "forge/text.hpp"

namespace forge {

namespace {

void check_inputs(const std::vector<TaskRecord>& records, double theta) {
    if (!(theta >= 0.0 && theta <= 1.0)) throw std::invalid_argument("theta must lie in [0, 1]");
    for (const auto& r : records) {
        if (r.status != RecordStatus::parsed || !r.task) {
            throw std::invalid_argument("overlap_filter: record " + r.id + " is not in status parsed");
        }
    }
}

FilterSplit partition(std::vector<TaskRecord> records, const std::vector<TaskScore>& scores, double theta) {
    FilterSplit split;
    for (std::size_t i = 0; i < records.size(); ++i) {
        TaskRecord& r = records[i];
        const TaskScore& s = scores[i];
        FilterTrace trace = r.filter_trace.value_or(FilterTrace{});
        trace.overlap_input = s.input;
        trace.overlap_output = s.output.value_or(0.0);
        trace.task_score = s.score;
        trace.theta = theta;
        if (!s.output) trace.note = "output has no tokens";
        if (s.score >= theta) {
            trace.decision = FilterDecision::pass;
            r.filter_trace = std::move(trace);
            split.passed.push_back(std::move(r));
        } else {
            trace.decision = FilterDecision::reject_overlap;
            r.filter_trace = std::move(trace);
            r.advance(RecordStatus::filtered);
            r.reject_reason = std::string(to_string(FilterDecision::reject_overlap));
            split.rejected.push_back(std::move(r));
        }
    }
    return split;
}

std::vector<kernels::ScoreJob> jobs_for(const std::vector<TaskRecord>& records) {
    std::vector<kernels::ScoreJob> jobs;
    jobs.reserve(records.size());
    for (const auto& r : records) jobs.push_back({r.document.text, &*r.task});
    return jobs;
}

}  // namespace

FilterSplit overlap_filter(std::vector<TaskRecord> records, double theta, const Tokenizer& tokenizer) {
    check_inputs(records, theta);
    auto jobs = jobs_for(records);
    auto scores = kernels::score_tasks(jobs, tokenizer);
    return partition(std::move(records), scores, theta);
}

FilterSplit overlap_filter_serial(std::vector<TaskRecord> records, double theta, const Tokenizer& tokenizer) {
    check_inputs(records, theta);
    auto jobs = jobs_for(records);
    auto scores = kernels::score_tasks_serial(jobs, tokenizer);
    return partition(std::move(records), scores, theta);
}

std::string answerability_prompt(const Task& task) {
    if (task.input.empty()) return task.instruction;
    return task.instruction + "\n" + task.input;
}

std::string judge_prompt(const Task& task, const std::string& reply) {
    return "Decide whether the response actually answers the task. Reply with yes or no.\n\nTask:\n" +
           answerability_prompt(task) + "\n\nResponse:\n" + reply;
}

bool is_refusal(std::string_view reply, const std::vector<std::string>& patterns) {
    const std::string text = trim(reply);
    for (const auto& p : patterns) {
        if (starts_with_icase(text, p)) return true;
    }
    return false;
}

bool answerability_check(const Task& task, Gateway& gateway, const AnswerabilityOptions& options) {
    const std::string reply = gateway.complete(answerability_prompt(task), options.params);
    if (is_blank(reply) || is_refusal(reply, options.refusal_patterns)) return false;
    if (!options.judge_mode) return true;
    try {
        auto verdict = gateway.classify(judge_prompt(task, reply), {"yes", "no"}, options.params);
        return verdict.label == "yes";
    } catch (const UnrecognizedLabelError&) {
        return false;
    }
}

std::string_view to_string(ConsistencyDirection d) {
    return d == ConsistencyDirection::output_in_reply ? "output_in_reply" : "reply_in_output";
}

ConsistencyDirection parse_consistency_direction(std::string_view s) {
    if (s == "output_in_reply") return ConsistencyDirection::output_in_reply;
    if (s == "reply_in_output") return ConsistencyDirection::reply_in_output;
    throw std::invalid_argument("unknown consistency direction: " + std::string(s));
}

std::string consistency_prompt(const Document& doc, const Task& task) {
    return answerability_prompt(task) + "\n" + doc.text;
}

ConsistencyResult consistency_check(const Document& doc, const Task& task, Gateway& gateway, double theta,
                                    ConsistencyDirection direction, const DecodingParams& params) {
    ConsistencyResult result;
    result.reply = gateway.complete(consistency_prompt(doc, task), params);
    TokenSet reply = tokenize(result.reply);
    TokenSet output = tokenize(task.output);
    const TokenSet& denominator = direction == ConsistencyDirection::output_in_reply ? output : reply;
    const TokenSet& other = direction == ConsistencyDirection::output_in_reply ? reply : output;
    result.score = denominator.empty() ? 0.0 : overlap_score(other, denominator);
    result.pass = result.score >= theta;
    return result;
}

FilterOutcome run_filters(std::vector<TaskRecord> records, const FilterOptions& options, Gateway* gateway) {
    if ((options.answerability || options.consistency) && gateway == nullptr) {
        throw std::invalid_argument("model-backed filters need a gateway");
    }
    const double ctheta = options.consistency_theta.value_or(options.theta);
    if (!(ctheta >= 0.0 && ctheta <= 1.0)) throw std::invalid_argument("consistency theta must lie in [0, 1]");

    FilterOutcome outcome;
    std::vector<TaskRecord> survivors;
    if (options.overlap) {
        FilterSplit split = overlap_filter(std::move(records), options.theta);
        survivors = std::move(split.passed);
        outcome.rejected = std::move(split.rejected);
    } else {
        check_inputs(records, options.theta);
        survivors = std::move(records);
        for (auto& r : survivors) {
            FilterTrace t;
            t.theta = options.theta;
            t.note = "overlap filter disabled";
            r.filter_trace = t;
        }
    }

    enum class Fate { pass, reject, park };
    std::vector<Fate> fate(survivors.size(), Fate::pass);
    if (options.answerability || options.consistency) {
        parallel_for(survivors.size(), gateway->max_parallel(), [&](std::size_t i) {
            TaskRecord& r = survivors[i];
            FilterTrace& trace = *r.filter_trace;
            trace.consistency_theta = ctheta;
            try {
                if (options.answerability) {
                    trace.answerable = answerability_check(*r.task, *gateway, options.answerability_options);
                    if (!*trace.answerable) {
                        trace.decision = FilterDecision::reject_unanswerable;
                        fate[i] = Fate::reject;
                        return;
                    }
                }
                if (options.consistency) {
                    auto c = consistency_check(r.document, *r.task, *gateway, ctheta, options.direction,
                                               options.consistency_params);
                    trace.consistency_score = c.score;
                    if (!c.pass) {
                        trace.decision = FilterDecision::reject_inconsistent;
                        fate[i] = Fate::reject;
                        return;
                    }
                }
                trace.decision = FilterDecision::pass;
            } catch (const std::exception& e) {
                trace.decision = FilterDecision::parked;
                trace.note = std::string("model check not run: ") + e.what();
                fate[i] = Fate::park;
            }
        });
    }

    std::vector<TaskRecord> model_rejects;
    for (std::size_t i = 0; i < survivors.size(); ++i) {
        TaskRecord& r = survivors[i];
        switch (fate[i]) {
            case Fate::pass: outcome.passed.push_back(std::move(r)); break;
            case Fate::park: outcome.parked.push_back(std::move(r)); break;
            case Fate::reject:
                r.advance(RecordStatus::filtered);
                r.reject_reason = std::string(to_string(r.filter_trace->decision));
                model_rejects.push_back(std::move(r));
                break;
        }
    }
    for (auto& r : model_rejects) outcome.rejected.push_back(std::move(r));
    return outcome;
}

}  // namespace forge
