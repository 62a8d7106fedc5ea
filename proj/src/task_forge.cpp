#include "forge/task_forge.hpp"

#include <stdexcept>

#include "forge/parallel.hpp"

namespace forge {

std::string generator_prompt(const MetaInstruction& meta, std::string_view document_text) {
    std::string p = meta.generator_text;
    p += kPromptSeparator;
    p += document_text;
    return p;
}

std::string document_task_pair(std::string_view document_text, const Task& task) {
    std::string s = "Text:\n";
    s += document_text;
    s += "\n\nTask:\n";
    s += serialize(task);
    return s;
}

std::string discriminator_prompt(const MetaInstruction& meta, std::string_view document_text, const Task& task) {
    std::string p = meta.discriminator_text;
    p += kPromptSeparator;
    p += document_task_pair(document_text, task);
    return p;
}

namespace {

TaskRecord record_from_completion(const Document& doc, std::string completion, const std::string& model,
                                  const GenerationContext& ctx) {
    TaskRecord r;
    r.id = ctx.phase + "/" + doc.id;
    r.document = doc;
    r.raw_completion = std::move(completion);
    r.model_name = model;
    r.decoding = ctx.params;
    r.phase = ctx.phase;
    r.created_at = ctx.created_at.empty() ? utc_timestamp() : ctx.created_at;
    ParseResult parsed = parse_task(r.raw_completion);
    if (auto* task = std::get_if<Task>(&parsed)) {
        r.task = std::move(*task);
        r.status = RecordStatus::parsed;
    } else {
        const auto& err = std::get<ParseError>(parsed);
        r.status = RecordStatus::parse_failed;
        r.parse_error = std::string(to_string(err.defect));
    }
    return r;
}

GenerationReport collect(std::vector<std::optional<TaskRecord>>& slots, std::vector<std::string>& errors) {
    GenerationReport report;
    for (std::size_t i = 0; i < slots.size(); ++i) {
        if (!errors[i].empty()) {
            report.errors.push_back(std::move(errors[i]));
            continue;
        }
        if (!slots[i]) continue;
        if (slots[i]->status == RecordStatus::parsed) ++report.parsed; else ++report.parse_failed;
        report.records.push_back(std::move(*slots[i]));
    }
    return report;
}

}  // namespace

TaskRecord generate_task(const Document& doc, const MetaInstruction& meta, Gateway& gateway,
                         const GenerationContext& ctx) {
    std::string completion = gateway.complete(generator_prompt(meta, doc.text), ctx.params);
    return record_from_completion(doc, std::move(completion), gateway.model_name(), ctx);
}

GenerationReport generate_tasks(const std::vector<Document>& docs, const MetaInstruction& meta, Gateway& gateway,
                                const GenerationContext& ctx) {
    std::vector<std::optional<TaskRecord>> slots(docs.size());
    std::vector<std::string> errors(docs.size());
    parallel_for(docs.size(), gateway.max_parallel(), [&](std::size_t i) {
        try {
            slots[i] = generate_task(docs[i], meta, gateway, ctx);
        } catch (const std::exception& e) {
            errors[i] = docs[i].id + ": " + e.what();
        }
    });
    return collect(slots, errors);
}

GenerationReport build_meta_records(const std::vector<Document>& docs, const SeedPool& pool, Gateway& gateway,
                                    const MetaBuildOptions& options, const GenerationContext& ctx) {
    std::vector<std::optional<TaskRecord>> slots(docs.size());
    std::vector<std::string> errors(docs.size());
    parallel_for(docs.size(), gateway.max_parallel(), [&](std::size_t i) {
        const Document& doc = docs[i];
        try {
            Rng rng(derive_seed(options.seed, "meta/" + doc.id));
            std::vector<StoredSeed> demos;
            if (options.document_view_demos > 0) {
                SeedFilter expanded{doc.corpus, SeedView::document_view, SeedOrigin::model_expanded};
                SeedFilter any{doc.corpus, SeedView::document_view, std::nullopt};
                const bool enough = pool.eligible(expanded).size() >= options.document_view_demos;
                demos = select_demonstrations(pool, options.document_view_demos, enough ? expanded : any, rng);
            }
            if (options.task_view_demos > 0) {
                SeedFilter tv{std::nullopt, SeedView::task_view, std::nullopt};
                auto more = select_demonstrations(pool, options.task_view_demos, tv, rng);
                demos.insert(demos.end(), more.begin(), more.end());
            }
            rng.shuffle(demos);
            PromptText prompt = assemble_generation_prompt(doc, demos, options.prompt);
            std::string completion = gateway.complete(prompt.text, ctx.params);
            slots[i] = record_from_completion(doc, std::move(completion), gateway.model_name(), ctx);
        } catch (const std::exception& e) {
            errors[i] = doc.id + ": " + e.what();
        }
    });
    return collect(slots, errors);
}

GateVerdict gate(TaskRecord& record, const MetaInstruction& meta, Gateway& gateway, const DecodingParams& params) {
    if (record.status != RecordStatus::parsed || !record.task) {
        throw std::invalid_argument("gate: record " + record.id + " is not in status parsed");
    }
    GateVerdict v;
    try {
        auto result = gateway.classify(discriminator_prompt(meta, record.document.text, *record.task),
                                       {"valid", "invalid"}, params);
        v.verdict = result.label == "valid" ? Verdict::valid : Verdict::invalid;
        v.raw = std::move(result.raw);
    } catch (const UnrecognizedLabelError& e) {
        v.verdict = Verdict::invalid;
        v.anomaly = true;
        v.raw = e.raw();
    }
    record.gate = v;
    if (v.verdict == Verdict::invalid) {
        record.advance(RecordStatus::gated_invalid);
        record.reject_reason = v.anomaly ? "gate_unrecognized_label" : "gate_invalid";
    }
    return v;
}

std::size_t emit_sft_dataset(const std::vector<TaskRecord>& records, const MetaInstruction& meta,
                             const std::filesystem::path& out) {
    std::string content;
    for (const auto& r : records) {
        if (r.status != RecordStatus::retained || !r.task) {
            throw std::invalid_argument("emit_sft_dataset: record " + r.id + " is not retained");
        }
        json line{{"prompt", generator_prompt(meta, r.document.text)}, {"response", serialize(*r.task)}};
        content += dump_line(line) + "\n";
    }
    write_file_atomic(out, content);
    return records.size();
}

std::pair<std::string, Task> parse_sft_line(const json& line, const MetaInstruction& meta) {
    const std::string prompt = line.at("prompt").get<std::string>();
    const std::string prefix = meta.generator_text + std::string(kPromptSeparator);
    if (!prompt.starts_with(prefix)) throw std::invalid_argument("SFT prompt does not start with the generator text");
    ParseResult parsed = parse_task(line.at("response").get<std::string>());
    if (!parsed_ok(parsed)) {
        throw std::invalid_argument("SFT response does not parse: " +
                                    std::string(to_string(std::get<ParseError>(parsed).defect)));
    }
    return {prompt.substr(prefix.size()), std::get<Task>(parsed)};
}

DiscriminatorReport emit_discriminator_dataset(const std::vector<TaskRecord>& positives,
                                               const std::vector<TaskRecord>& negatives, const MetaInstruction& meta,
                                               const std::filesystem::path& out,
                                               const std::filesystem::path& audit_out) {
    DiscriminatorReport report;
    std::string content;
    std::string audit;
    for (const auto& r : positives) {
        if (r.status != RecordStatus::retained) {
            throw std::invalid_argument("emit_discriminator_dataset: positive " + r.id + " is not retained");
        }
        if (!r.task) {
            ++report.skipped;
            continue;
        }
        content += dump_line(json{{"prompt", discriminator_prompt(meta, r.document.text, *r.task)}, {"label", "valid"}});
        content += "\n";
        ++report.positives;
    }
    for (const auto& r : negatives) {
        if (!r.task) {
            ++report.skipped;
            continue;
        }
        const bool human = r.reject_reason.starts_with("human:");
        if (r.status != RecordStatus::filtered && !human) {
            throw std::invalid_argument("emit_discriminator_dataset: negative " + r.id +
                                        " is neither a post-processing reject nor a human reject");
        }
        content += dump_line(json{{"prompt", discriminator_prompt(meta, r.document.text, *r.task)}, {"label", "invalid"}});
        content += "\n";
        audit += dump_line(json{{"record_id", r.id},
                                {"label", "invalid"},
                                {"reason", r.reject_reason.empty() ? std::string("unspecified") : r.reject_reason}});
        audit += "\n";
        ++report.negatives;
    }
    if (report.negatives == 0) report.warnings.push_back("class imbalance: no negative examples");
    if (report.positives == 0) report.warnings.push_back("class imbalance: no positive examples");
    write_file_atomic(out, content);
    write_file_atomic(audit_out, audit);
    return report;
}

}  // namespace forge
