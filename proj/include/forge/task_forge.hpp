#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "forge/gateway.hpp"
#include "forge/record.hpp"
#include "forge/seeds.hpp"

namespace forge {

/// The fixed instructions prepended for the generator (P_g) and the
/// discriminator (P_d).
struct MetaInstruction {
    std::string generator_text = std::string(kGeneratorText);
    std::string discriminator_text = std::string(kDiscriminatorText);

    static constexpr std::string_view kGeneratorText =
        "Convert the given text into a task. Input is a text and Response contains three fields: #instruction#, "
        "#input# and #output#.";
    static constexpr std::string_view kDiscriminatorText =
        "Given a piece of text and a task generated from that text, determine if the task is valid or invalid.";

    bool generator_overridden() const { return generator_text != kGeneratorText; }
    bool discriminator_overridden() const { return discriminator_text != kDiscriminatorText; }
};

/// Between a meta-instruction and what it conditions on.
inline constexpr std::string_view kPromptSeparator = "\n\nInput:\n";

std::string generator_prompt(const MetaInstruction& meta, std::string_view document_text);
/// [D;T]: "Text:\n<D>\n\nTask:\n<serialized T>".
std::string document_task_pair(std::string_view document_text, const Task& task);
std::string discriminator_prompt(const MetaInstruction& meta, std::string_view document_text, const Task& task);

struct GenerationContext {
    DecodingParams params = DecodingParams::generation();
    std::string phase = "designer";
    std::string created_at;  // empty: stamp with the current UTC time
};

/// One generator call. Returns a parsed or parse_failed record; gateway
/// errors propagate and no record is produced.
TaskRecord generate_task(const Document& doc, const MetaInstruction& meta, Gateway& gateway,
                         const GenerationContext& ctx = {});

struct GenerationReport {
    std::vector<TaskRecord> records;  // input order, failed documents omitted
    std::size_t parsed = 0;
    std::size_t parse_failed = 0;
    std::vector<std::string> errors;  // one per document whose gateway call failed
};

GenerationReport generate_tasks(const std::vector<Document>& docs, const MetaInstruction& meta, Gateway& gateway,
                                const GenerationContext& ctx = {});

struct MetaBuildOptions {
    std::size_t document_view_demos = 3;
    std::size_t task_view_demos = 2;
    std::uint64_t seed = 0;
    PromptTemplate prompt = PromptTemplate::generation_default();
};

/// Teacher pass with dual-view prompts: corpus-matched document-view seeds
/// (model-expanded preferred, manual as fallback) plus task-view seeds.
GenerationReport build_meta_records(const std::vector<Document>& docs, const SeedPool& pool, Gateway& gateway,
                                    const MetaBuildOptions& options, const GenerationContext& ctx = {});

/// Classifies the record as valid/invalid with P_d + [D;T]. Invalid moves the
/// record to gated_invalid. An unrecognized label counts as invalid and sets
/// the anomaly flag. Requires status parsed.
GateVerdict gate(TaskRecord& record, const MetaInstruction& meta, Gateway& gateway,
                 const DecodingParams& params = DecodingParams::deterministic());

/// Writes {"prompt", "response"} lines. Every record must be retained.
std::size_t emit_sft_dataset(const std::vector<TaskRecord>& records, const MetaInstruction& meta,
                             const std::filesystem::path& out);

/// Inverse of one SFT line: (document text, task).
std::pair<std::string, Task> parse_sft_line(const json& line, const MetaInstruction& meta);

struct DiscriminatorReport {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t skipped = 0;
    std::vector<std::string> warnings;
};

/// Writes {"prompt", "label"} lines (positives first, then negatives) and an
/// audit sidecar with each negative's reject reason. Negatives are filtered
/// records or human rejects (reject_reason starting with "human:").
DiscriminatorReport emit_discriminator_dataset(const std::vector<TaskRecord>& positives,
                                               const std::vector<TaskRecord>& negatives, const MetaInstruction& meta,
                                               const std::filesystem::path& out,
                                               const std::filesystem::path& audit_out);

}  // namespace forge
