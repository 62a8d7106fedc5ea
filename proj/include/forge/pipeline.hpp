#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/record.hpp"

namespace forge {

class PipelineError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

/// A stage was asked for before the stage that produces its inputs.
class MissingUpstreamError : public PipelineError {
public:
    MissingUpstreamError(std::string stage, std::string required)
        : PipelineError("stage '" + stage + "' needs the output of '" + required + "'; run it first"),
          required_(std::move(required)) {}
    const std::string& required() const { return required_; }

private:
    std::string required_;
};

class OrderingError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

class LockError : public PipelineError {
public:
    using PipelineError::PipelineError;
};

// ---------------------------------------------------------------- config

struct ConfigKey {
    std::string name;
    std::string default_value;
    std::string type;  // string, path, uint, real, unit, bool, or a "a|b|c" choice
    std::string doc;
};

/// Documented keys with their defaults.
const std::vector<ConfigKey>& config_keys();

/// Per-corpus fields, set as `corpus.<Name>.<field>`; `name` holds the field.
const std::vector<ConfigKey>& corpus_config_keys();

/// Flat `key = value` settings; `#` starts a comment line. Unknown keys and
/// values of the wrong type are rejected when set.
class Config {
public:
    Config();

    static Config parse(std::string_view text, const std::string& origin = "<config>");
    static Config load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    bool has(const std::string& key) const { return values_.contains(key); }

    const std::string& get(const std::string& key) const;
    std::optional<std::string> get_optional(const std::string& key) const;  // empty value -> nullopt
    double get_real(const std::string& key) const;
    std::uint64_t get_uint(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::vector<std::string> get_list(const std::string& key) const;  // comma-separated
    /// Path value resolved against the directory of the config file; nullopt
    /// when empty.
    std::optional<std::filesystem::path> get_path(const std::string& key) const;
    void set_base_dir(std::filesystem::path dir) { base_dir_ = std::move(dir); }

    /// Names used in `corpus.<Name>.path` keys, sorted.
    std::vector<std::string> corpus_names() const;

    json snapshot() const;
    std::string to_text() const;
    std::string hash() const;

private:
    std::map<std::string, std::string> values_;
    std::filesystem::path base_dir_;
};

// ---------------------------------------------------------------- stages

enum class Stage {
    sample, seed_expand, seed_invert, build_meta, generate, filter, gate, stats, diversity, relevance,
    export_sft, export_disc,
};

std::string_view to_string(Stage s);
Stage parse_stage(std::string_view s);
const std::vector<Stage>& all_stages();

struct Counters {
    std::size_t sampled = 0;
    std::size_t generated = 0;
    std::size_t parse_failed = 0;
    std::size_t filtered = 0;
    std::size_t gated_invalid = 0;
    std::size_t retained = 0;
    std::size_t in_flight = 0;

    /// generated = parse_failed + filtered + gated_invalid + retained + in_flight.
    bool conserved() const;
    json to_json() const;
};

struct StageResult {
    Stage stage = Stage::sample;
    bool skipped = false;  // identical config and inputs; nothing rewritten
    json report;
    Counters counters;
};

struct DedupeResult {
    std::vector<TaskRecord> kept;
    std::vector<TaskRecord> dropped;  // status filtered, reason "duplicate"
};

/// Hash of the whitespace-normalized (instruction, input, output).
std::string task_fingerprint(const Task& task);

/// Keeps the first record of each fingerprint. Records without a task are
/// kept untouched.
DedupeResult dedupe(std::vector<TaskRecord> records);

struct RunOptions {
    bool replay = false;
    /// Replaces the configured backend (tests inject scripted mocks).
    std::shared_ptr<Backend> backend;
};

/// Stages over one run directory. Every output is written atomically, the
/// manifest records a content hash of each stage's config and inputs, and a
/// lock file keeps two processes from working on the same directory.
class Pipeline {
public:
    Pipeline(std::filesystem::path run_dir, Config config, RunOptions options = {});
    ~Pipeline();

    StageResult run(Stage stage);
    /// Runs the stages listed in `pipeline.stages`, in order.
    std::vector<StageResult> run_all();

    json manifest() const;
    Counters recount() const;
    const std::filesystem::path& run_dir() const { return run_dir_; }
    const Config& config() const { return config_; }

private:
    struct State;
    std::unique_ptr<State> state_;
    std::filesystem::path run_dir_;
    Config config_;
    RunOptions options_;
};

/// Loads `path` when given, else `<run_dir>/forge.conf` when present, else
/// the defaults.
Config resolve_config(const std::filesystem::path& run_dir, const std::optional<std::filesystem::path>& path);

/// Canonical output file names inside a run directory.
namespace run_files {
inline constexpr std::string_view manifest = "manifest.json";
inline constexpr std::string_view lock = ".lock";
inline constexpr std::string_view calls = "calls.jsonl";
inline constexpr std::string_view documents = "documents.jsonl";
inline constexpr std::string_view sample_report = "sample_report.json";
inline constexpr std::string_view seeds_document_view = "seeds_document_view.jsonl";
inline constexpr std::string_view seeds_task_view = "seeds_task_view.jsonl";
inline constexpr std::string_view generated = "generated.jsonl";
inline constexpr std::string_view filter_passed = "filter_passed.jsonl";
inline constexpr std::string_view rejects = "rejects.jsonl";
inline constexpr std::string_view filter_parked = "filter_parked.jsonl";
inline constexpr std::string_view gate_passed = "gate_passed.jsonl";
inline constexpr std::string_view gated_invalid = "gated_invalid.jsonl";
inline constexpr std::string_view gate_parked = "gate_parked.jsonl";
inline constexpr std::string_view retained = "retained.jsonl";
inline constexpr std::string_view duplicates = "duplicates.jsonl";
inline constexpr std::string_view sft = "sft.jsonl";
inline constexpr std::string_view disc = "disc.jsonl";
inline constexpr std::string_view disc_audit = "disc_audit.jsonl";
inline constexpr std::string_view judgments = "review/judgments.jsonl";
inline constexpr std::string_view pairwise = "review/pairwise.jsonl";
}  // namespace run_files

}  // namespace forge
