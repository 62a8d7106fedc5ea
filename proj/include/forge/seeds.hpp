#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <shared_mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "forge/corpus.hpp"
#include "forge/gateway.hpp"
#include "forge/task.hpp"

namespace forge {

enum class SeedView { document_view, task_view };
enum class SeedOrigin { manual, model_expanded };

std::string_view to_string(SeedView v);
std::string_view to_string(SeedOrigin o);
SeedView parse_seed_view(std::string_view s);
SeedOrigin parse_seed_origin(std::string_view s);

struct SeedExample {
    Document document;
    Task task;
    SeedView view = SeedView::document_view;
    SeedOrigin origin = SeedOrigin::manual;
};

struct StoredSeed {
    std::string id;
    SeedExample example;
};

json to_json(const StoredSeed& seed);
/// Accepts the persisted form; `document` may also be a bare string for
/// hand-written seed files.
StoredSeed stored_seed_from_json(const json& j, std::size_t line_index);

class DuplicateSeedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DemonstrationShortfall : public std::runtime_error {
public:
    DemonstrationShortfall(std::size_t wanted, std::size_t available)
        : std::runtime_error("need " + std::to_string(wanted) + " demonstrations but only " +
                             std::to_string(available) + " eligible seeds (short by " +
                             std::to_string(wanted - available) + ")"),
          wanted_(wanted), available_(available) {}
    std::size_t wanted() const { return wanted_; }
    std::size_t available() const { return available_; }

private:
    std::size_t wanted_;
    std::size_t available_;
};

struct SeedFilter {
    std::optional<CorpusKind> corpus;
    std::optional<SeedView> view;
    std::optional<SeedOrigin> origin;

    bool matches(const SeedExample& e) const;
};

/// Dual-view seed pool. Concurrent reads, serialized writes.
class SeedPool {
public:
    SeedPool() = default;
    SeedPool(const SeedPool& other);
    SeedPool& operator=(const SeedPool& other);

    /// Stores the example and returns its id. Throws DuplicateSeedError when
    /// (document id, instruction) is already present and std::invalid_argument
    /// when the task is invalid.
    std::string register_seed(SeedExample example);
    /// Registers with a caller-chosen id (used when loading persisted pools).
    void insert(StoredSeed seed);

    std::size_t size() const;
    std::size_t count(const CorpusKind& corpus, SeedView view) const;
    std::vector<StoredSeed> eligible(const SeedFilter& filter) const;
    std::vector<StoredSeed> all() const;

    std::string to_jsonl() const;
    static SeedPool load(const std::filesystem::path& path);
    void merge_from(const std::filesystem::path& path);

private:
    mutable std::shared_mutex mu_;
    std::vector<StoredSeed> seeds_;
    std::map<std::pair<std::string, std::string>, std::size_t> keys_;
    std::uint64_t next_id_ = 1;
};

/// k distinct eligible seeds, uniform without replacement, in random order.
std::vector<StoredSeed> select_demonstrations(const SeedPool& pool, std::size_t k, const SeedFilter& filter, Rng& rng);

/// Prompt text with named slots `{demonstrations}` and `{text}` (generation)
/// or `{demonstrations}` and `{task}` (inversion).
struct PromptTemplate {
    std::string text;

    static PromptTemplate generation_default();
    static PromptTemplate inversion_default();
    static PromptTemplate load(const std::filesystem::path& path);
    std::string hash() const;
};

struct PromptText {
    std::string text;
    std::vector<std::string> demo_ids;
    std::string target_doc_id;
};

inline constexpr std::string_view kTargetTextMarker = "#text#: \"";

/// Fills the generation template with the demonstrations (each rendered as
/// its document followed by its serialized task) and the target document.
/// Throws std::invalid_argument when `demos` is empty.
PromptText assemble_generation_prompt(const Document& doc, const std::vector<StoredSeed>& demos,
                                      const PromptTemplate& tmpl = PromptTemplate::generation_default());

/// Payload of the first line-start `#text#: "` marker, closing quote removed.
std::optional<std::string> extract_target_text(std::string_view prompt);

PromptText assemble_inversion_prompt(const Task& task, const std::vector<StoredSeed>& demos,
                                     const PromptTemplate& tmpl = PromptTemplate::inversion_default());

/// Turns an inversion completion into document text: strips an optional
/// leading `#text#:` marker and one layer of surrounding quotes.
std::string clean_inverted_document(std::string_view completion);

using TaskParser = std::function<ParseResult(std::string_view)>;

struct ExpansionOptions {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    int parse_attempts = 1;
    DecodingParams params = DecodingParams::generation();
    PromptTemplate prompt = PromptTemplate::generation_default();
    TaskParser parser = [](std::string_view s) { return parse_task(s); };
};

struct ExpansionReport {
    std::vector<StoredSeed> added;
    std::size_t parse_failures = 0;
    std::size_t duplicates = 0;
    std::vector<std::string> errors;  // gateway failures and demonstration shortfalls, one per document
};

/// Document-view expansion: each document gets k corpus-matched manual
/// document-view demonstrations; parsed completions join the pool as
/// model-expanded document-view seeds, in document order.
ExpansionReport expand_document_view(SeedPool& pool, const std::vector<Document>& documents, Gateway& gateway,
                                     const ExpansionOptions& options = {});

struct InversionOptions {
    std::size_t k = 5;
    std::uint64_t seed = 0;
    std::size_t inversions_per_task = 1;
    CorpusKind corpus = CorpusKind::custom("task-view");
    DecodingParams params = DecodingParams::generation();
    PromptTemplate prompt = PromptTemplate::inversion_default();
};

/// Task-view inversion: asks the gateway for a plausible source document per
/// task and registers (document, task) as model-expanded task-view seeds.
/// Throws std::invalid_argument if any task is invalid.
ExpansionReport invert_tasks(const std::vector<Task>& tasks, SeedPool& pool, Gateway& gateway,
                             const InversionOptions& options = {});

}  // namespace forge
