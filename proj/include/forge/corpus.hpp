#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "forge/jsonl.hpp"
#include "forge/text.hpp"

namespace forge {

enum class CorpusTag { wikipedia, free_law, arxiv, stack_exchange, dm_math, github, custom };

/// Which corpus a document came from. Custom kinds carry their own name.
class CorpusKind {
public:
    CorpusKind() = default;
    explicit CorpusKind(CorpusTag tag, std::string custom_name = {});

    static CorpusKind custom(std::string name) { return CorpusKind(CorpusTag::custom, std::move(name)); }
    /// Accepts the canonical names ("ArXiv", "DMMath", ...), common aliases, and
    /// "custom:<name>". Unknown names become custom kinds.
    static CorpusKind parse(std::string_view name);
    static const std::vector<CorpusKind>& builtin();

    CorpusTag tag() const { return tag_; }
    std::string name() const;

    friend bool operator==(const CorpusKind&, const CorpusKind&) = default;
    friend auto operator<=>(const CorpusKind& a, const CorpusKind& b) { return a.name() <=> b.name(); }

private:
    CorpusTag tag_ = CorpusTag::wikipedia;
    std::string custom_name_;
};

struct RawDocument {
    std::string id;
    CorpusKind corpus;
    std::string text;
    std::map<std::string, std::string> metadata;
};

/// Half-open range of Unicode scalar offsets into the parent raw text.
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;
    std::size_t length() const { return end - start; }
    friend bool operator==(const Span&, const Span&) = default;
};

struct Document {
    std::string id;
    CorpusKind corpus;
    std::string text;
    std::size_t char_count = 0;
    std::optional<Span> source_span;  // nullopt means the whole raw document
    std::string parent_id;

    friend bool operator==(const Document&, const Document&) = default;
};

Document make_whole_document(const RawDocument& raw);

json to_json(const Document& doc);
Document document_from_json(const json& j);

enum class SamplingMode { window, qa_pair, whole };

/// Alternative DM-Math layout: a question line matching `question` directly
/// followed by an answer line matching `answer`.
struct QaPattern {
    std::string question;
    std::string answer;
};

struct SamplingPolicy {
    SamplingMode mode = SamplingMode::whole;
    std::size_t min_chars = 0;
    std::size_t max_chars = 0;
    bool snap_boundaries = true;
    std::optional<QaPattern> qa_pattern;

    static SamplingPolicy window(std::size_t min_chars, std::size_t max_chars, bool snap = true);
    static SamplingPolicy qa_pair();
    static SamplingPolicy whole();
    /// ArXiv/FreeLaw: window(2000, 3500); DMMath: qa_pair; everything else: whole.
    static SamplingPolicy default_for(const CorpusKind& corpus);

    void validate() const;
};

enum class CorpusFormat { jsonl, plain_text };
CorpusFormat parse_corpus_format(std::string_view name);

struct LoadReport {
    std::size_t read = 0;
    std::size_t skipped = 0;
    std::vector<std::string> errors;
};

/// Streams raw documents from a file or directory in deterministic order
/// (lexicographic relative path, then line order). Ids are
/// `<corpus>/<index>` for a single JSONL file, `<corpus>/<relpath>/<index>`
/// for JSONL files inside a directory and `<corpus>/<relpath>` for plain text.
/// Throws IoError when the source cannot be read.
LoadReport load_corpus(const std::filesystem::path& source, const CorpusKind& corpus,
                       CorpusFormat format, const std::function<void(RawDocument)>& on_document);

enum class SampleNote { ok, fallback_whole, no_qa_pair };

struct SampleResult {
    std::optional<Document> document;
    SampleNote note = SampleNote::ok;
};

SampleResult sample_document(const RawDocument& raw, const SamplingPolicy& policy, Rng& rng);

/// Aligns a window cut to sentence/paragraph boundaries: the start moves back
/// to the beginning of the sentence it falls in, the end moves back to the
/// last boundary inside the window. If the snapped length would leave
/// [min_chars, max_chars], the raw cut is returned. Offsets are scalar indices.
Span snap_window(std::u32string_view text, Span cut, std::size_t min_chars, std::size_t max_chars);

/// Picks one question/answer pair uniformly. Returns nullopt for empty text, an
/// odd line count, or (with a pattern) no matching pair.
std::optional<Document> extract_qa_pair(const RawDocument& raw, Rng& rng,
                                        const std::optional<QaPattern>& pattern = std::nullopt);

}  // namespace forge
