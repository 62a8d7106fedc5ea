#include "forge/corpus.hpp"

#include <algorithm>
#include <stdexcept>

namespace forge {

namespace fs = std::filesystem;

CorpusKind::CorpusKind(CorpusTag tag, std::string custom_name)
    : tag_(tag), custom_name_(tag == CorpusTag::custom ? std::move(custom_name) : std::string{}) {}

const std::vector<CorpusKind>& CorpusKind::builtin() {
    static const std::vector<CorpusKind> kinds = {
        CorpusKind(CorpusTag::wikipedia), CorpusKind(CorpusTag::free_law),
        CorpusKind(CorpusTag::arxiv),     CorpusKind(CorpusTag::stack_exchange),
        CorpusKind(CorpusTag::dm_math),   CorpusKind(CorpusTag::github),
    };
    return kinds;
}

std::string CorpusKind::name() const {
    switch (tag_) {
        case CorpusTag::wikipedia: return "Wikipedia";
        case CorpusTag::free_law: return "FreeLaw";
        case CorpusTag::arxiv: return "ArXiv";
        case CorpusTag::stack_exchange: return "StackExchange";
        case CorpusTag::dm_math: return "DMMath";
        case CorpusTag::github: return "Github";
        case CorpusTag::custom: return "custom:" + custom_name_;
    }
    return "custom:" + custom_name_;
}

CorpusKind CorpusKind::parse(std::string_view name) {
    if (starts_with_icase(name, "custom:")) return custom(std::string(name.substr(7)));
    std::string key;
    for (char c : ascii_lower(name)) {
        if (c != ' ' && c != '_' && c != '-') key.push_back(c);
    }
    if (key == "wikipedia" || key == "wiki") return CorpusKind(CorpusTag::wikipedia);
    if (key == "freelaw") return CorpusKind(CorpusTag::free_law);
    if (key == "arxiv") return CorpusKind(CorpusTag::arxiv);
    if (key == "stackexchange") return CorpusKind(CorpusTag::stack_exchange);
    if (key == "dmmath" || key == "dmmathematics") return CorpusKind(CorpusTag::dm_math);
    if (key == "github") return CorpusKind(CorpusTag::github);
    return custom(std::string(name));
}

Document make_whole_document(const RawDocument& raw) {
    Document doc;
    doc.id = raw.id;
    doc.corpus = raw.corpus;
    doc.text = raw.text;
    doc.char_count = scalar_count(raw.text);
    doc.parent_id = raw.id;
    return doc;
}

json to_json(const Document& doc) {
    json j;
    j["id"] = doc.id;
    j["corpus"] = doc.corpus.name();
    j["text"] = doc.text;
    j["char_count"] = doc.char_count;
    if (doc.source_span) {
        j["source_span"] = json::array({doc.source_span->start, doc.source_span->end});
    } else {
        j["source_span"] = "whole";
    }
    j["parent_id"] = doc.parent_id;
    return j;
}

Document document_from_json(const json& j) {
    Document doc;
    doc.id = j.at("id").get<std::string>();
    doc.corpus = CorpusKind::parse(j.at("corpus").get<std::string>());
    doc.text = j.at("text").get<std::string>();
    doc.char_count = j.contains("char_count") ? j["char_count"].get<std::size_t>() : scalar_count(doc.text);
    if (j.contains("source_span") && j["source_span"].is_array()) {
        doc.source_span = Span{j["source_span"][0].get<std::size_t>(), j["source_span"][1].get<std::size_t>()};
    }
    doc.parent_id = j.value("parent_id", doc.id);
    return doc;
}

SamplingPolicy SamplingPolicy::window(std::size_t min_chars, std::size_t max_chars, bool snap) {
    SamplingPolicy p;
    p.mode = SamplingMode::window;
    p.min_chars = min_chars;
    p.max_chars = max_chars;
    p.snap_boundaries = snap;
    return p;
}

SamplingPolicy SamplingPolicy::qa_pair() {
    SamplingPolicy p;
    p.mode = SamplingMode::qa_pair;
    return p;
}

SamplingPolicy SamplingPolicy::whole() { return SamplingPolicy{}; }

SamplingPolicy SamplingPolicy::default_for(const CorpusKind& corpus) {
    switch (corpus.tag()) {
        case CorpusTag::arxiv:
        case CorpusTag::free_law: return window(2000, 3500);
        case CorpusTag::dm_math: return qa_pair();
        default: return whole();
    }
}

void SamplingPolicy::validate() const {
    if (mode == SamplingMode::window && (min_chars == 0 || min_chars > max_chars)) {
        throw std::invalid_argument("window sampling requires 0 < min_chars <= max_chars");
    }
}

CorpusFormat parse_corpus_format(std::string_view name) {
    std::string key = ascii_lower(name);
    if (key == "jsonl") return CorpusFormat::jsonl;
    if (key == "plain-text-per-file" || key == "plain" || key == "text" || key == "txt") {
        return CorpusFormat::plain_text;
    }
    throw std::invalid_argument("unknown corpus format: " + std::string(name));
}

namespace {

std::string clean_text(std::string_view bytes) {
    std::string text = sanitize_utf8(bytes);
    std::string out;
    out.reserve(text.size());
    for (std::size_t i = 0; i < text.size(); ++i) {
        if (text[i] == '\r' && i + 1 < text.size() && text[i + 1] == '\n') continue;
        out.push_back(text[i]);
    }
    return out;
}

std::vector<fs::path> sorted_files(const fs::path& dir, bool jsonl_only) {
    std::vector<fs::path> files;
    std::error_code ec;
    for (fs::recursive_directory_iterator it(dir, ec), end; it != end; it.increment(ec)) {
        if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
        if (!it->is_regular_file()) continue;
        if (jsonl_only && it->path().extension() != ".jsonl") continue;
        files.push_back(it->path());
    }
    if (ec) throw IoError("cannot list " + dir.string() + ": " + ec.message());
    std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
        return fs::relative(a, dir).generic_string() < fs::relative(b, dir).generic_string();
    });
    return files;
}

void load_jsonl_file(const fs::path& file, const std::string& id_prefix, const CorpusKind& corpus,
                     LoadReport& report, const std::function<void(RawDocument)>& on_document) {
    auto jr = read_jsonl(file, [&](const json& rec, std::size_t index) {
        auto text_it = rec.find("text");
        if (text_it == rec.end() || !text_it->is_string()) {
            ++report.skipped;
            report.errors.push_back(file.filename().string() + ":" + std::to_string(index) +
                                    ": missing string field 'text'");
            return;
        }
        std::string text = clean_text(text_it->get<std::string>());
        if (text.empty()) {
            ++report.skipped;
            report.errors.push_back(file.filename().string() + ":" + std::to_string(index) + ": empty text");
            return;
        }
        RawDocument raw;
        raw.id = id_prefix + std::to_string(index);
        raw.corpus = corpus;
        raw.text = std::move(text);
        if (auto meta = rec.find("meta"); meta != rec.end() && meta->is_object()) {
            for (const auto& [k, v] : meta->items()) {
                raw.metadata[k] = v.is_string() ? v.get<std::string>() : dump_line(v);
            }
        }
        if (auto id = rec.find("id"); id != rec.end() && id->is_string()) {
            raw.metadata["source_id"] = id->get<std::string>();
        }
        ++report.read;
        on_document(std::move(raw));
    });
    report.skipped += jr.malformed;
    report.errors.insert(report.errors.end(), jr.errors.begin(), jr.errors.end());
}

}  // namespace

LoadReport load_corpus(const fs::path& source, const CorpusKind& corpus, CorpusFormat format,
                       const std::function<void(RawDocument)>& on_document) {
    std::error_code ec;
    if (!fs::exists(source, ec)) throw IoError("corpus source does not exist: " + source.string());
    LoadReport report;
    const std::string prefix = corpus.name() + "/";
    const bool is_dir = fs::is_directory(source, ec);

    if (format == CorpusFormat::jsonl) {
        if (!is_dir) {
            load_jsonl_file(source, prefix, corpus, report, on_document);
            return report;
        }
        for (const auto& file : sorted_files(source, true)) {
            std::string rel = fs::relative(file, source).generic_string();
            load_jsonl_file(file, prefix + rel + "/", corpus, report, on_document);
        }
        return report;
    }

    std::vector<fs::path> files = is_dir ? sorted_files(source, false) : std::vector<fs::path>{source};
    for (const auto& file : files) {
        std::string rel = is_dir ? fs::relative(file, source).generic_string() : file.filename().string();
        std::string text = clean_text(read_file(file));
        if (text.empty()) {
            ++report.skipped;
            report.errors.push_back(rel + ": empty file");
            continue;
        }
        RawDocument raw;
        raw.id = prefix + rel;
        raw.corpus = corpus;
        raw.text = std::move(text);
        ++report.read;
        on_document(std::move(raw));
    }
    return report;
}

namespace {

bool is_terminal(char32_t c) { return c == U'.' || c == U'!' || c == U'?'; }
bool is_ws(char32_t c) { return c == U' ' || c == U'\t' || c == U'\n' || c == U'\r' || c == U'\f' || c == U'\v'; }

// True when position p (0..n) sits right after a sentence or paragraph break.
bool is_boundary_end(std::u32string_view t, std::size_t p) {
    if (p == 0 || p == t.size()) return true;
    char32_t prev = t[p - 1];
    if (prev == U'\n') return true;
    return is_terminal(prev) && is_ws(t[p]);
}

Document slice(const RawDocument& raw, const std::u32string& scalars, Span span) {
    Document doc;
    doc.id = raw.id;
    doc.corpus = raw.corpus;
    doc.text = encode_utf8(std::u32string_view(scalars).substr(span.start, span.length()));
    doc.char_count = span.length();
    doc.source_span = span;
    doc.parent_id = raw.id;
    return doc;
}

}  // namespace

Span snap_window(std::u32string_view text, Span cut, std::size_t min_chars, std::size_t max_chars) {
    if (cut.start >= cut.end || cut.end > text.size()) return cut;

    // Start: back to the beginning of the sentence containing cut.start.
    std::size_t s = cut.start;
    std::size_t b = s;
    while (b > 0 && !is_boundary_end(text, b)) --b;
    if (b < s) {
        s = b;
        while (s < cut.start && is_ws(text[s])) ++s;
    } else {
        while (s < cut.end && is_ws(text[s])) ++s;
    }

    // End: back to the last boundary inside the window.
    std::size_t e = cut.end;
    while (e > s && !is_boundary_end(text, e)) --e;
    if (e <= s) return cut;

    std::size_t len = e - s;
    if (len < min_chars || len > max_chars) return cut;
    return Span{s, e};
}

std::optional<Document> extract_qa_pair(const RawDocument& raw, Rng& rng, const std::optional<QaPattern>& pattern) {
    if (raw.text.empty()) return std::nullopt;
    const std::u32string scalars = decode_utf8(raw.text);

    // Line ranges in scalar offsets, newline excluded.
    std::vector<Span> lines;
    std::size_t start = 0;
    for (std::size_t i = 0; i < scalars.size(); ++i) {
        if (scalars[i] == U'\n') {
            lines.push_back({start, i});
            start = i + 1;
        }
    }
    if (start < scalars.size()) lines.push_back({start, scalars.size()});

    std::vector<std::pair<Span, Span>> pairs;
    if (pattern) {
        const std::regex q(pattern->question);
        const std::regex a(pattern->answer);
        auto line_text = [&](Span s) { return encode_utf8(std::u32string_view(scalars).substr(s.start, s.length())); };
        for (std::size_t i = 0; i + 1 < lines.size(); ++i) {
            if (std::regex_search(line_text(lines[i]), q) && std::regex_search(line_text(lines[i + 1]), a)) {
                pairs.emplace_back(lines[i], lines[i + 1]);
                ++i;
            }
        }
    } else {
        if (lines.empty() || lines.size() % 2 != 0) return std::nullopt;
        for (std::size_t i = 0; i < lines.size(); i += 2) pairs.emplace_back(lines[i], lines[i + 1]);
    }
    if (pairs.empty()) return std::nullopt;

    const auto& [question, answer] = pairs[rng.below(pairs.size())];
    return slice(raw, scalars, Span{question.start, answer.end});
}

SampleResult sample_document(const RawDocument& raw, const SamplingPolicy& policy, Rng& rng) {
    policy.validate();
    switch (policy.mode) {
        case SamplingMode::whole:
            return {make_whole_document(raw), SampleNote::ok};
        case SamplingMode::qa_pair: {
            auto doc = extract_qa_pair(raw, rng, policy.qa_pattern);
            if (!doc) return {std::nullopt, SampleNote::no_qa_pair};
            return {std::move(doc), SampleNote::ok};
        }
        case SamplingMode::window: break;
    }

    const std::u32string scalars = decode_utf8(raw.text);
    const std::size_t n = scalars.size();
    if (n < policy.min_chars) return {make_whole_document(raw), SampleNote::fallback_whole};

    const std::size_t length = rng.between(policy.min_chars, std::min(policy.max_chars, n));
    const std::size_t start = rng.below(n - length + 1);
    Span cut{start, start + length};
    if (policy.snap_boundaries) cut = snap_window(scalars, cut, policy.min_chars, policy.max_chars);
    return {slice(raw, scalars, cut), SampleNote::ok};
}

}  // namespace forge
