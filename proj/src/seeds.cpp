#include "forge/seeds.hpp"

#include <algorithm>
#include <mutex>

#include "forge/parallel.hpp"

namespace forge {

std::string_view to_string(SeedView v) { return v == SeedView::document_view ? "document_view" : "task_view"; }
std::string_view to_string(SeedOrigin o) { return o == SeedOrigin::manual ? "manual" : "model_expanded"; }

SeedView parse_seed_view(std::string_view s) {
    if (s == "document_view") return SeedView::document_view;
    if (s == "task_view") return SeedView::task_view;
    throw std::invalid_argument("unknown seed view: " + std::string(s));
}

SeedOrigin parse_seed_origin(std::string_view s) {
    if (s == "manual") return SeedOrigin::manual;
    if (s == "model_expanded") return SeedOrigin::model_expanded;
    throw std::invalid_argument("unknown seed origin: " + std::string(s));
}

json to_json(const StoredSeed& seed) {
    const auto& e = seed.example;
    return json{{"id", seed.id},
                {"view", to_string(e.view)},
                {"origin", to_string(e.origin)},
                {"corpus", e.document.corpus.name()},
                {"document", to_json(e.document)},
                {"task", to_json(e.task)}};
}

StoredSeed stored_seed_from_json(const json& j, std::size_t line_index) {
    StoredSeed s;
    s.id = j.value("id", std::string{});
    auto& e = s.example;
    e.view = parse_seed_view(j.value("view", std::string("document_view")));
    e.origin = parse_seed_origin(j.value("origin", std::string("manual")));
    CorpusKind corpus = CorpusKind::parse(j.value("corpus", std::string("custom:seed")));
    const json& doc = j.at("document");
    if (doc.is_string()) {
        RawDocument raw{"seed-doc/" + corpus.name() + "/" + std::to_string(line_index), corpus,
                        doc.get<std::string>(), {}};
        e.document = make_whole_document(raw);
    } else {
        e.document = document_from_json(doc);
    }
    e.task = task_from_json(j.at("task"));
    return s;
}

bool SeedFilter::matches(const SeedExample& e) const {
    if (corpus && !(e.document.corpus == *corpus)) return false;
    if (view && e.view != *view) return false;
    if (origin && e.origin != *origin) return false;
    return true;
}

SeedPool::SeedPool(const SeedPool& other) {
    std::shared_lock lock(other.mu_);
    seeds_ = other.seeds_;
    keys_ = other.keys_;
    next_id_ = other.next_id_;
}

SeedPool& SeedPool::operator=(const SeedPool& other) {
    if (this == &other) return *this;
    std::scoped_lock lock(mu_, other.mu_);
    seeds_ = other.seeds_;
    keys_ = other.keys_;
    next_id_ = other.next_id_;
    return *this;
}

std::string SeedPool::register_seed(SeedExample example) {
    validate(example.task);
    std::unique_lock lock(mu_);
    auto key = std::make_pair(example.document.id, example.task.instruction);
    if (keys_.contains(key)) {
        throw DuplicateSeedError("seed already registered for document " + example.document.id);
    }
    std::string id = "seed-" + std::to_string(next_id_++);
    keys_.emplace(std::move(key), seeds_.size());
    seeds_.push_back({id, std::move(example)});
    return id;
}

void SeedPool::insert(StoredSeed seed) {
    validate(seed.example.task);
    std::unique_lock lock(mu_);
    auto key = std::make_pair(seed.example.document.id, seed.example.task.instruction);
    if (keys_.contains(key)) {
        throw DuplicateSeedError("seed already registered for document " + seed.example.document.id);
    }
    if (seed.id.empty()) seed.id = "seed-" + std::to_string(next_id_++);
    if (seed.id.starts_with("seed-")) {
        try {
            next_id_ = std::max<std::uint64_t>(next_id_, std::stoull(seed.id.substr(5)) + 1);
        } catch (const std::exception&) {
        }
    }
    keys_.emplace(std::move(key), seeds_.size());
    seeds_.push_back(std::move(seed));
}

std::size_t SeedPool::size() const {
    std::shared_lock lock(mu_);
    return seeds_.size();
}

std::size_t SeedPool::count(const CorpusKind& corpus, SeedView view) const {
    std::shared_lock lock(mu_);
    return static_cast<std::size_t>(std::count_if(seeds_.begin(), seeds_.end(), [&](const StoredSeed& s) {
        return s.example.document.corpus == corpus && s.example.view == view;
    }));
}

std::vector<StoredSeed> SeedPool::eligible(const SeedFilter& filter) const {
    std::shared_lock lock(mu_);
    std::vector<StoredSeed> out;
    for (const auto& s : seeds_) {
        if (filter.matches(s.example)) out.push_back(s);
    }
    return out;
}

std::vector<StoredSeed> SeedPool::all() const {
    std::shared_lock lock(mu_);
    return seeds_;
}

std::string SeedPool::to_jsonl() const {
    std::shared_lock lock(mu_);
    std::string out;
    for (const auto& s : seeds_) out += dump_line(to_json(s)) + "\n";
    return out;
}

SeedPool SeedPool::load(const std::filesystem::path& path) {
    SeedPool pool;
    pool.merge_from(path);
    return pool;
}

void SeedPool::merge_from(const std::filesystem::path& path) {
    auto report = read_jsonl(path, [&](const json& j, std::size_t index) {
        try {
            insert(stored_seed_from_json(j, index));
        } catch (const json::exception& e) {
            throw IoError(path.string() + ":" + std::to_string(index) + ": bad seed record: " + e.what());
        }
    });
    if (report.malformed > 0) throw IoError(path.string() + ": " + report.errors.front());
}

std::vector<StoredSeed> select_demonstrations(const SeedPool& pool, std::size_t k, const SeedFilter& filter, Rng& rng) {
    if (k == 0) return {};
    std::vector<StoredSeed> candidates = pool.eligible(filter);
    if (candidates.size() < k) throw DemonstrationShortfall(k, candidates.size());
    // Partial Fisher-Yates: the first k slots end up a uniform random k-subset
    // in uniform random order.
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t j = i + rng.below(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
    }
    candidates.resize(k);
    return candidates;
}

// ---------------------------------------------------------------- templates

namespace {

constexpr std::string_view kGenerationTemplate =
    "For the given text, design a task.\n"
    "Each task contains three fields, instruction, input, and output. instruction defines a the task in natural "
    "language.\n"
    "Instruction is a complete definition of how an input text (e.g., a sentence or a document) is expected to be "
    "mapped to an output text.\n"
    "Requiring instruction, input and output are derived from text wherever possible.\n"
    "Input can be empty to indicate that the task has no input.\n"
    "Instruction must be in imperative sentence formal.\n"
    "Here are demonstrations where your response should be as different from them as possible.\n"
    "{demonstrations}\n"
    "#text#: \"{text}\"";

constexpr std::string_view kInversionTemplate =
    "For the given task, write a human-written text from which the task could have been designed.\n"
    "The text should read like a real document, such as an article, a forum post, a record or a source file.\n"
    "The instruction, input and output of the task should be derivable from the text.\n"
    "Respond with the text only.\n"
    "Here are demonstrations.\n"
    "{demonstrations}\n"
    "{task}\n"
    "#text#:";

// Replaces `{name}` slots in one pass so slot-like text inside values is left alone.
std::string fill_slots(std::string_view tmpl, const std::map<std::string, std::string>& values) {
    std::string out;
    out.reserve(tmpl.size() + 256);
    std::size_t i = 0;
    while (i < tmpl.size()) {
        if (tmpl[i] == '{') {
            std::size_t close = tmpl.find('}', i + 1);
            if (close != std::string_view::npos) {
                auto it = values.find(std::string(tmpl.substr(i + 1, close - i - 1)));
                if (it != values.end()) {
                    out += it->second;
                    i = close + 1;
                    continue;
                }
            }
        }
        out.push_back(tmpl[i++]);
    }
    return out;
}

std::size_t occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t p = hay.find(needle); p != std::string_view::npos; p = hay.find(needle, p + 1)) ++n;
    return n;
}

}  // namespace

PromptTemplate PromptTemplate::generation_default() { return {std::string(kGenerationTemplate)}; }
PromptTemplate PromptTemplate::inversion_default() { return {std::string(kInversionTemplate)}; }

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
    PromptTemplate t{read_file(path)};
    while (!t.text.empty() && (t.text.back() == '\n' || t.text.back() == '\r')) t.text.pop_back();
    if (occurrences(t.text, "{demonstrations}") != 1) {
        throw std::invalid_argument(path.string() + ": template needs exactly one {demonstrations} slot");
    }
    const bool generation = occurrences(t.text, "{text}") == 1;
    const bool inversion = occurrences(t.text, "{task}") == 1;
    if (!generation && !inversion) {
        throw std::invalid_argument(path.string() + ": template needs exactly one {text} or {task} slot");
    }
    return t;
}

std::string PromptTemplate::hash() const { return sha256_hex(text).substr(0, 16); }

PromptText assemble_generation_prompt(const Document& doc, const std::vector<StoredSeed>& demos,
                                      const PromptTemplate& tmpl) {
    if (demos.empty()) throw std::invalid_argument("assemble_generation_prompt: no demonstrations");
    PromptText prompt;
    std::string blocks;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        if (i > 0) blocks += "\n\n";
        blocks += "Demonstration " + std::to_string(i + 1) + ":\n";
        blocks += "Text: \"" + demos[i].example.document.text + "\"\n";
        blocks += serialize(demos[i].example.task);
        prompt.demo_ids.push_back(demos[i].id);
    }
    prompt.text = fill_slots(tmpl.text, {{"demonstrations", blocks}, {"text", doc.text}});
    prompt.target_doc_id = doc.id;
    return prompt;
}

std::optional<std::string> extract_target_text(std::string_view prompt) {
    std::size_t pos = prompt.find(kTargetTextMarker);
    while (pos != std::string_view::npos && pos != 0 && prompt[pos - 1] != '\n') {
        pos = prompt.find(kTargetTextMarker, pos + 1);
    }
    if (pos == std::string_view::npos) return std::nullopt;
    std::string_view payload = prompt.substr(pos + kTargetTextMarker.size());
    if (payload.empty() || payload.back() != '"') return std::nullopt;
    payload.remove_suffix(1);
    return std::string(payload);
}

PromptText assemble_inversion_prompt(const Task& task, const std::vector<StoredSeed>& demos,
                                     const PromptTemplate& tmpl) {
    if (demos.empty()) throw std::invalid_argument("assemble_inversion_prompt: no demonstrations");
    PromptText prompt;
    std::string blocks;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        if (i > 0) blocks += "\n\n";
        blocks += "Demonstration " + std::to_string(i + 1) + ":\n";
        blocks += serialize(demos[i].example.task);
        blocks += "\n#text#: \"" + demos[i].example.document.text + "\"";
        prompt.demo_ids.push_back(demos[i].id);
    }
    prompt.text = fill_slots(tmpl.text, {{"demonstrations", blocks}, {"task", serialize(task)}});
    return prompt;
}

std::string clean_inverted_document(std::string_view completion) {
    std::string text = trim(completion);
    if (text.starts_with("#text#:")) text = trim(std::string_view(text).substr(7));
    if (text.size() >= 2 && text.front() == '"' && text.back() == '"') text = trim(std::string_view(text).substr(1, text.size() - 2));
    return text;
}

// ---------------------------------------------------------------- expansion

ExpansionReport expand_document_view(SeedPool& pool, const std::vector<Document>& documents, Gateway& gateway,
                                     const ExpansionOptions& options) {
    struct Outcome {
        std::optional<Task> task;
        bool parse_failed = false;
        std::string error;
    };
    std::vector<Outcome> outcomes(documents.size());

    parallel_for(documents.size(), gateway.max_parallel(), [&](std::size_t i) {
        const Document& doc = documents[i];
        Outcome& out = outcomes[i];
        Rng rng(derive_seed(options.seed, "expand/" + doc.id));
        SeedFilter filter{doc.corpus, SeedView::document_view, SeedOrigin::manual};
        try {
            for (int attempt = 0; attempt < std::max(1, options.parse_attempts); ++attempt) {
                auto demos = select_demonstrations(pool, options.k, filter, rng);
                auto prompt = assemble_generation_prompt(doc, demos, options.prompt);
                ParseResult parsed = options.parser(gateway.complete(prompt.text, options.params));
                if (auto* task = std::get_if<Task>(&parsed)) {
                    out.task = std::move(*task);
                    out.parse_failed = false;
                    return;
                }
                out.parse_failed = true;
            }
        } catch (const std::exception& e) {
            out.error = doc.id + ": " + e.what();
        }
    });

    ExpansionReport report;
    for (std::size_t i = 0; i < documents.size(); ++i) {
        Outcome& out = outcomes[i];
        if (!out.error.empty()) {
            report.errors.push_back(out.error);
        } else if (!out.task) {
            ++report.parse_failures;
        } else {
            SeedExample ex{documents[i], std::move(*out.task), SeedView::document_view, SeedOrigin::model_expanded};
            try {
                std::string id = pool.register_seed(ex);
                report.added.push_back({id, std::move(ex)});
            } catch (const DuplicateSeedError&) {
                ++report.duplicates;
            }
        }
    }
    return report;
}

ExpansionReport invert_tasks(const std::vector<Task>& tasks, SeedPool& pool, Gateway& gateway,
                             const InversionOptions& options) {
    for (const auto& t : tasks) validate(t);

    const std::size_t reps = std::max<std::size_t>(1, options.inversions_per_task);
    const std::size_t total = tasks.size() * reps;
    struct Outcome {
        std::string text;
        std::string error;
    };
    std::vector<Outcome> outcomes(total);

    parallel_for(total, gateway.max_parallel(), [&](std::size_t n) {
        const std::size_t t = n / reps;
        const std::size_t r = n % reps;
        Rng rng(derive_seed(options.seed, "invert/" + std::to_string(t) + "/" + std::to_string(r)));
        SeedFilter filter{std::nullopt, SeedView::task_view, SeedOrigin::manual};
        try {
            auto demos = select_demonstrations(pool, options.k, filter, rng);
            auto prompt = assemble_inversion_prompt(tasks[t], demos, options.prompt);
            outcomes[n].text = clean_inverted_document(gateway.complete(prompt.text, options.params));
        } catch (const std::exception& e) {
            outcomes[n].error = "task " + std::to_string(t) + ": " + e.what();
        }
    });

    ExpansionReport report;
    for (std::size_t n = 0; n < total; ++n) {
        Outcome& out = outcomes[n];
        if (!out.error.empty()) {
            report.errors.push_back(out.error);
            continue;
        }
        if (out.text.empty()) {
            ++report.parse_failures;
            continue;
        }
        RawDocument raw{"inverted/" + std::to_string(n / reps) + "/" + std::to_string(n % reps), options.corpus,
                        std::move(out.text), {}};
        SeedExample ex{make_whole_document(raw), tasks[n / reps], SeedView::task_view, SeedOrigin::model_expanded};
        try {
            std::string id = pool.register_seed(ex);
            report.added.push_back({id, std::move(ex)});
        } catch (const DuplicateSeedError&) {
            ++report.duplicates;
        }
    }
    return report;
}

}  // namespace forge
