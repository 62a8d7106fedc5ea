#include "forge/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "forge/seeds.hpp"
#include "forge/task.hpp"
#include "forge/task_forge.hpp"
#include "forge/text.hpp"
#include "forge/tokens.hpp"

namespace forge {

namespace {

constexpr std::string_view kInversionLead = "For the given task, write a human-written text";
constexpr std::string_view kJudgeLead = "Decide whether the response actually answers the task.";

std::string first_line(std::string_view s) {
    auto nl = s.find('\n');
    return std::string(nl == std::string_view::npos ? s : s.substr(0, nl));
}

std::vector<std::string> sentences(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        cur.push_back(c);
        const bool end_mark = (c == '.' || c == '!' || c == '?') &&
                              (i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\n');
        if (end_mark || c == '\n') {
            std::string s = trim(cur);
            if (!s.empty()) out.push_back(std::move(s));
            cur.clear();
        }
    }
    std::string s = trim(cur);
    if (!s.empty()) out.push_back(std::move(s));
    return out;
}

std::vector<std::string> words_of(std::string_view sentence, std::size_t min_len) {
    std::vector<std::string> out;
    std::string w;
    auto flush = [&] {
        if (w.size() >= min_len && std::find(out.begin(), out.end(), w) == out.end()) out.push_back(w);
        w.clear();
    };
    for (char c : sentence) {
        if (std::isalnum(static_cast<unsigned char>(c)) || static_cast<unsigned char>(c) >= 0x80) w.push_back(c);
        else flush();
    }
    flush();
    return out;
}

std::string grounded_task(std::string_view text, Rng& rng) {
    const auto sents = sentences(text);
    if (sents.empty()) return "#instruction#: Repeat the text.\n#input#:\n#output#: " + trim(text);

    // A two-line text is a question/answer pair.
    const auto lines = split_lines(trim(text));
    if (lines.size() == 2) {
        return serialize(Task{"Solve the following problem.", trim(lines[0]), trim(lines[1])});
    }

    const std::size_t i = rng.below(sents.size());
    const std::string& s = sents[i];
    switch (rng.below(7)) {
        case 0:
            return serialize(Task{"Summarize the main point of the text.", "", sents.front()});
        case 1:
            return serialize(Task{"Rewrite the following sentence in plain words.", s, s});
        case 2: {
            auto ws = words_of(s, 4);
            std::string longest = ws.empty() ? s : *std::max_element(ws.begin(), ws.end(), [](auto& a, auto& b) {
                return a.size() < b.size();
            });
            return serialize(Task{"Identify the key term in the sentence.", s, longest});
        }
        case 3:
            if (i + 1 < sents.size()) {
                return serialize(Task{"Continue the passage with the sentence that follows.", s, sents[i + 1]});
            }
            return serialize(Task{"Quote the closing sentence of the text.", "", sents.back()});
        case 4: {
            auto ws = words_of(s, 6);
            if (ws.size() > 5) ws.resize(5);
            std::string joined;
            for (const auto& w : ws) joined += (joined.empty() ? "" : ", ") + w;
            if (joined.empty()) joined = s;
            return serialize(Task{"List the keywords of the following sentence.", s, joined});
        }
        case 5:
            return serialize(Task{"Extract the opening sentence of the document.", "", sents.front()});
        default:
            return serialize(Task{"Explain the statement below.", s,
                                  s + (sents.size() > 1 ? "\n" + sents[(i + 1) % sents.size()] : std::string())});
    }
}

std::string generation_reply(const std::string& prompt, std::string_view text) {
    Rng rng(derive_seed(0x7a5c, prompt));
    const std::uint64_t roll = rng.below(20);
    if (roll < 2) return "Here is a task I designed for this text: describe what it is about.";
    if (roll < 5) {
        return serialize(Task{"Describe the festival mentioned in the text.", "",
                              "The lantern parade of Velmora draws ten thousand dancers every spring."});
    }
    return grounded_task(text, rng);
}

std::string inversion_reply(const std::string& prompt) {
    // The task under inversion is the last serialized task before the final marker.
    std::string_view p = prompt;
    auto end = p.rfind("\n#text#:");
    auto start = p.rfind("#instruction#:", end);
    if (end == std::string_view::npos || start == std::string_view::npos) return "An untitled note.";
    ParseResult parsed = parse_task(p.substr(start, end - start));
    const auto* task = std::get_if<Task>(&parsed);
    if (!task) return "An untitled note.";
    std::string doc;
    if (!task->input.empty()) doc += task->input + "\n\n";
    doc += task->output;
    return "#text#: \"" + doc + "\"";
}

std::string discriminator_reply(const std::string& prompt) {
    Rng rng(derive_seed(0xd15c, prompt));
    const std::uint64_t roll = rng.below(12);
    if (roll == 0) return "unsure";
    if (roll == 1) return "Invalid, the task does not follow from the text.";
    std::string_view p = prompt;
    auto text_at = p.find("Text:\n");
    auto task_at = p.rfind("\n\nTask:\n");
    if (text_at == std::string_view::npos || task_at == std::string_view::npos || task_at < text_at) return "invalid";
    std::string_view doc = p.substr(text_at + 6, task_at - text_at - 6);
    ParseResult parsed = parse_task(p.substr(task_at + 8));
    const auto* task = std::get_if<Task>(&parsed);
    if (!task) return "invalid";
    return task_score(doc, *task).score >= 0.8 ? "Valid." : "Invalid, the output is not grounded in the text.";
}

}  // namespace

std::string synthetic_reply(const std::string& prompt) {
    static const std::string generation_lead = first_line(PromptTemplate::generation_default().text);
    static const std::string generator_prefix =
        std::string(MetaInstruction::kGeneratorText) + std::string(kPromptSeparator);

    if (prompt.starts_with(generation_lead)) {
        auto text = extract_target_text(prompt);
        return generation_reply(prompt, text ? *text : std::string_view(prompt));
    }
    if (prompt.starts_with(generator_prefix)) {
        return generation_reply(prompt, std::string_view(prompt).substr(generator_prefix.size()));
    }
    if (prompt.starts_with(kInversionLead)) return inversion_reply(prompt);
    if (prompt.starts_with(MetaInstruction::kDiscriminatorText)) return discriminator_reply(prompt);
    if (prompt.starts_with(kJudgeLead)) return "yes";

    Rng rng(derive_seed(0xec40, prompt));
    if (rng.below(12) == 0) return "I cannot answer this without more context.";
    return "Here is my answer.\n" + prompt;
}

std::vector<double> synthetic_embedding(const std::string& text, std::size_t dim) {
    TokenSet tokens = tokenize(text);
    if (tokens.empty()) return MockBackend::hashed_unit_vector(text, dim);
    std::vector<double> v(dim, 0.0);
    for (const auto& t : tokens.tokens()) {
        auto u = MockBackend::hashed_unit_vector("tok:" + t, dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] += u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return MockBackend::hashed_unit_vector(text, dim);
    for (auto& x : v) x /= norm;
    return v;
}

std::shared_ptr<MockBackend> make_synthetic_backend(std::size_t dim) {
    auto backend = std::make_shared<MockBackend>(dim);
    backend->set_fallback(synthetic_reply);
    backend->set_embedder([dim](const std::string& text) { return synthetic_embedding(text, dim); });
    return backend;
}

}  // namespace forge
