#include "forge/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <set>
#include <sstream>
#include <stdexcept>

#include "forge/parallel.hpp"
#include "forge/text.hpp"
#include "forge/tokens.hpp"

namespace forge {

namespace {

std::string group_key(const TaskRecord& r, GroupBy g) {
    return g == GroupBy::all ? std::string(kAllGroup) : r.document.corpus.name();
}

template <typename StatsFn>
std::map<std::string, LengthRow> lengths_with(const std::vector<TaskRecord>& records, GroupBy group_by,
                                              StatsFn&& stats) {
    std::map<std::string, std::vector<const TaskRecord*>> groups;
    for (const auto& r : records) {
        if (!r.task) throw std::invalid_argument("length_stats: record " + r.id + " has no task");
        groups[group_key(r, group_by)].push_back(&r);
    }
    if (group_by == GroupBy::all) groups.try_emplace(std::string(kAllGroup));

    std::map<std::string, LengthRow> out;
    for (const auto& [key, members] : groups) {
        std::vector<double> ins, inp, outp;
        for (const TaskRecord* r : members) {
            ins.push_back(static_cast<double>(scalar_count(r->task->instruction)));
            inp.push_back(static_cast<double>(scalar_count(r->task->input)));
            outp.push_back(static_cast<double>(scalar_count(r->task->output)));
        }
        LengthRow row;
        row.count = members.size();
        row.instruction = stats(ins);
        row.input = stats(inp);
        row.output = stats(outp);
        out[key] = row;
    }
    return out;
}

std::string fixed(double v, int digits) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(digits) << v;
    return ss.str();
}

std::string pad_right(const std::string& s, std::size_t width) {
    std::size_t len = scalar_count(s);
    return len >= width ? s : s + std::string(width - len, ' ');
}

std::string render_aligned(const std::vector<std::vector<std::string>>& rows) {
    std::vector<std::size_t> widths;
    for (const auto& row : rows) {
        if (widths.size() < row.size()) widths.resize(row.size(), 0);
        for (std::size_t c = 0; c < row.size(); ++c) widths[c] = std::max(widths[c], scalar_count(row[c]));
    }
    std::string out;
    for (std::size_t r = 0; r < rows.size(); ++r) {
        std::string line;
        for (std::size_t c = 0; c < rows[r].size(); ++c) {
            if (c > 0) line += " | ";
            line += c + 1 == rows[r].size() ? rows[r][c] : pad_right(rows[r][c], widths[c]);
        }
        out += line + "\n";
        if (r == 0) {
            std::size_t total = 0;
            for (std::size_t c = 0; c < widths.size(); ++c) total += widths[c] + (c > 0 ? 3 : 0);
            out += std::string(total, '-') + "\n";
        }
    }
    return out;
}

json stats_json(const FieldStats& s) { return json{{"count", s.count}, {"mean", s.mean}, {"std", s.std}}; }

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json("n/a"); }

}  // namespace

std::map<std::string, LengthRow> length_stats(const std::vector<TaskRecord>& records, GroupBy group_by) {
    return lengths_with(records, group_by, [](const std::vector<double>& v) { return kernels::field_stats(v); });
}

std::map<std::string, LengthRow> length_stats_serial(const std::vector<TaskRecord>& records, GroupBy group_by) {
    return lengths_with(records, group_by, [](const std::vector<double>& v) { return kernels::field_stats_serial(v); });
}

std::string format_stats_cell(const FieldStats& s) {
    return std::to_string(std::llround(s.mean)) + " ± " + std::to_string(std::llround(s.std));
}

std::string format_stats_row(const LengthRow& row) {
    return std::to_string(row.count) + " | " + format_stats_cell(row.instruction) + " | " +
           format_stats_cell(row.input) + " | " + format_stats_cell(row.output);
}

std::string render_length_table(const std::map<std::string, LengthRow>& rows) {
    std::vector<std::vector<std::string>> cells;
    cells.push_back({"Group", "# of Examples", "Instruction Length", "Input Length", "Output Length"});
    for (const auto& [key, row] : rows) {
        cells.push_back({key, std::to_string(row.count), format_stats_cell(row.instruction),
                         format_stats_cell(row.input), format_stats_cell(row.output)});
    }
    return "# Lengths in Unicode characters, mean ± population standard deviation\n" + render_aligned(cells);
}

json length_report_json(const std::map<std::string, LengthRow>& rows) {
    json groups = json::object();
    for (const auto& [key, row] : rows) {
        groups[key] = json{{"count", row.count},
                           {"instruction", stats_json(row.instruction)},
                           {"input", stats_json(row.input)},
                           {"output", stats_json(row.output)},
                           {"row", format_stats_row(row)}};
    }
    return json{{"unit", "unicode_characters"}, {"std", "population"}, {"groups", groups}};
}

// ---------------------------------------------------------------- diversity

namespace {

const std::set<std::string, std::less<>>& imperative_verbs() {
    static const std::set<std::string, std::less<>> verbs = {
        "add", "adjust", "advise", "analyse", "analyze", "annotate", "answer", "apply", "arrange", "ask",
        "assess", "assign", "build", "calculate", "categorize", "change", "check", "choose", "cite", "clarify",
        "classify", "clean", "collect", "combine", "compare", "compile", "complete", "compose", "compute",
        "condense", "construct", "continue", "convert", "correct", "count", "craft", "create", "critique",
        "debug", "decide", "decode", "define", "delete", "derive", "describe", "design", "detect", "determine",
        "develop", "devise", "diagnose", "differentiate", "discuss", "distinguish", "divide", "draft", "draw",
        "edit", "elaborate", "eliminate", "encode", "enumerate", "estimate", "evaluate", "examine", "expand",
        "explain", "explore", "express", "extract", "fill", "filter", "find", "fix", "format", "formulate",
        "generate", "give", "group", "guess", "highlight", "identify", "illustrate", "implement", "improve",
        "indicate", "infer", "insert", "interpret", "investigate", "justify", "label", "list", "locate", "make",
        "map", "match", "measure", "mention", "merge", "modify", "name", "note", "obtain", "offer", "optimize",
        "order", "organize", "outline", "paraphrase", "parse", "pick", "plan", "point", "predict", "prepare",
        "present", "produce", "propose", "prove", "provide", "rank", "rate", "read", "recommend", "reconstruct",
        "recount", "reduce", "refactor", "reformulate", "rephrase", "replace", "report", "represent", "resolve",
        "respond", "restate", "retrieve", "return", "review", "revise", "rewrite", "rearrange", "score", "select",
        "separate", "show", "simplify", "solve", "sort", "specify", "split", "state", "suggest", "summarise",
        "summarize", "supply", "tag", "tell", "test", "transform", "translate", "trace", "turn", "update", "use",
        "validate", "verify", "write",
    };
    return verbs;
}

const std::set<std::string, std::less<>>& chunk_boundaries() {
    static const std::set<std::string, std::less<>> words = {
        "about", "above", "across", "after", "against", "along", "among", "around", "as", "at", "before",
        "behind", "below", "beneath", "beside", "between", "beyond", "by", "despite", "during", "except", "for",
        "from", "in", "inside", "into", "like", "near", "of", "off", "on", "onto", "out", "outside", "over", "per",
        "regarding", "since", "than", "through", "throughout", "to", "toward", "towards", "under", "until", "upon",
        "via", "with", "within", "without", "and", "or", "but", "nor", "so", "yet", "that", "which", "who", "whom",
        "whose", "where", "when", "why", "how", "what", "whether", "if", "because", "while", "using", "based",
        "according", "then", "is", "are", "was", "were", "be", "if", "unless",
    };
    return words;
}

const std::set<std::string, std::less<>>& chunk_stopwords() {
    static const std::set<std::string, std::less<>> words = {
        "a", "an", "the", "this", "that", "these", "those", "my", "your", "his", "her", "its", "our", "their",
        "me", "you", "him", "us", "them", "it", "following", "given", "each", "every", "some", "any", "all", "one",
        "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten", "several", "many", "few", "more",
        "most", "other", "such", "own", "same", "no", "not", "only", "very", "just", "both", "either", "neither",
        "i", "we", "they", "she", "he",
    };
    return words;
}

bool word_char(unsigned char c) { return std::isalnum(c) || c == '\'' || c == '-' || c >= 0x80; }

}  // namespace

std::optional<VerbNoun> HeuristicAnalyzer::analyze(std::string_view instruction) const {
    // Tokens are words; an empty string marks a punctuation boundary.
    std::vector<std::string> tokens;
    std::string word;
    for (char ch : trim(instruction)) {
        auto c = static_cast<unsigned char>(ch);
        if (word_char(c)) {
            word.push_back(static_cast<char>(std::tolower(c)));
            continue;
        }
        if (!word.empty()) tokens.push_back(std::move(word));
        word.clear();
        if (!std::isspace(c)) tokens.emplace_back();
    }
    if (!word.empty()) tokens.push_back(std::move(word));

    if (tokens.empty() || tokens.front().empty()) return std::nullopt;
    const std::string& verb = tokens.front();
    if (!imperative_verbs().contains(verb)) return std::nullopt;

    std::string head;
    for (std::size_t i = 1; i < tokens.size(); ++i) {
        const std::string& t = tokens[i];
        if (t.empty() || chunk_boundaries().contains(t)) break;
        if (chunk_stopwords().contains(t)) continue;
        if (std::all_of(t.begin(), t.end(), [](unsigned char c) { return std::isdigit(c); })) continue;
        head = t;
    }
    if (head.empty()) return std::nullopt;
    return VerbNoun{verb, head};
}

std::size_t DiversityProfile::pair_total() const {
    std::size_t n = 0;
    for (const auto& [_, c] : pairs) n += c;
    return n;
}

DiversityProfile verb_noun_profile(const std::vector<std::string>& instructions, const SyntacticAnalyzer& analyzer) {
    std::vector<std::optional<VerbNoun>> parsed(instructions.size());
    parallel_for(instructions.size(), hardware_threads(),
                 [&](std::size_t i) { parsed[i] = analyzer.analyze(instructions[i]); });
    DiversityProfile profile;
    for (auto& p : parsed) {
        if (p) ++profile.pairs[*p]; else ++profile.unparsed_count;
    }
    return profile;
}

json diversity_json(const DiversityProfile& profile, const std::string& analyzer_name, std::size_t top_verbs,
                    std::size_t top_nouns) {
    std::vector<std::pair<VerbNoun, std::size_t>> flat(profile.pairs.begin(), profile.pairs.end());
    std::stable_sort(flat.begin(), flat.end(), [](const auto& a, const auto& b) { return a.second > b.second; });

    std::map<std::string, std::size_t> verb_totals;
    for (const auto& [vn, c] : profile.pairs) verb_totals[vn.first] += c;
    std::vector<std::pair<std::string, std::size_t>> verbs(verb_totals.begin(), verb_totals.end());
    std::stable_sort(verbs.begin(), verbs.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (verbs.size() > top_verbs) verbs.resize(top_verbs);

    json inner = json::array();
    json outer = json::array();
    for (const auto& [verb, total] : verbs) {
        inner.push_back(json{{"verb", verb}, {"count", total}});
        std::size_t taken = 0;
        for (const auto& [vn, c] : flat) {
            if (vn.first != verb) continue;
            outer.push_back(json{{"verb", verb}, {"noun", vn.second}, {"count", c}});
            if (++taken == top_nouns) break;
        }
    }
    json pairs = json::array();
    for (const auto& [vn, c] : flat) pairs.push_back(json{{"verb", vn.first}, {"noun", vn.second}, {"count", c}});

    return json{{"analyzer", analyzer_name},
                {"total", profile.pair_total() + profile.unparsed_count},
                {"unparsed", profile.unparsed_count},
                {"pairs", pairs},
                {"rings", json{{"inner", inner}, {"outer", outer}}}};
}

// ---------------------------------------------------------------- relevance

RelevanceReport literal_relevance(const std::vector<TaskRecord>& records, GroupBy group_by) {
    std::vector<std::string_view> docs, inputs, outputs;
    for (const auto& r : records) {
        if (!r.task) throw std::invalid_argument("literal_relevance: record " + r.id + " has no task");
        docs.push_back(r.document.text);
        inputs.push_back(r.task->input);
        outputs.push_back(r.task->output);
    }
    std::vector<double> in_scores = kernels::overlap_scores(docs, inputs);
    std::vector<double> out_scores = kernels::overlap_scores(docs, outputs);

    struct Acc {
        std::size_t count = 0, in_n = 0, in_skip = 0, out_n = 0, out_skip = 0;
        double in_sum = 0.0, out_sum = 0.0;
    };
    std::map<std::string, Acc> acc;
    if (group_by == GroupBy::all) acc.try_emplace(std::string(kAllGroup));
    for (std::size_t i = 0; i < records.size(); ++i) {
        Acc& a = acc[group_key(records[i], group_by)];
        ++a.count;
        if (in_scores[i] < 0) ++a.in_skip; else { a.in_sum += in_scores[i]; ++a.in_n; }
        if (out_scores[i] < 0) ++a.out_skip; else { a.out_sum += out_scores[i]; ++a.out_n; }
    }

    RelevanceReport report;
    report.scorer_name = "literal-token-overlap";
    for (const auto& [key, a] : acc) {
        RelevanceGroup g;
        g.count = a.count;
        if (a.in_n > 0) g.literal_input = a.in_sum / static_cast<double>(a.in_n);
        g.literal_input_skipped = a.in_skip;
        if (a.out_n > 0) g.literal_output = a.out_sum / static_cast<double>(a.out_n);
        g.literal_output_skipped = a.out_skip;
        report.groups[key] = g;
    }
    return report;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw DimensionMismatchError("cosine: vector sizes differ");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double greedy_token_similarity(const std::vector<std::vector<double>>& reference,
                               const std::vector<std::vector<double>>& candidate) {
    if (reference.empty() || candidate.empty()) return 0.0;
    auto directed = [](const auto& from, const auto& to) {
        double sum = 0.0;
        for (const auto& x : from) {
            double best = -1.0;
            for (const auto& y : to) best = std::max(best, cosine_similarity(x, y));
            sum += best;
        }
        return sum / static_cast<double>(from.size());
    };
    const double recall = directed(reference, candidate);
    const double precision = directed(candidate, reference);
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

std::string semantic_scorer_name(SemanticMode mode, const std::string& model) {
    if (mode == SemanticMode::embedding_cosine) {
        return "embedding-cosine(" + model + "), substitute for BertScore";
    }
    return "token-greedy-embedding(" + model + "), BertScore-style greedy matching approximation";
}

void semantic_relevance(RelevanceReport& report, const std::vector<TaskRecord>& records, Gateway& gateway,
                        GroupBy group_by, SemanticMode mode) {
    report.scorer_name = semantic_scorer_name(mode, gateway.model_name());

    auto similarity = [&](const std::string& doc, const std::string& field) {
        if (mode == SemanticMode::embedding_cosine) return cosine_similarity(gateway.embed(doc), gateway.embed(field));
        auto embed_tokens = [&](const std::string& text) {
            std::vector<std::vector<double>> out;
            for (const auto& t : tokenize(text).tokens()) out.push_back(gateway.embed(t));
            return out;
        };
        return greedy_token_similarity(embed_tokens(doc), embed_tokens(field));
    };

    struct Item {
        std::optional<double> input;
        double output = 0.0;
        std::string error;
    };
    std::vector<Item> items(records.size());
    parallel_for(records.size(), gateway.max_parallel(), [&](std::size_t i) {
        const TaskRecord& r = records[i];
        try {
            if (!r.task) throw std::invalid_argument("record " + r.id + " has no task");
            if (!is_blank(r.task->input)) items[i].input = similarity(r.document.text, r.task->input);
            items[i].output = similarity(r.document.text, r.task->output);
        } catch (const std::exception& e) {
            items[i].error = r.id + ": " + e.what();
        }
    });

    struct Acc {
        double in_sum = 0.0, out_sum = 0.0;
        std::size_t in_n = 0, in_skip = 0, out_n = 0;
        std::string error;
    };
    std::map<std::string, Acc> acc;
    if (group_by == GroupBy::all) acc.try_emplace(std::string(kAllGroup));
    for (std::size_t i = 0; i < records.size(); ++i) {
        Acc& a = acc[group_key(records[i], group_by)];
        if (!items[i].error.empty()) {
            if (a.error.empty()) a.error = items[i].error;
            continue;
        }
        if (items[i].input) { a.in_sum += *items[i].input; ++a.in_n; } else { ++a.in_skip; }
        a.out_sum += items[i].output;
        ++a.out_n;
    }
    for (const auto& [key, a] : acc) {
        RelevanceGroup& g = report.groups[key];
        g.semantic_run = true;
        if (!a.error.empty()) {
            g.semantic_complete = false;
            g.semantic_error = a.error;
            g.semantic_input.reset();
            g.semantic_output.reset();
            continue;
        }
        g.semantic_complete = true;
        if (a.in_n > 0) g.semantic_input = a.in_sum / static_cast<double>(a.in_n);
        g.semantic_input_skipped = a.in_skip;
        if (a.out_n > 0) g.semantic_output = a.out_sum / static_cast<double>(a.out_n);
    }
}

json RelevanceReport::to_json() const {
    json groups_json = json::object();
    for (const auto& [key, g] : groups) {
        json j{{"count", g.count},
               {"literal_input_mean", opt_json(g.literal_input)},
               {"literal_input_skipped", g.literal_input_skipped},
               {"literal_output_mean", opt_json(g.literal_output)},
               {"literal_output_skipped", g.literal_output_skipped}};
        if (g.semantic_run) {
            j["semantic_complete"] = g.semantic_complete;
            j["semantic_input_mean"] = opt_json(g.semantic_input);
            j["semantic_input_skipped"] = g.semantic_input_skipped;
            j["semantic_output_mean"] = opt_json(g.semantic_output);
            if (!g.semantic_error.empty()) j["semantic_error"] = g.semantic_error;
        }
        groups_json[key] = j;
    }
    return json{{"scorer", scorer_name}, {"groups", groups_json}};
}

std::string RelevanceReport::render_table() const {
    auto cell = [](const std::optional<double>& v) { return v ? fixed(*v, 3) : std::string("n/a"); };
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> header{"Metric"};
    for (const auto& [key, _] : groups) header.push_back(key);
    rows.push_back(header);

    auto add = [&](const std::string& label, auto&& get) {
        std::vector<std::string> row{label};
        for (const auto& [_, g] : groups) row.push_back(get(g));
        rows.push_back(std::move(row));
    };
    add("# of Examples", [](const RelevanceGroup& g) { return std::to_string(g.count); });
    add("literal(D,I)", [&](const RelevanceGroup& g) { return cell(g.literal_input); });
    add("literal(D,O)", [&](const RelevanceGroup& g) { return cell(g.literal_output); });
    add("inputs skipped", [](const RelevanceGroup& g) { return std::to_string(g.literal_input_skipped); });
    bool any_semantic = std::any_of(groups.begin(), groups.end(), [](const auto& kv) { return kv.second.semantic_run; });
    if (any_semantic) {
        auto sem = [&](const RelevanceGroup& g, const std::optional<double>& v) {
            if (!g.semantic_complete) return std::string("incomplete");
            return cell(v);
        };
        add("semantic(D,I)", [&](const RelevanceGroup& g) { return sem(g, g.semantic_input); });
        add("semantic(D,O)", [&](const RelevanceGroup& g) { return sem(g, g.semantic_output); });
    }
    return "# Relevance to source text; semantic scorer: " + scorer_name + "\n" + render_aligned(rows);
}

}  // namespace forge
