#include "forge/review.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "forge/text.hpp"

namespace forge {

namespace {

json opt_bool(const std::optional<bool>& v) { return v ? json(*v) : json(nullptr); }

std::optional<bool> read_opt_bool(const json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    if (!j.at(key).is_boolean()) throw ReviewBadRequest(std::string(key) + " must be true, false or null");
    return j.at(key).get<bool>();
}

bool read_bool(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_boolean()) throw ReviewBadRequest(std::string(key) + " must be true or false");
    return j.at(key).get<bool>();
}

std::string read_string(const json& j, const char* key) {
    if (!j.contains(key) || !j.at(key).is_string() || j.at(key).get<std::string>().empty()) {
        throw ReviewBadRequest(std::string(key) + " must be a non-empty string");
    }
    return j.at(key).get<std::string>();
}

}  // namespace

json Judgment::to_json() const {
    return json{{"record_id", record_id},
                {"CL_P", clarity},
                {"HA_I", opt_bool(hallucination_input)},
                {"HA_O", hallucination_output},
                {"FL_I", opt_bool(fluency_input)},
                {"FL_O", fluency_output},
                {"annotator", annotator},
                {"timestamp", timestamp}};
}

Judgment Judgment::from_json(const json& j) {
    Judgment out;
    out.record_id = read_string(j, "record_id");
    out.clarity = read_bool(j, "CL_P");
    out.hallucination_input = read_opt_bool(j, "HA_I");
    out.hallucination_output = read_bool(j, "HA_O");
    out.fluency_input = read_opt_bool(j, "FL_I");
    out.fluency_output = read_bool(j, "FL_O");
    out.annotator = read_string(j, "annotator");
    out.timestamp = j.value("timestamp", std::string{});
    return out;
}

std::string_view to_string(PairVerdict v) {
    switch (v) {
        case PairVerdict::left_win: return "left_win";
        case PairVerdict::tie: return "tie";
        case PairVerdict::right_win: return "right_win";
    }
    return "tie";
}

PairVerdict parse_pair_verdict(std::string_view s) {
    if (s == "left_win") return PairVerdict::left_win;
    if (s == "tie") return PairVerdict::tie;
    if (s == "right_win") return PairVerdict::right_win;
    throw ReviewBadRequest("verdict must be left_win, tie or right_win");
}

json PairwiseJudgment::to_json() const {
    return json{{"left_record_id", left_record_id}, {"right_record_id", right_record_id},
                {"document_id", document_id},       {"verdict", to_string(verdict)},
                {"annotator", annotator},           {"timestamp", timestamp},
                {"left_system", left_system},       {"right_system", right_system}};
}

PairwiseJudgment PairwiseJudgment::from_json(const json& j) {
    PairwiseJudgment out;
    out.left_record_id = read_string(j, "left_record_id");
    out.right_record_id = read_string(j, "right_record_id");
    out.document_id = j.value("document_id", std::string{});
    out.verdict = parse_pair_verdict(read_string(j, "verdict"));
    out.annotator = read_string(j, "annotator");
    out.timestamp = j.value("timestamp", std::string{});
    out.left_system = j.value("left_system", std::string{});
    out.right_system = j.value("right_system", std::string{});
    return out;
}

json MetricSummary::to_json() const {
    json metrics = json::object();
    for (const auto& name : metric_names()) {
        const auto& c = counts.at(name);
        const auto& pct = percent.at(name);
        metrics[name] = json{{"yes", c.yes}, {"applicable", c.applicable}, {"percent", pct ? json(*pct) : json(nullptr)}};
    }
    return json{{"judgments", judgments}, {"metrics", metrics}};
}

MetricSummary aggregate_judgments(const std::vector<Judgment>& judgments) {
    if (judgments.empty()) throw std::invalid_argument("aggregate_judgments: no judgments");
    MetricSummary s;
    s.judgments = judgments.size();
    for (const auto& name : metric_names()) s.counts[name] = {};
    auto add = [&](const std::string& name, std::optional<bool> v) {
        if (!v) return;
        ++s.counts[name].applicable;
        if (*v) ++s.counts[name].yes;
    };
    for (const auto& j : judgments) {
        add("CL_P", j.clarity);
        add("HA_I", j.hallucination_input);
        add("HA_O", j.hallucination_output);
        add("FL_I", j.fluency_input);
        add("FL_O", j.fluency_output);
    }
    for (const auto& [name, c] : s.counts) {
        s.percent[name] = c.applicable == 0 ? std::nullopt
                                            : std::optional<double>(100.0 * static_cast<double>(c.yes) /
                                                                    static_cast<double>(c.applicable));
    }
    return s;
}

double round1(double value) { return std::round(value * 10.0) / 10.0; }

json PairwiseSummary::to_json() const {
    return json{{"subject", subject},         {"judged", judged},
                {"win", win},                 {"tie", tie},
                {"lose", lose},               {"win_percent", win_percent},
                {"tie_percent", tie_percent}, {"lose_percent", lose_percent}};
}

PairwiseSummary aggregate_pairwise(const std::vector<PairwiseJudgment>& judgments, const std::string& subject) {
    PairwiseSummary s;
    s.subject = subject;
    for (const auto& j : judgments) {
        const bool left = j.left_system == subject;
        const bool right = j.right_system == subject;
        if (left == right) continue;  // subject not involved (or on both sides)
        ++s.judged;
        if (j.verdict == PairVerdict::tie) {
            ++s.tie;
        } else if ((j.verdict == PairVerdict::left_win) == left) {
            ++s.win;
        } else {
            ++s.lose;
        }
    }
    if (s.judged == 0) throw std::invalid_argument("aggregate_pairwise: no judgment involves " + subject);
    const double n = static_cast<double>(s.judged);
    s.win_percent = round1(100.0 * static_cast<double>(s.win) / n);
    s.tie_percent = round1(100.0 * static_cast<double>(s.tie) / n);
    s.lose_percent = round1(100.0 * static_cast<double>(s.lose) / n);
    return s;
}

std::vector<TaskRecord> export_review_negatives(const std::vector<Judgment>& judgments,
                                                const std::vector<TaskRecord>& dataset) {
    std::map<std::string, std::set<std::string>> reasons;
    for (const auto& j : judgments) {
        if (!j.clarity) reasons[j.record_id].insert("unclear_instruction");
        if (j.hallucination_output) reasons[j.record_id].insert("hallucinated_output");
    }
    std::vector<TaskRecord> out;
    for (const auto& r : dataset) {
        auto it = reasons.find(r.id);
        if (it == reasons.end()) continue;
        TaskRecord neg = r;
        std::string reason = "human:";
        bool first = true;
        for (const auto& why : it->second) {
            reason += (first ? "" : ",") + why;
            first = false;
        }
        neg.reject_reason = reason;
        out.push_back(std::move(neg));
    }
    return out;
}

std::vector<Judgment> read_judgments(const std::filesystem::path& path) {
    std::vector<Judgment> out;
    for (const auto& j : read_jsonl_strict(path)) out.push_back(Judgment::from_json(j));
    return out;
}

std::vector<PairwiseJudgment> read_pairwise(const std::filesystem::path& path) {
    std::vector<PairwiseJudgment> out;
    for (const auto& j : read_jsonl_strict(path)) out.push_back(PairwiseJudgment::from_json(j));
    return out;
}

// ---------------------------------------------------------------- service

std::string_view to_string(ReviewMode m) { return m == ReviewMode::single ? "single" : "pairwise"; }

ReviewMode parse_review_mode(std::string_view s) {
    if (s == "single") return ReviewMode::single;
    if (s == "pairwise") return ReviewMode::pairwise;
    throw std::invalid_argument("review mode must be single or pairwise");
}

json review_card(const TaskRecord& r) {
    json card{{"record_id", r.id},
              {"document", json{{"id", r.document.id}, {"corpus", r.document.corpus.name()}, {"text", r.document.text}}}};
    if (r.task) {
        card["instruction"] = r.task->instruction;
        card["input"] = r.task->input;
        card["output"] = r.task->output;
        card["input_empty"] = r.task->input.empty();
    }
    return card;
}

ReviewService::ReviewService(ReviewMode mode, ReviewOptions options) : mode_(mode), options_(std::move(options)) {}

ReviewService::ReviewService(std::vector<TaskRecord> dataset, ReviewOptions options)
    : ReviewService(ReviewMode::single, std::move(options)) {
    for (auto& r : dataset) {
        if (!r.task) throw std::invalid_argument("review dataset record " + r.id + " has no task");
        dataset_.push_back(std::move(r));
    }
    restore();
}

std::unique_ptr<ReviewService> ReviewService::pairwise(const std::vector<TaskRecord>& left,
                                                       const std::vector<TaskRecord>& right, std::string left_system,
                                                       std::string right_system, ReviewOptions options) {
    if (left_system == right_system) throw std::invalid_argument("pairwise review needs two distinct system names");
    std::unique_ptr<ReviewService> svc(new ReviewService(ReviewMode::pairwise, std::move(options)));
    svc->left_system_ = std::move(left_system);
    svc->right_system_ = std::move(right_system);
    if (svc->options_.subject_system.empty()) svc->options_.subject_system = svc->left_system_;
    std::map<std::string, const TaskRecord*> by_doc;
    for (const auto& r : right) by_doc.try_emplace(r.document.id, &r);
    for (const auto& l : left) {
        auto it = by_doc.find(l.document.id);
        if (it != by_doc.end()) svc->enqueue_pair(l, *it->second);
    }
    svc->restore();
    return svc;
}

void ReviewService::enqueue_pair(const TaskRecord& left, const TaskRecord& right) {
    std::lock_guard lock(mu_);
    if (mode_ != ReviewMode::pairwise) throw std::logic_error("enqueue_pair needs pairwise mode");
    if (sampled_) throw std::logic_error("pairs cannot be added after serving has started");
    if (left.document.id != right.document.id) {
        throw PairMismatchError("pair refused: records " + left.id + " and " + right.id +
                                " come from different documents (" + left.document.id + " vs " + right.document.id + ")");
    }
    if (left.id == right.id && left.model_name == right.model_name && left.raw_completion == right.raw_completion) {
        throw PairMismatchError("pair refused: both sides are record " + left.id);
    }
    if (!left.task || !right.task) throw PairMismatchError("pair refused: a side has no task");
    pairs_.push_back({left, right});
}

std::size_t ReviewService::item_count() const { return mode_ == ReviewMode::single ? dataset_.size() : pairs_.size(); }

void ReviewService::draw_sample() {
    if (sampled_) return;
    const std::size_t n = item_count();
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(derive_seed(options_.seed, "review-sample"));
    rng.shuffle(idx);
    if (idx.size() > options_.sample_size) idx.resize(options_.sample_size);
    std::sort(idx.begin(), idx.end());
    sample_ = std::move(idx);
    sampled_ = true;
}

ReviewService::AnnotatorState& ReviewService::state_for(const std::string& annotator) {
    draw_sample();
    auto [it, inserted] = annotators_.try_emplace(annotator);
    if (inserted) {
        it->second.order = sample_;
        Rng rng(derive_seed(options_.seed, "review-order/" + annotator));
        rng.shuffle(it->second.order);
    }
    return it->second;
}

void ReviewService::restore() {
    // Judgments already on disk mark their items as judged for that annotator.
    if (mode_ == ReviewMode::single && options_.judgments_path && std::filesystem::exists(*options_.judgments_path)) {
        judgments_ = read_judgments(*options_.judgments_path);
        for (const auto& j : judgments_) {
            AnnotatorState& st = state_for(j.annotator);
            for (std::size_t i : sample_) {
                if (dataset_[i].id == j.record_id) st.judged.insert(i);
            }
        }
    }
    if (mode_ == ReviewMode::pairwise && options_.pairwise_path && std::filesystem::exists(*options_.pairwise_path)) {
        pairwise_ = read_pairwise(*options_.pairwise_path);
        for (const auto& j : pairwise_) {
            AnnotatorState& st = state_for(j.annotator);
            for (std::size_t i : sample_) {
                const Pair& p = pairs_[i];
                const bool same = p.left.id == j.left_record_id && p.right.id == j.right_record_id;
                const bool swapped = p.left.id == j.right_record_id && p.right.id == j.left_record_id;
                if (same || swapped) st.judged.insert(i);
            }
        }
    }
}

json ReviewService::next(const std::string& annotator) {
    if (annotator.empty()) throw ReviewBadRequest("annotator must be a non-empty string");
    std::lock_guard lock(mu_);
    AnnotatorState& st = state_for(annotator);
    if (!st.pending) {
        while (st.cursor < st.order.size() && st.judged.contains(st.order[st.cursor])) ++st.cursor;
        if (st.cursor >= st.order.size()) {
            return json{{"mode", to_string(mode_)}, {"done", true}, {"remaining", 0}, {"total", st.order.size()}};
        }
        Served s{st.order[st.cursor], false};
        if (mode_ == ReviewMode::pairwise) {
            Rng rng(derive_seed(options_.seed, "review-side/" + annotator + "/" + std::to_string(s.item) + "/" +
                                                  std::to_string(st.serves)));
            s.swapped = rng.below(2) == 1;
        }
        ++st.serves;
        st.pending = s;
    }
    const Served& s = *st.pending;
    const std::size_t remaining = st.order.size() - st.judged.size();
    json reply{{"mode", to_string(mode_)}, {"done", false}, {"remaining", remaining}, {"total", st.order.size()}};
    if (mode_ == ReviewMode::single) {
        reply["record"] = review_card(dataset_[s.item]);
    } else {
        const Pair& p = pairs_[s.item];
        const TaskRecord& shown_left = s.swapped ? p.right : p.left;
        const TaskRecord& shown_right = s.swapped ? p.left : p.right;
        reply["record"] = review_card(shown_left);
        reply["pair"] = json{{"document", json{{"id", p.left.document.id},
                                               {"corpus", p.left.document.corpus.name()},
                                               {"text", p.left.document.text}}},
                             {"left", review_card(shown_left)},
                             {"right", review_card(shown_right)}};
    }
    return reply;
}

void ReviewService::append_line(const std::optional<std::filesystem::path>& path, const json& line) {
    if (!path) return;
    if (path->has_parent_path()) std::filesystem::create_directories(path->parent_path());
    std::ofstream out(*path, std::ios::app | std::ios::binary);
    out << dump_line(line) << "\n";
    out.flush();
    if (!out) throw IoError("cannot append to " + path->string());
}

Judgment ReviewService::submit_judgment(const json& body) {
    if (mode_ != ReviewMode::single) throw ReviewConflict("the server is in pairwise mode");
    Judgment j = Judgment::from_json(body);
    std::lock_guard lock(mu_);
    AnnotatorState& st = state_for(j.annotator);
    std::optional<std::size_t> item;
    for (std::size_t i : sample_) {
        if (dataset_[i].id == j.record_id) item = i;
    }
    if (item && st.judged.contains(*item)) throw ReviewConflict("record " + j.record_id + " was already judged by " + j.annotator);
    if (!item || !st.pending || st.pending->item != *item) {
        throw ReviewConflict("record " + j.record_id + " was not served to " + j.annotator);
    }
    const bool empty_input = dataset_[*item].task->input.empty();
    if (empty_input != !j.hallucination_input.has_value() || empty_input != !j.fluency_input.has_value()) {
        throw ReviewBadRequest(empty_input ? "HA_I and FL_I must be null for a task with empty input"
                                           : "HA_I and FL_I are required for a task with input");
    }
    j.timestamp = utc_timestamp();
    append_line(options_.judgments_path, j.to_json());
    judgments_.push_back(j);
    st.judged.insert(*item);
    st.pending.reset();
    return j;
}

PairwiseJudgment ReviewService::submit_pairwise(const json& body) {
    if (mode_ != ReviewMode::pairwise) throw ReviewConflict("the server is in single-judgment mode");
    PairwiseJudgment j = PairwiseJudgment::from_json(body);
    std::lock_guard lock(mu_);
    AnnotatorState& st = state_for(j.annotator);
    if (!st.pending) throw ReviewConflict("no pair was served to " + j.annotator);
    const Pair& p = pairs_[st.pending->item];
    const TaskRecord& shown_left = st.pending->swapped ? p.right : p.left;
    const TaskRecord& shown_right = st.pending->swapped ? p.left : p.right;
    if (shown_left.id != j.left_record_id || shown_right.id != j.right_record_id) {
        throw ReviewConflict("pair " + j.left_record_id + " / " + j.right_record_id + " is not the pair served to " +
                             j.annotator);
    }
    // Store in canonical orientation so the report can name the systems.
    if (st.pending->swapped) {
        std::swap(j.left_record_id, j.right_record_id);
        if (j.verdict == PairVerdict::left_win) j.verdict = PairVerdict::right_win;
        else if (j.verdict == PairVerdict::right_win) j.verdict = PairVerdict::left_win;
    }
    j.document_id = p.left.document.id;
    j.left_system = left_system_;
    j.right_system = right_system_;
    j.timestamp = utc_timestamp();
    append_line(options_.pairwise_path, j.to_json());
    pairwise_.push_back(j);
    st.judged.insert(st.pending->item);
    st.pending.reset();
    return j;
}

json ReviewService::report() const {
    std::lock_guard lock(mu_);
    json out{{"mode", to_string(mode_)}};
    if (mode_ == ReviewMode::single) {
        std::map<std::string, std::vector<Judgment>> per;
        for (const auto& j : judgments_) per[j.annotator].push_back(j);
        json per_json = json::object();
        for (const auto& [a, js] : per) per_json[a] = aggregate_judgments(js).to_json();
        out["pooled"] = judgments_.empty() ? json(nullptr) : aggregate_judgments(judgments_).to_json();
        out["per_annotator"] = per_json;
        out["judgments"] = judgments_.size();
    } else {
        const std::string& subject = options_.subject_system;
        std::map<std::string, std::vector<PairwiseJudgment>> per;
        for (const auto& j : pairwise_) per[j.annotator].push_back(j);
        json per_json = json::object();
        for (const auto& [a, js] : per) per_json[a] = aggregate_pairwise(js, subject).to_json();
        out["subject"] = subject;
        out["systems"] = json::array({left_system_, right_system_});
        out["pooled"] = pairwise_.empty() ? json(nullptr) : aggregate_pairwise(pairwise_, subject).to_json();
        out["per_annotator"] = per_json;
        out["judgments"] = pairwise_.size();
    }
    return out;
}

std::vector<Judgment> ReviewService::judgments() const {
    std::lock_guard lock(mu_);
    return judgments_;
}

std::vector<PairwiseJudgment> ReviewService::pairwise_judgments() const {
    std::lock_guard lock(mu_);
    return pairwise_;
}

std::string ReviewService::export_negatives_jsonl() const {
    std::lock_guard lock(mu_);
    return records_to_jsonl(export_review_negatives(judgments_, dataset_));
}

}  // namespace forge
