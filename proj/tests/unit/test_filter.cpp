#include "doctest.h"

#include <set>

#include "forge/filter.hpp"
#include "forge/text.hpp"
#include "unit/helpers.hpp"

using namespace forge;
using forge::testing::make_doc;
using forge::testing::make_record;

namespace {

std::set<std::string> ids(const std::vector<TaskRecord>& rs) {
    std::set<std::string> out;
    for (const auto& r : rs) out.insert(r.id);
    return out;
}

/// Independent σ: lowercase ASCII alphanumeric runs.
std::set<std::string> words(const std::string& s) {
    std::set<std::string> out;
    std::string cur;
    for (char c : s + " ") {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        } else if (!cur.empty()) {
            out.insert(cur);
            cur.clear();
        }
    }
    return out;
}

std::optional<double> oracle_overlap(const std::string& doc, const std::string& field) {
    auto d = words(doc);
    auto f = words(field);
    if (f.empty()) return std::nullopt;
    std::size_t hit = 0;
    for (const auto& w : f) hit += d.count(w);
    return static_cast<double>(hit) / static_cast<double>(f.size());
}

double oracle_sigma(const TaskRecord& r) {
    auto o = oracle_overlap(r.document.text, r.task->output);
    if (!o) return 0.0;
    auto i = oracle_overlap(r.document.text, r.task->input);
    return i ? std::min(*i, *o) : *o;
}

std::vector<TaskRecord> mixed_fixture() {
    std::vector<TaskRecord> rs;
    rs.push_back(make_record("full", "a b c d e f", Task{"x", "a b", "c d"}));
    rs.push_back(make_record("half", "a b c d", Task{"x", "a b x y", "a b"}));
    rs.push_back(make_record("none", "alpha beta", Task{"x", "", "gamma delta"}));
    rs.push_back(make_record("empty-in", "p q r s t u", Task{"x", "", "p q r s t z"}));
    rs.push_back(make_record("third", "p q r s t", Task{"x", "p q", "r z w"}));
    rs.push_back(make_record("punct-in", "m n o", Task{"x", "...", "m n"}));
    return rs;
}

std::shared_ptr<MockBackend> echo_backend() {
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const std::string& p) { return "Answer: " + p; });
    return mock;
}

}  // namespace

TEST_CASE("theta 0 passes everything") {
    auto split = overlap_filter(mixed_fixture(), 0.0);
    CHECK(split.passed.size() == 6);
    CHECK(split.rejected.empty());
    for (const auto& r : split.passed) {
        REQUIRE(r.filter_trace);
        CHECK(r.filter_trace->decision == FilterDecision::pass);
        CHECK(r.status == RecordStatus::parsed);
    }
}

TEST_CASE("theta 1 passes only fully contained tasks") {
    auto split = overlap_filter(mixed_fixture(), 1.0);
    CHECK(ids(split.passed) == std::set<std::string>{"full", "punct-in"});
    for (const auto& r : split.rejected) {
        CHECK(r.status == RecordStatus::filtered);
        CHECK(r.reject_reason == "reject_overlap");
        CHECK(r.filter_trace->decision == FilterDecision::reject_overlap);
    }
}

TEST_CASE("mixed fixture at theta 0.5 matches an independent recount") {
    auto fixture = mixed_fixture();
    std::set<std::string> expected;
    for (const auto& r : fixture) {
        if (oracle_sigma(r) >= 0.5) expected.insert(r.id);
    }
    auto split = overlap_filter(fixture, 0.5);
    CHECK(ids(split.passed) == expected);
    CHECK(expected == std::set<std::string>{"full", "half", "empty-in", "punct-in"});
    for (const auto& r : split.passed) CHECK(r.filter_trace->task_score == doctest::Approx(oracle_sigma(r)));
}

TEST_CASE("trace records skipped input terms and theta") {
    auto split = overlap_filter(mixed_fixture(), 0.3);
    for (const auto& r : split.passed) {
        if (r.id == "empty-in") {
            CHECK_FALSE(r.filter_trace->overlap_input);
            CHECK(r.filter_trace->overlap_output == doctest::Approx(5.0 / 6.0));
        }
        CHECK(r.filter_trace->theta == 0.3);
    }
    auto back = FilterTrace::from_json(split.passed[0].filter_trace->to_json());
    CHECK(back.task_score == split.passed[0].filter_trace->task_score);
}

TEST_CASE("overlap_filter rejects bad arguments") {
    CHECK_THROWS_AS(overlap_filter(mixed_fixture(), 1.5), std::invalid_argument);
    CHECK_THROWS_AS(overlap_filter(mixed_fixture(), -0.1), std::invalid_argument);
    auto rs = mixed_fixture();
    rs[0].status = RecordStatus::retained;
    CHECK_THROWS_AS(overlap_filter(rs, 0.5), std::invalid_argument);
}

TEST_CASE("parallel and serial overlap filters agree") {
    std::vector<TaskRecord> rs;
    Rng rng(8);
    const std::vector<std::string> vocab = {"a", "b", "c", "d", "e", "f", "g", "h"};
    for (int i = 0; i < 300; ++i) {
        auto pick = [&](int n) {
            std::string s;
            for (int k = 0; k < n; ++k) s += vocab[rng.below(vocab.size())] + " ";
            return s;
        };
        rs.push_back(make_record("r" + std::to_string(i), pick(5), Task{"x", rng.below(3) == 0 ? "" : pick(3), pick(3) + "z"}));
    }
    auto a = overlap_filter(rs, 0.6);
    auto b = overlap_filter_serial(rs, 0.6);
    CHECK(ids(a.passed) == ids(b.passed));
    CHECK(a.passed.size() + a.rejected.size() == 300);
    auto index = [](const TaskRecord& r) { return std::stoi(r.id.substr(1)); };
    for (std::size_t i = 1; i < a.passed.size(); ++i) CHECK(index(a.passed[i - 1]) < index(a.passed[i]));
}

TEST_CASE("answerability: substantive answer, refusal, judge") {
    Task t{"Name a color.", "", "Blue."};
    CHECK(answerability_prompt(t) == "Name a color.");
    CHECK(answerability_prompt(Task{"Sum.", "1 2", "3"}) == "Sum.\n1 2");

    auto mock = std::make_shared<MockBackend>();
    mock->add("Name a color.", "Red is a color.");
    mock->add("Name a fruit.", "I cannot answer this without more context.");
    mock->add("Name a city.", "   ");
    Gateway gw(GatewayConfig{}, mock);
    CHECK(answerability_check(t, gw));
    CHECK_FALSE(answerability_check(Task{"Name a fruit.", "", "Apple."}, gw));
    CHECK_FALSE(answerability_check(Task{"Name a city.", "", "Rome."}, gw));

    AnswerabilityOptions judge;
    judge.judge_mode = true;
    mock->add(judge_prompt(t, "Red is a color."), "No, it does not.");
    CHECK_FALSE(answerability_check(t, gw, judge));
    Task u{"Name a shape.", "", "Circle."};
    mock->add("Name a shape.", "A square.");
    mock->add(judge_prompt(u, "A square."), "yes");
    CHECK(answerability_check(u, gw, judge));
}

TEST_CASE("refusal patterns are configurable prefixes") {
    CHECK(is_refusal("As an AI, I won't", AnswerabilityOptions{}.refusal_patterns));
    CHECK_FALSE(is_refusal("Here you go", AnswerabilityOptions{}.refusal_patterns));
    CHECK(is_refusal("  NOPE never", {"nope"}));
    CHECK_FALSE(is_refusal("", {"nope"}));  // empty replies are handled by answerability_check
}

TEST_CASE("consistency examples") {
    Document doc = make_doc("d", "the source");
    auto mock = std::make_shared<MockBackend>();
    Gateway gw(GatewayConfig{}, mock);

    Task same{"Say it.", "", "red green blue"};
    mock->add(consistency_prompt(doc, same), "red green blue");
    auto r1 = consistency_check(doc, same, gw, 0.5);
    CHECK(r1.score == 1.0);
    CHECK(r1.pass);

    Task disjoint{"Say other.", "", "red green"};
    mock->add(consistency_prompt(doc, disjoint), "purple orange");
    auto r2 = consistency_check(doc, disjoint, gw, 0.5);
    CHECK(r2.score == 0.0);
    CHECK_FALSE(r2.pass);

    Task half{"Say half.", "", "one two three four"};
    mock->add(consistency_prompt(doc, half), "one two");
    auto r3 = consistency_check(doc, half, gw, 0.4);
    CHECK(r3.score == 0.5);
    CHECK(r3.pass);
    auto r4 = consistency_check(doc, half, gw, 0.4, ConsistencyDirection::reply_in_output);
    CHECK(r4.score == 1.0);
}

TEST_CASE("consistency prompt joins instruction, input and document") {
    Document doc = make_doc("d", "DOC");
    CHECK(consistency_prompt(doc, Task{"I", "", "O"}) == "I\nDOC");
    CHECK(consistency_prompt(doc, Task{"I", "IN", "O"}) == "I\nIN\nDOC");
    CHECK(parse_consistency_direction(to_string(ConsistencyDirection::reply_in_output)) ==
          ConsistencyDirection::reply_in_output);
}

TEST_CASE("run_filters orders checks and parks gateway failures") {
    std::vector<TaskRecord> rs;
    rs.push_back(make_record("low", "a b", Task{"x", "", "z y w"}));
    rs.push_back(make_record("refused", "a b c", Task{"Refuse me", "", "a b"}));
    rs.push_back(make_record("offline", "a b c", Task{"Offline", "", "a b"}));
    rs.push_back(make_record("good", "a b c", Task{"Good", "", "a b"}));
    rs.push_back(make_record("drift", "a b c", Task{"Drift", "", "a c"}));
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const std::string& p) -> std::string {
        if (p.starts_with("Refuse me")) return "I'm unable to help.";
        if (p.starts_with("Offline")) throw TransportError("down");
        if (p == "Drift\na b c") return "nothing alike";
        return "a b c";
    });
    Gateway gw(GatewayConfig{}, mock);
    FilterOptions opts;
    auto out = run_filters(rs, opts, &gw);
    CHECK(ids(out.passed) == std::set<std::string>{"good"});
    CHECK(ids(out.parked) == std::set<std::string>{"offline"});
    REQUIRE(out.rejected.size() == 3);
    std::map<std::string, std::string> reasons;
    for (const auto& r : out.rejected) reasons[r.id] = r.reject_reason;
    CHECK(reasons["low"] == "reject_overlap");
    CHECK(reasons["refused"] == "reject_unanswerable");
    CHECK(reasons["drift"] == "reject_inconsistent");
    const auto& parked = out.parked[0];
    CHECK(parked.status == RecordStatus::parsed);
    CHECK(parked.filter_trace->decision == FilterDecision::parked);
    CHECK_FALSE(parked.filter_trace->answerable);
    const auto& good = out.passed[0];
    CHECK(good.filter_trace->answerable == std::optional<bool>(true));
    CHECK(good.filter_trace->consistency_score == std::optional<double>(1.0));
}

TEST_CASE("run_filters with model checks disabled needs no gateway") {
    FilterOptions opts;
    opts.answerability = false;
    opts.consistency = false;
    auto out = run_filters(mixed_fixture(), opts, nullptr);
    CHECK(out.passed.size() + out.rejected.size() == 6);
    CHECK(out.parked.empty());
    FilterOptions with_checks;
    CHECK_THROWS(run_filters(mixed_fixture(), with_checks, nullptr));
}
