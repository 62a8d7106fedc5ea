#include "doctest.h"

#include <set>

#include "forge/jsonl.hpp"
#include "forge/review.hpp"
#include "unit/helpers.hpp"

using namespace forge;
using forge::testing::make_record;
using forge::testing::TempDir;

namespace {

const std::filesystem::path kReview = std::filesystem::path(FORGE_FIXTURES) / "review";

std::vector<TaskRecord> dataset(int n, const std::string& prefix = "r", const std::string& model = "m") {
    std::vector<TaskRecord> out;
    for (int i = 0; i < n; ++i) {
        auto r = make_record(prefix + std::to_string(i), "document " + std::to_string(i),
                             Task{"Do " + std::to_string(i), i % 2 == 0 ? "" : "some input", "out"});
        r.document.id = "doc/" + std::to_string(i);
        r.model_name = model;
        r.advance(RecordStatus::retained);
        out.push_back(r);
    }
    return out;
}

json judgment_for(const json& card, const std::string& annotator, bool clear = true, bool hallucinated = false) {
    const bool empty = card["input_empty"].get<bool>();
    return json{{"annotator", annotator},
                {"record_id", card["record_id"]},
                {"CL_P", clear},
                {"HA_I", empty ? json(nullptr) : json(false)},
                {"HA_O", hallucinated},
                {"FL_I", empty ? json(nullptr) : json(true)},
                {"FL_O", true}};
}

}  // namespace

TEST_CASE("47 of 50 clear instructions aggregate to 94.0 with n/a inputs") {
    auto s = aggregate_judgments(read_judgments(kReview / "judgments_clarity_47_of_50.jsonl"));
    CHECK(s.judgments == 50);
    CHECK(*s.percent.at("CL_P") == 94.0);
    CHECK_FALSE(s.percent.at("HA_I"));
    CHECK_FALSE(s.percent.at("FL_I"));
    CHECK(*s.percent.at("HA_O") == 0.0);
    CHECK(*s.percent.at("FL_O") == 100.0);
    CHECK(s.to_json()["metrics"]["HA_I"]["percent"].is_null());
}

TEST_CASE("mixed judgment fixture matches hand-computed percentages") {
    auto s = aggregate_judgments(read_judgments(kReview / "judgments_mixed.jsonl"));
    // Worked by hand from the fixture table: CL_P 8/10, HA_I 2/6, HA_O 2/10, FL_I 5/6, FL_O 9/10.
    CHECK(s.counts.at("HA_I").applicable == 6);
    CHECK(*s.percent.at("CL_P") == doctest::Approx(80.0));
    CHECK(*s.percent.at("HA_I") == doctest::Approx(100.0 / 3.0));
    CHECK(*s.percent.at("HA_O") == doctest::Approx(20.0));
    CHECK(*s.percent.at("FL_I") == doctest::Approx(250.0 / 3.0));
    CHECK(*s.percent.at("FL_O") == doctest::Approx(90.0));
    CHECK_THROWS_AS(aggregate_judgments({}), std::invalid_argument);
}

TEST_CASE("103 pairwise judgments give 67.0 / 28.2 / 4.9") {
    auto pairs = read_pairwise(kReview / "pairwise_103.jsonl");
    REQUIRE(pairs.size() == 103);
    auto s = aggregate_pairwise(pairs, "forge");
    CHECK(s.win == 69);
    CHECK(s.tie == 29);
    CHECK(s.lose == 5);
    CHECK(s.win_percent == 67.0);
    CHECK(s.tie_percent == 28.2);
    CHECK(s.lose_percent == 4.9);
    CHECK(std::abs(s.win_percent + s.tie_percent + s.lose_percent - 100.0) <= 0.1 + 1e-9);
    auto mirror = aggregate_pairwise(pairs, "baseline");
    CHECK(mirror.win == 5);
    CHECK(mirror.lose == 69);
    CHECK_THROWS_AS(aggregate_pairwise(pairs, "nobody"), std::invalid_argument);
}

TEST_CASE("all ties and a single win") {
    PairwiseJudgment tie{"a", "b", "d", PairVerdict::tie, "x", "", "S", "T"};
    auto s = aggregate_pairwise({tie, tie, tie}, "S");
    CHECK(s.win_percent == 0.0);
    CHECK(s.tie_percent == 100.0);
    CHECK(s.lose_percent == 0.0);
    PairwiseJudgment win{"a", "b", "d", PairVerdict::right_win, "x", "", "T", "S"};
    auto w = aggregate_pairwise({win}, "S");
    CHECK(w.win_percent == 100.0);
    CHECK(w.tie_percent == 0.0);
    CHECK(w.lose_percent == 0.0);
}

TEST_CASE("pairwise percentages always sum to 100 within 0.1") {
    Rng rng(5);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<PairwiseJudgment> js;
        const int n = 1 + static_cast<int>(rng.below(300));
        for (int i = 0; i < n; ++i) {
            js.push_back({"a", "b", "d", static_cast<PairVerdict>(rng.below(3)), "x", "", "S", "T"});
        }
        auto s = aggregate_pairwise(js, "S");
        CHECK(s.win + s.tie + s.lose == static_cast<std::size_t>(n));
        CHECK(std::abs(s.win_percent + s.tie_percent + s.lose_percent - 100.0) <= 0.1 + 1e-9);
    }
}

TEST_CASE("review negatives: HA_O true, all-positive, mixed subset") {
    auto data = dataset(10);
    auto mixed = read_judgments(kReview / "judgments_mixed.jsonl");
    auto negs = export_review_negatives(mixed, data);
    // Hand-derived: CL_P false on r3, r8; HA_O true on r2, r9.
    REQUIRE(negs.size() == 4);
    CHECK(negs[0].id == "r2");
    CHECK(negs[0].reject_reason == "human:hallucinated_output");
    CHECK(negs[1].id == "r3");
    CHECK(negs[1].reject_reason == "human:unclear_instruction");
    CHECK(negs[2].id == "r8");
    CHECK(negs[3].id == "r9");

    Judgment bad{"r1", true, false, true, true, true, "a", ""};
    CHECK(export_review_negatives({bad}, data).size() == 1);
    Judgment good{"r1", true, false, false, true, true, "a", ""};
    CHECK(export_review_negatives({good}, data).empty());
    Judgment both{"r1", false, false, true, true, true, "a", ""};
    CHECK(export_review_negatives({both}, data)[0].reject_reason == "human:hallucinated_output,unclear_instruction");
}

TEST_CASE("judgment json uses metric keys and null for n/a") {
    Judgment j{"r", true, std::nullopt, false, std::nullopt, true, "ann", "t"};
    json x = j.to_json();
    CHECK(x["HA_I"].is_null());
    CHECK(x["CL_P"] == true);
    CHECK(Judgment::from_json(x).to_json() == x);
    CHECK_THROWS_AS(Judgment::from_json(json{{"record_id", "r"}, {"annotator", "a"}}), ReviewBadRequest);
}

TEST_CASE("a sample of 50 is served exactly once per annotator") {
    ReviewService svc(dataset(80), ReviewOptions{50, 9, {}, {}, {}});
    std::multiset<std::string> served;
    for (int i = 0; i < 60; ++i) {
        json item = svc.next("alice");
        if (item["done"].get<bool>()) break;
        CHECK(svc.next("alice")["record"]["record_id"] == item["record"]["record_id"]);  // idempotent until judged
        served.insert(item["record"]["record_id"].get<std::string>());
        svc.submit_judgment(judgment_for(item["record"], "alice"));
    }
    CHECK(served.size() == 50);
    CHECK(std::set<std::string>(served.begin(), served.end()).size() == 50);
    CHECK(svc.next("alice")["done"] == true);
}

TEST_CASE("two annotators have independent queues over the same sample") {
    ReviewService svc(dataset(30), ReviewOptions{10, 4, {}, {}, {}});
    std::vector<std::string> a, b;
    for (int i = 0; i < 10; ++i) {
        json x = svc.next("alice");
        a.push_back(x["record"]["record_id"]);
        svc.submit_judgment(judgment_for(x["record"], "alice"));
        if (i < 4) {
            json y = svc.next("bob");
            b.push_back(y["record"]["record_id"]);
            svc.submit_judgment(judgment_for(y["record"], "bob"));
        }
    }
    CHECK(svc.next("alice")["done"] == true);
    CHECK(svc.next("bob")["done"] == false);
    CHECK(std::set<std::string>(a.begin(), a.end()).size() == 10);
    for (const auto& id : b) CHECK(std::find(a.begin(), a.end(), id) != a.end());
    auto report = svc.report();
    CHECK(report["per_annotator"]["alice"]["judgments"] == 10);
    CHECK(report["per_annotator"]["bob"]["judgments"] == 4);
    CHECK(report["pooled"]["judgments"] == 14);
}

TEST_CASE("unserved, double and malformed judgments are refused") {
    ReviewService svc(dataset(5), ReviewOptions{5, 1, {}, {}, {}});
    json unserved{{"annotator", "a"}, {"record_id", "r0"}, {"CL_P", true}, {"HA_I", nullptr}, {"HA_O", false},
                  {"FL_I", nullptr}, {"FL_O", true}};
    CHECK_THROWS_AS(svc.submit_judgment(unserved), ReviewConflict);
    json item = svc.next("a");
    json bad = judgment_for(item["record"], "a");
    bad["HA_I"] = item["record"]["input_empty"].get<bool>() ? json(true) : json(nullptr);
    CHECK_THROWS_AS(svc.submit_judgment(bad), ReviewBadRequest);
    svc.submit_judgment(judgment_for(item["record"], "a"));
    CHECK_THROWS_AS(svc.submit_judgment(judgment_for(item["record"], "a")), ReviewConflict);
    CHECK_THROWS_AS(svc.next(""), ReviewBadRequest);
    CHECK_THROWS_AS(svc.submit_pairwise(json::object()), ReviewConflict);
}

TEST_CASE("judgments persist and restore") {
    TempDir dir;
    ReviewOptions opts{4, 2, dir / "review" / "judgments.jsonl", {}, {}};
    std::string first;
    {
        ReviewService svc(dataset(4), opts);
        json item = svc.next("a");
        first = item["record"]["record_id"];
        svc.submit_judgment(judgment_for(item["record"], "a", false));
    }
    ReviewService again(dataset(4), opts);
    CHECK(again.judgments().size() == 1);
    CHECK(again.next("a")["record"]["record_id"] != first);
    auto negs = read_jsonl_strict(dir / "review" / "judgments.jsonl");
    CHECK(negs.size() == 1);
    CHECK(again.export_negatives_jsonl().find(first) != std::string::npos);
}

TEST_CASE("pairwise: mismatched documents are refused") {
    auto left = dataset(3, "l", "A");
    auto right = dataset(3, "r", "B");
    auto svc = ReviewService::pairwise(left, right, "A", "B", ReviewOptions{});
    right[0].document.id = "doc/other";
    CHECK_THROWS_AS(svc->enqueue_pair(left[1], right[0]), PairMismatchError);
    CHECK_THROWS_AS(svc->enqueue_pair(left[1], left[1]), PairMismatchError);
    CHECK_THROWS_AS(ReviewService::pairwise(left, right, "A", "A", ReviewOptions{}), std::invalid_argument);
    svc->next("x");
    CHECK_THROWS_AS(svc->enqueue_pair(left[1], dataset(3, "r", "B")[1]), std::logic_error);
}

TEST_CASE("pairwise: hidden systems, canonical storage, subject report") {
    auto left = dataset(12, "l", "A");
    auto right = dataset(12, "r", "B");
    auto svc = ReviewService::pairwise(left, right, "forge", "base", ReviewOptions{12, 3, {}, {}, {}});
    int swapped = 0;
    for (int i = 0; i < 12; ++i) {
        json item = svc->next("ann");
        REQUIRE(item["done"] == false);
        CHECK(item["pair"]["left"]["document"]["id"] == item["pair"]["right"]["document"]["id"]);
        CHECK(dump_line(item).find("forge") == std::string::npos);
        const std::string shown_left = item["pair"]["left"]["record_id"];
        const bool forge_on_left = shown_left[0] == 'l';
        if (!forge_on_left) ++swapped;
        // The annotator always prefers the forge side.
        auto j = svc->submit_pairwise(json{{"annotator", "ann"},
                                           {"left_record_id", item["pair"]["left"]["record_id"]},
                                           {"right_record_id", item["pair"]["right"]["record_id"]},
                                           {"verdict", forge_on_left ? "left_win" : "right_win"}});
        CHECK(j.left_record_id[0] == 'l');
        CHECK(j.verdict == PairVerdict::left_win);
        CHECK(j.left_system == "forge");
    }
    CHECK(swapped > 0);
    CHECK(swapped < 12);
    auto report = svc->report();
    CHECK(report["pooled"]["win_percent"] == 100.0);
    CHECK(report["subject"] == "forge");
    CHECK(svc->next("ann")["done"] == true);
}

TEST_CASE("review cards flag empty inputs") {
    auto data = dataset(2);
    CHECK(review_card(data[0])["input_empty"] == true);
    CHECK(review_card(data[1])["input_empty"] == false);
    CHECK(review_card(data[0]).contains("model_name") == false);
}
