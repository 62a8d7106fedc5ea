#include "doctest.h"

#include "forge/jsonl.hpp"
#include "forge/pipeline.hpp"
#include "forge/text.hpp"
#include "unit/helpers.hpp"

using namespace forge;
using forge::testing::make_record;
using forge::testing::TempDir;
namespace fs = std::filesystem;

namespace {

Config golden_config() { return Config::load(fs::path(FORGE_FIXTURES) / "golden.conf"); }

std::string slurp(const fs::path& p) { return read_file(p); }

std::size_t count_lines(const fs::path& p) {
    if (!fs::exists(p)) return 0;
    std::size_t n = 0;
    for (char ch : read_file(p)) n += ch == '\n';
    return n;
}

}  // namespace

TEST_CASE("config parsing and validation") {
    Config c = Config::parse("# comment\nfilter.theta = 0.25\n\nrun.seed=7\ncorpus.Poems.path = p.jsonl\n");
    CHECK(c.get_real("filter.theta") == 0.25);
    CHECK(c.get_uint("run.seed") == 7);
    CHECK(c.get("gateway.backend") == "mock");
    CHECK(c.corpus_names() == std::vector<std::string>{"Poems"});
    CHECK(c.get("corpus.Poems.min_chars").empty());

    CHECK_THROWS_AS(Config::parse("no equals sign here"), ConfigError);
    CHECK_THROWS_AS(Config::parse("filter.thetaa = 0.5"), ConfigError);
    CHECK_THROWS_AS(c.set("filter.theta", "1.5"), ConfigError);
    CHECK_THROWS_AS(c.set("filter.theta", "abc"), ConfigError);
    CHECK_THROWS_AS(c.set("run.seed", "-1"), ConfigError);
    CHECK_THROWS_AS(c.set("pipeline.order", "sideways"), ConfigError);
    CHECK_THROWS_AS(c.set("filter.overlap", "maybe"), ConfigError);
    c.set("pipeline.order", "gate_first");
    CHECK(c.get("pipeline.order") == "gate_first");

    Config a = Config::parse("run.seed = 1");
    Config b = Config::parse("run.seed = 1");
    CHECK(a.hash() == b.hash());
    b.set("filter.theta", "0.6");
    CHECK(a.hash() != b.hash());
    CHECK(Config::parse(a.to_text()).hash() == a.hash());
}

TEST_CASE("every documented key has a default that validates") {
    Config c;
    for (const auto& k : config_keys()) {
        if (k.name.find("<Name>") != std::string::npos) continue;
        CHECK_NOTHROW(c.set(k.name, k.default_value));
    }
}

TEST_CASE("stage names round-trip") {
    for (Stage s : all_stages()) CHECK(parse_stage(to_string(s)) == s);
    CHECK_THROWS(parse_stage("compile"));
}

TEST_CASE("dedupe: identical, trailing whitespace, five with two duplicates") {
    auto a = make_record("a", "d", Task{"Sum the list", "", "6"});
    auto b = make_record("b", "d", Task{"Sum the list", "", "6"});
    auto c = make_record("c", "d", Task{"Sum the list  ", "", "6\n"});
    auto d = make_record("d", "d", Task{"Sort the list", "", "1 2 3"});
    auto e = make_record("e", "d", Task{"Reverse the list", "", "3 2 1"});
    CHECK(task_fingerprint(*a.task) == task_fingerprint(*b.task));
    CHECK(task_fingerprint(*a.task) == task_fingerprint(*c.task));
    CHECK(task_fingerprint(*a.task) != task_fingerprint(*d.task));
    CHECK(task_fingerprint(Task{"x", "y", ""}) != task_fingerprint(Task{"x", "", "y"}));

    auto res = dedupe({a, b, c, d, e});
    REQUIRE(res.kept.size() == 3);
    CHECK(res.kept[0].id == "a");
    CHECK(res.kept[1].id == "d");
    CHECK(res.kept[2].id == "e");
    REQUIRE(res.dropped.size() == 2);
    for (const auto& r : res.dropped) {
        CHECK(r.status == RecordStatus::filtered);
        CHECK(r.reject_reason == "duplicate");
    }
}

TEST_CASE("stages refuse to run without their upstream") {
    TempDir dir;
    Pipeline p(dir.path(), golden_config());
    try {
        p.run(Stage::filter);
        FAIL("filter ran without generate");
    } catch (const MissingUpstreamError& e) {
        CHECK(e.required() == "generate");
    }
    CHECK_THROWS_AS(p.run(Stage::generate), MissingUpstreamError);
    CHECK_THROWS_AS(p.run(Stage::stats), MissingUpstreamError);
    p.run(Stage::sample);
    p.run(Stage::generate);
    CHECK_THROWS_AS(p.run(Stage::gate), OrderingError);
    CHECK_NOTHROW(p.run(Stage::filter));
    CHECK_NOTHROW(p.run(Stage::gate));
}

TEST_CASE("a second pipeline on a locked run directory fails") {
    TempDir dir;
    {
        Pipeline p(dir.path(), golden_config());
        CHECK(fs::exists(dir / ".lock"));
        CHECK_THROWS_AS(Pipeline(dir.path(), golden_config()), LockError);
    }
    CHECK_FALSE(fs::exists(dir / ".lock"));
    CHECK_NOTHROW(Pipeline(dir.path(), golden_config()));
}

TEST_CASE("filter after generate writes rejects and records the stage") {
    TempDir dir;
    Pipeline p(dir.path(), golden_config());
    p.run(Stage::sample);
    p.run(Stage::generate);
    auto r = p.run(Stage::filter);
    CHECK_FALSE(r.skipped);
    CHECK(fs::exists(dir / "rejects.jsonl"));
    CHECK(fs::exists(dir / "filter_passed.jsonl"));
    json m = json::parse(slurp(dir / "manifest.json"));
    REQUIRE(m["stages"].contains("filter"));
    CHECK(m["stages"]["filter"]["outputs"].contains("rejects.jsonl"));
    CHECK(m["stages"]["filter"]["report"]["input"].get<std::size_t>() ==
          r.report["passed"].get<std::size_t>() + r.report["rejected"].get<std::size_t>() +
              r.report["parked"].get<std::size_t>());
    for (const auto& rec : read_records(dir / "rejects.jsonl")) {
        CHECK(rec.status == RecordStatus::filtered);
        CHECK_FALSE(rec.reject_reason.empty());
    }
    CHECK(r.counters.conserved());
}

TEST_CASE("full run: counters conserved, stats idempotent, changed config reruns") {
    TempDir dir;
    std::string stats_before;
    {
        Pipeline p(dir.path(), golden_config());
        auto results = p.run_all();
        for (const auto& r : results) CHECK(r.counters.conserved());
        auto c = p.recount();
        CHECK(c.in_flight == 0);
        CHECK(c.generated == c.parse_failed + c.filtered + c.gated_invalid + c.retained);
        CHECK(c.retained == count_lines(dir / "retained.jsonl"));
        stats_before = slurp(dir / "stats_report.json");
        auto again = p.run(Stage::stats);
        CHECK(again.skipped);
        CHECK(slurp(dir / "stats_report.json") == stats_before);
    }
    {
        Pipeline p(dir.path(), golden_config());
        auto results = p.run_all();
        for (const auto& r : results) CHECK(r.skipped);
        CHECK(slurp(dir / "stats_report.json") == stats_before);
    }
    {
        Config c = golden_config();
        c.set("filter.theta", "0.9");
        Pipeline p(dir.path(), c);
        auto r = p.run(Stage::filter);
        CHECK_FALSE(r.skipped);
        CHECK_FALSE(fs::exists(dir / "retained.jsonl"));  // downstream outputs invalidated
        CHECK_THROWS_AS(p.run(Stage::stats), MissingUpstreamError);
        p.run(Stage::gate);
        CHECK(p.run(Stage::stats).counters.conserved());
    }
}

TEST_CASE("a tampered output makes the stage rerun") {
    TempDir dir;
    Pipeline p(dir.path(), golden_config());
    p.run(Stage::sample);
    CHECK(p.run(Stage::sample).skipped);
    write_file_atomic(dir / "documents.jsonl", "");
    auto r = p.run(Stage::sample);
    CHECK_FALSE(r.skipped);
    CHECK(count_lines(dir / "documents.jsonl") == r.counters.sampled);
    CHECK(r.counters.sampled == 60);
}

TEST_CASE("gate_first order swaps the dependency") {
    TempDir dir;
    Config c = golden_config();
    c.set("pipeline.order", "gate_first");
    Pipeline p(dir.path(), c);
    p.run(Stage::sample);
    p.run(Stage::generate);
    CHECK_THROWS_AS(p.run(Stage::filter), OrderingError);
    p.run(Stage::gate);
    auto r = p.run(Stage::filter);
    CHECK(r.counters.conserved());
    CHECK(fs::exists(dir / "retained.jsonl"));
}
