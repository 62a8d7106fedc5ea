#include "doctest.h"

#include <atomic>
#include <thread>

#include "httplib.h"

#include "forge/gateway.hpp"
#include "forge/parallel.hpp"
#include "forge/synthetic.hpp"
#include "forge/text.hpp"
#include "unit/helpers.hpp"

using namespace forge;
using namespace std::chrono_literals;

namespace {

/// OpenAI-compatible stand-in on an ephemeral port.
class FakeServer {
public:
    FakeServer() {
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeServer() {
        server_.stop();
        thread_.join();
    }
    httplib::Server& server() { return server_; }
    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1"; }

private:
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
};

std::string chat_body(const std::string& content) {
    return dump_line(json{{"choices", json::array({json{{"message", json{{"role", "assistant"}, {"content", content}}}}})},
                          {"usage", json{{"prompt_tokens", 11}, {"completion_tokens", 3}}}});
}

std::string embedding_body(std::size_t dim) {
    return dump_line(json{{"data", json::array({json{{"embedding", std::vector<double>(dim, 0.5)}}})}});
}

GatewayConfig http_config(const std::string& url, int attempts) {
    GatewayConfig c;
    c.base_url = url;
    c.model_name = "fake";
    c.auth_env = "FORGE_TEST_TOKEN";
    c.retry.max_attempts = attempts;
    c.retry.base_backoff = 1ms;
    c.timeout = 5000ms;
    return c;
}

}  // namespace

TEST_CASE("mock returns the registered completion and misses strictly") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("hello", "world");
    Gateway gw(GatewayConfig{}, mock);
    CHECK(gw.complete("hello", DecodingParams::deterministic()) == "world");
    CHECK_THROWS_AS(gw.complete("unregistered", DecodingParams::deterministic()), MockMissError);
}

TEST_CASE("decoding params are validated") {
    CHECK_THROWS_AS((DecodingParams{-1.0, 10, {}}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((DecodingParams{0.5, 0, {}}.validate()), std::invalid_argument);
    auto p = DecodingParams{0.3, 77, {"\n\n"}};
    auto q = DecodingParams::from_json(p.to_json());
    CHECK(q.temperature == 0.3);
    CHECK(q.max_tokens == 77);
    CHECK(q.stop_sequences == p.stop_sequences);
}

TEST_CASE("identical texts embed identically") {
    Gateway gw(GatewayConfig{}, std::make_shared<MockBackend>(16));
    auto a = gw.embed("same text");
    CHECK(a == gw.embed("same text"));
    CHECK(a.size() == 16);
    CHECK(a != gw.embed("other text"));
}

TEST_CASE("canned embeddings of a different size are a hard error") {
    auto mock = std::make_shared<MockBackend>(8);
    mock->add_embedding("wide", std::vector<double>(12, 1.0));
    Gateway gw(GatewayConfig{}, mock);
    gw.embed("first");
    CHECK_THROWS_AS(gw.embed("wide"), DimensionMismatchError);
}

TEST_CASE("classify normalizes labels") {
    auto mock = std::make_shared<MockBackend>();
    mock->add("p1", " Valid.");
    mock->add("p2", "maybe");
    mock->add("p3", "invalid because the output ignores the instruction");
    mock->add("p4", "INVALID");
    Gateway gw(GatewayConfig{}, mock);
    const std::vector<std::string> labels = {"valid", "invalid"};
    CHECK(gw.classify("p1", labels).label == "valid");
    try {
        gw.classify("p2", labels);
        FAIL("expected an unrecognized label");
    } catch (const UnrecognizedLabelError& e) {
        CHECK(e.raw() == "maybe");
    }
    auto r = gw.classify("p3", labels);
    CHECK(r.label == "invalid");
    CHECK(r.raw == "invalid because the output ignores the instruction");
    CHECK(gw.classify("p4", labels).label == "invalid");
    CHECK_FALSE(match_label("validity", labels));
    CHECK_FALSE(match_label("", labels));
}

TEST_CASE("transient 500 then 200 succeeds and the log shows 2 attempts") {
    FakeServer fake;
    std::atomic<int> hits{0};
    std::string auth_seen;
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
        auth_seen = req.get_header_value("Authorization");
        if (hits++ == 0) {
            res.status = 500;
            res.set_content("{\"error\":\"overloaded\"}", "application/json");
            return;
        }
        auto body = json::parse(req.body);
        CHECK(body["model"] == "fake");
        CHECK(body["messages"][0]["content"] == "ping");
        res.set_content(chat_body("pong"), "application/json");
    });
    ::setenv("FORGE_TEST_TOKEN", "secret", 1);
    auto log = std::make_shared<CallLog>();
    Gateway gw(http_config(fake.base_url(), 2), std::make_shared<HttpBackend>(http_config(fake.base_url(), 2)), log);
    std::vector<std::chrono::milliseconds> sleeps;
    gw.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    CHECK(gw.complete("ping", DecodingParams::deterministic()) == "pong");
    CHECK(hits == 2);
    CHECK(auth_seen == "Bearer secret");
    CHECK(sleeps.size() == 1);
    log->flush();
    auto entries = log->entries();
    REQUIRE(entries.size() == 1);
    CHECK(entries[0]["attempts"] == 2);
    CHECK(entries[0]["status"] == "ok");
    CHECK(entries[0]["prompt_tokens"] == 11);
    CHECK(entries[0]["prompt_hash"] == sha256_hex("ping"));
}

TEST_CASE("persistent 500 exhausts retries with non-decreasing backoff") {
    FakeServer fake;
    std::atomic<int> hits{0};
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 503;
        res.set_content("busy", "text/plain");
    });
    auto cfg = http_config(fake.base_url(), 4);
    Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
    std::vector<std::chrono::milliseconds> sleeps;
    gw.set_sleeper([&](std::chrono::milliseconds d) { sleeps.push_back(d); });
    try {
        gw.complete("ping", DecodingParams::deterministic());
        FAIL("expected an endpoint error");
    } catch (const EndpointError& e) {
        CHECK(e.status() == 503);
        CHECK(e.body() == "busy");
    }
    CHECK(hits == 4);
    REQUIRE(sleeps.size() == 3);
    for (std::size_t i = 1; i < sleeps.size(); ++i) CHECK(sleeps[i] >= sleeps[i - 1]);
}

TEST_CASE("client errors are not retried") {
    FakeServer fake;
    std::atomic<int> hits{0};
    fake.server().Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        ++hits;
        res.status = 400;
        res.set_content("{\"error\":\"bad request\"}", "application/json");
    });
    auto cfg = http_config(fake.base_url(), 3);
    Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
    CHECK_THROWS_AS(gw.complete("x", DecodingParams::deterministic()), EndpointError);
    CHECK(hits == 1);
}

TEST_CASE("unreachable endpoint is a transport error") {
    auto cfg = http_config("http://127.0.0.1:1/v1", 2);
    cfg.timeout = 200ms;
    Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
    gw.set_sleeper([](std::chrono::milliseconds) {});
    CHECK_THROWS_AS(gw.complete("x", DecodingParams::deterministic()), TransportError);
}

TEST_CASE("embedding server switching dimensions is a hard error") {
    FakeServer fake;
    std::atomic<int> hits{0};
    fake.server().Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(embedding_body(hits++ == 0 ? 4 : 6), "application/json");
    });
    auto cfg = http_config(fake.base_url(), 1);
    Gateway gw(cfg, std::make_shared<HttpBackend>(cfg));
    CHECK(gw.embed("a").size() == 4);
    CHECK_THROWS_AS(gw.embed("b"), DimensionMismatchError);
}

TEST_CASE("max_parallel bounds concurrent requests") {
    auto mock = std::make_shared<MockBackend>();
    mock->set_fallback([](const std::string& p) { return "echo " + p; });
    mock->set_latency(20ms);
    GatewayConfig cfg;
    cfg.max_parallel = 3;
    Gateway gw(cfg, mock);
    parallel_for(24, 12, [&](std::size_t i) { gw.complete("p" + std::to_string(i), DecodingParams::deterministic()); });
    CHECK(mock->calls() == 24);
    CHECK(mock->max_in_flight() <= 3);
    CHECK(mock->max_in_flight() >= 2);
}

TEST_CASE("call log round-trips through the replay cache") {
    testing::TempDir dir;
    auto path = dir / "calls.jsonl";
    {
        auto mock = std::make_shared<MockBackend>(4);
        mock->add("q", "a");
        auto log = std::make_shared<CallLog>(path);
        Gateway gw(GatewayConfig{}, mock, log);
        gw.complete("q", DecodingParams::deterministic());
        gw.embed("t");
        log->flush();
    }
    auto cache = std::make_shared<ReplayCache>(ReplayCache::load(path));
    CHECK(cache->size() == 2);
    auto empty = std::make_shared<MockBackend>(4);  // no canned replies: every hit must come from the cache
    Gateway replay(GatewayConfig{}, empty, nullptr, cache);
    CHECK(replay.complete("q", DecodingParams::deterministic()) == "a");
    CHECK(replay.embed("t").size() == 4);
    CHECK(empty->calls() == 0);
}

TEST_CASE("gateway config validation") {
    GatewayConfig c;
    c.max_parallel = 0;
    CHECK_THROWS(c.validate());
    GatewayConfig d;
    d.retry.max_attempts = 0;
    CHECK_THROWS(d.validate());
    CHECK_THROWS(Gateway(GatewayConfig{}, nullptr));
}

TEST_CASE("synthetic backend is a pure function of the prompt") {
    const std::string prompt = "Convert the given text into a task. Input is a text and Response contains three fields: "
                               "#instruction#, #input# and #output#.\n\nInput:\nThe river rose. The town moved uphill.";
    CHECK(synthetic_reply(prompt) == synthetic_reply(prompt));
    CHECK(synthetic_embedding("a b c", 32) == synthetic_embedding("a b c", 32));
    double norm = 0;
    for (double x : synthetic_embedding("a b c", 32)) norm += x * x;
    CHECK(norm == doctest::Approx(1.0));
    Gateway gw(GatewayConfig{}, make_synthetic_backend(32));
    CHECK_FALSE(gw.complete("What is love?", DecodingParams::deterministic()).empty());
}
