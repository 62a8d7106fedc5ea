#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <string_view>
#include <thread>
#include <unordered_map>
#include <vector>

#include "forge/jsonl.hpp"

namespace forge {

struct DecodingParams {
    double temperature = 1.0;
    int max_tokens = 1024;
    std::vector<std::string> stop_sequences;

    void validate() const;
    json to_json() const;
    static DecodingParams from_json(const json& j);

    /// Task generation: diversity matters.
    static DecodingParams generation() { return {1.0, 1024, {}}; }
    /// Classification and checks: stability matters.
    static DecodingParams deterministic() { return {0.0, 256, {}}; }
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_backoff{500};
};

struct GatewayConfig {
    std::string base_url = "http://127.0.0.1:8000/v1";
    std::string model_name = "default";
    std::string auth_env = "OPENAI_API_KEY";
    int max_parallel = 4;
    RetryPolicy retry;
    std::chrono::milliseconds timeout{60000};

    void validate() const;
};

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Connection or timeout failure that outlived every retry.
class TransportError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

/// Non-2xx answer from the endpoint; carries the response body.
class EndpointError : public GatewayError {
public:
    EndpointError(int status, std::string body)
        : GatewayError("endpoint returned HTTP " + std::to_string(status) + ": " + body),
          status_(status), body_(std::move(body)) {}
    int status() const { return status_; }
    const std::string& body() const { return body_; }

private:
    int status_;
    std::string body_;
};

class MockMissError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class DimensionMismatchError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

class UnrecognizedLabelError : public GatewayError {
public:
    explicit UnrecognizedLabelError(std::string raw)
        : GatewayError("completion matches no label: " + raw), raw_(std::move(raw)) {}
    const std::string& raw() const { return raw_; }

private:
    std::string raw_;
};

struct BackendReply {
    int status = 200;
    std::string text;                // chat completion text, or error body
    std::vector<double> embedding;   // embedding requests only
    std::optional<long> prompt_tokens;
    std::optional<long> completion_tokens;
};

/// Transport behind a Gateway. Implementations throw TransportError for
/// connection-level failures and report HTTP failures through `status`.
class Backend {
public:
    virtual ~Backend() = default;
    virtual BackendReply chat(const std::string& model, const std::string& prompt, const DecodingParams& params) = 0;
    virtual BackendReply embed(const std::string& model, const std::string& text) = 0;
};

/// OpenAI-compatible HTTP transport (POST <base>/chat/completions and
/// <base>/embeddings).
class HttpBackend : public Backend {
public:
    explicit HttpBackend(GatewayConfig config);
    BackendReply chat(const std::string& model, const std::string& prompt, const DecodingParams& params) override;
    BackendReply embed(const std::string& model, const std::string& text) override;

private:
    BackendReply post(const std::string& path, const json& body);
    GatewayConfig config_;
    std::string origin_;
    std::string path_prefix_;
};

/// Deterministic in-process backend. Completions are looked up by prompt
/// hash; misses go to the fallback responder, or fail when none is set.
/// Embeddings are hash-seeded unit vectors unless canned.
class MockBackend : public Backend {
public:
    using Responder = std::function<std::string(const std::string& prompt)>;
    using Embedder = std::function<std::vector<double>(const std::string& text)>;

    explicit MockBackend(std::size_t embedding_dim = 64) : dim_(embedding_dim) {}

    void add(const std::string& prompt, std::string completion);
    void add_embedding(const std::string& text, std::vector<double> vec);
    void set_fallback(Responder responder) { fallback_ = std::move(responder); }
    void set_embedder(Embedder embedder) { embedder_ = std::move(embedder); }
    /// Holds each request open for `d`; lets tests observe overlap.
    void set_latency(std::chrono::milliseconds d) { latency_ = d; }

    BackendReply chat(const std::string& model, const std::string& prompt, const DecodingParams& params) override;
    BackendReply embed(const std::string& model, const std::string& text) override;

    std::size_t calls() const { return calls_.load(); }
    int max_in_flight() const { return max_in_flight_.load(); }

    static std::vector<double> hashed_unit_vector(const std::string& text, std::size_t dim);

private:
    struct InFlight;
    std::size_t dim_;
    mutable std::mutex mu_;
    std::unordered_map<std::string, std::string> canned_;
    std::unordered_map<std::string, std::vector<double>> canned_vectors_;
    Responder fallback_;
    Embedder embedder_;
    std::chrono::milliseconds latency_{0};
    std::atomic<std::size_t> calls_{0};
    std::atomic<int> in_flight_{0};
    std::atomic<int> max_in_flight_{0};
};

/// Append-only JSONL call log. Writes go through a queue drained by one
/// writer thread; `flush()` blocks until the queue is empty.
class CallLog {
public:
    explicit CallLog(std::optional<std::filesystem::path> path = std::nullopt);
    ~CallLog();
    CallLog(const CallLog&) = delete;
    CallLog& operator=(const CallLog&) = delete;

    void append(json entry);
    void flush();
    std::vector<json> entries() const;

private:
    void run();
    std::optional<std::filesystem::path> path_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable drained_;
    std::deque<json> queue_;
    std::vector<json> written_;
    bool stop_ = false;
    bool busy_ = false;
    std::thread writer_;
};

/// Responses recovered from a previous call log, keyed by (kind, prompt hash).
class ReplayCache {
public:
    static ReplayCache load(const std::filesystem::path& log_path);
    void insert(const json& entry);
    std::optional<std::string> completion(const std::string& prompt_hash) const;
    std::optional<std::vector<double>> embedding(const std::string& text_hash) const;
    std::size_t size() const { return completions_.size() + embeddings_.size(); }

private:
    std::map<std::string, std::string> completions_;
    std::map<std::string, std::vector<double>> embeddings_;
};

struct ClassifyResult {
    std::string label;
    std::string raw;
};

/// Returns the first label equal (case-folded, punctuation-stripped) to the
/// whole trimmed completion or to its first whitespace-delimited token.
std::optional<std::string> match_label(std::string_view completion, const std::vector<std::string>& labels);

/// Uniform client: bounded parallelism, capped retries with non-decreasing
/// backoff, call logging and optional replay. Safe for concurrent use.
class Gateway {
public:
    Gateway(GatewayConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<CallLog> log = nullptr,
            std::shared_ptr<const ReplayCache> replay = nullptr);

    std::string complete(const std::string& prompt, const DecodingParams& params);
    std::vector<double> embed(const std::string& text);
    ClassifyResult classify(const std::string& prompt, const std::vector<std::string>& labels,
                            const DecodingParams& params = DecodingParams::deterministic());

    const GatewayConfig& config() const { return config_; }
    const std::string& model_name() const { return config_.model_name; }
    int max_parallel() const { return config_.max_parallel; }
    CallLog* call_log() const { return log_.get(); }

    /// Test hook: replaces std::this_thread::sleep_for during backoff.
    void set_sleeper(std::function<void(std::chrono::milliseconds)> sleeper) { sleeper_ = std::move(sleeper); }

private:
    template <typename Fn>
    BackendReply with_retries(const std::string& kind, const std::string& hash, Fn&& call, json& log_entry);

    GatewayConfig config_;
    std::shared_ptr<Backend> backend_;
    std::shared_ptr<CallLog> log_;
    std::shared_ptr<const ReplayCache> replay_;
    std::counting_semaphore<> slots_;
    std::atomic<std::size_t> embedding_dim_{0};
    std::function<void(std::chrono::milliseconds)> sleeper_;
};

}  // namespace forge
