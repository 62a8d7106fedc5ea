#include "forge/gateway.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "httplib.h"

#include "forge/text.hpp"

namespace forge {

void DecodingParams::validate() const {
    if (max_tokens < 1) throw std::invalid_argument("max_tokens must be >= 1");
    if (!(temperature >= 0.0)) throw std::invalid_argument("temperature must be non-negative");
}

json DecodingParams::to_json() const {
    return json{{"temperature", temperature}, {"max_tokens", max_tokens}, {"stop_sequences", stop_sequences}};
}

DecodingParams DecodingParams::from_json(const json& j) {
    DecodingParams p;
    p.temperature = j.value("temperature", 1.0);
    p.max_tokens = j.value("max_tokens", 1024);
    p.stop_sequences = j.value("stop_sequences", std::vector<std::string>{});
    return p;
}

void GatewayConfig::validate() const {
    if (max_parallel < 1) throw std::invalid_argument("max_parallel must be >= 1");
    if (retry.max_attempts < 1) throw std::invalid_argument("retry.max_attempts must be >= 1");
    if (retry.base_backoff.count() < 0) throw std::invalid_argument("retry.base_backoff must be >= 0");
}

// ---------------------------------------------------------------- HTTP backend

HttpBackend::HttpBackend(GatewayConfig config) : config_(std::move(config)) {
    const std::string& url = config_.base_url;
    std::size_t scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw std::invalid_argument("base_url needs a scheme: " + url);
    std::size_t path_start = url.find('/', scheme_end + 3);
    origin_ = url.substr(0, path_start);
    path_prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') path_prefix_.pop_back();
}

BackendReply HttpBackend::post(const std::string& path, const json& body) {
    httplib::Client client(origin_);
    auto secs = std::chrono::duration_cast<std::chrono::seconds>(config_.timeout);
    auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(config_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!config_.auth_env.empty()) {
        if (const char* token = std::getenv(config_.auth_env.c_str()); token != nullptr && *token != '\0') {
            headers.emplace("Authorization", std::string("Bearer ") + token);
        }
    }
    auto res = client.Post(path_prefix_ + path, headers, dump_line(body), "application/json");
    if (!res) throw TransportError("request to " + origin_ + path_prefix_ + path + " failed: " + httplib::to_string(res.error()));

    BackendReply reply;
    reply.status = res->status;
    reply.text = res->body;
    return reply;
}

BackendReply HttpBackend::chat(const std::string& model, const std::string& prompt, const DecodingParams& params) {
    json body{{"model", model},
              {"messages", json::array({json{{"role", "user"}, {"content", prompt}}})},
              {"temperature", params.temperature},
              {"max_tokens", params.max_tokens}};
    if (!params.stop_sequences.empty()) body["stop"] = params.stop_sequences;

    BackendReply reply = post("/chat/completions", body);
    if (reply.status < 200 || reply.status >= 300) return reply;

    json doc = json::parse(reply.text, nullptr, false);
    if (doc.is_discarded()) throw EndpointError(reply.status, "unparseable response body: " + reply.text);
    try {
        const json& choice = doc.at("choices").at(0);
        if (choice.contains("message")) {
            const json& content = choice["message"].at("content");
            reply.text = content.is_null() ? std::string{} : content.get<std::string>();
        } else {
            reply.text = choice.at("text").get<std::string>();
        }
        if (auto usage = doc.find("usage"); usage != doc.end() && usage->is_object()) {
            if (usage->contains("prompt_tokens")) reply.prompt_tokens = (*usage)["prompt_tokens"].get<long>();
            if (usage->contains("completion_tokens")) reply.completion_tokens = (*usage)["completion_tokens"].get<long>();
        }
    } catch (const json::exception& e) {
        throw EndpointError(reply.status, std::string("malformed chat response: ") + e.what());
    }
    return reply;
}

BackendReply HttpBackend::embed(const std::string& model, const std::string& text) {
    BackendReply reply = post("/embeddings", json{{"model", model}, {"input", text}});
    if (reply.status < 200 || reply.status >= 300) return reply;

    json doc = json::parse(reply.text, nullptr, false);
    if (doc.is_discarded()) throw EndpointError(reply.status, "unparseable response body: " + reply.text);
    try {
        reply.embedding = doc.at("data").at(0).at("embedding").get<std::vector<double>>();
        if (auto usage = doc.find("usage"); usage != doc.end() && usage->contains("prompt_tokens")) {
            reply.prompt_tokens = (*usage)["prompt_tokens"].get<long>();
        }
    } catch (const json::exception& e) {
        throw EndpointError(reply.status, std::string("malformed embedding response: ") + e.what());
    }
    reply.text.clear();
    return reply;
}

// ---------------------------------------------------------------- mock backend

struct MockBackend::InFlight {
    explicit InFlight(MockBackend& m) : mock(m) {
        int now = ++mock.in_flight_;
        int prev = mock.max_in_flight_.load();
        while (now > prev && !mock.max_in_flight_.compare_exchange_weak(prev, now)) {
        }
        ++mock.calls_;
        if (mock.latency_.count() > 0) std::this_thread::sleep_for(mock.latency_);
    }
    ~InFlight() { --mock.in_flight_; }
    MockBackend& mock;
};

void MockBackend::add(const std::string& prompt, std::string completion) {
    std::lock_guard lock(mu_);
    canned_[sha256_hex(prompt)] = std::move(completion);
}

void MockBackend::add_embedding(const std::string& text, std::vector<double> vec) {
    std::lock_guard lock(mu_);
    canned_vectors_[text] = std::move(vec);
}

BackendReply MockBackend::chat(const std::string&, const std::string& prompt, const DecodingParams&) {
    InFlight guard(*this);
    BackendReply reply;
    {
        std::lock_guard lock(mu_);
        if (auto it = canned_.find(sha256_hex(prompt)); it != canned_.end()) {
            reply.text = it->second;
            return reply;
        }
    }
    if (!fallback_) throw MockMissError("no canned completion for prompt " + sha256_hex(prompt).substr(0, 12));
    reply.text = fallback_(prompt);
    return reply;
}

BackendReply MockBackend::embed(const std::string&, const std::string& text) {
    InFlight guard(*this);
    BackendReply reply;
    {
        std::lock_guard lock(mu_);
        if (auto it = canned_vectors_.find(text); it != canned_vectors_.end()) {
            reply.embedding = it->second;
            return reply;
        }
    }
    reply.embedding = embedder_ ? embedder_(text) : hashed_unit_vector(text, dim_);
    return reply;
}

std::vector<double> MockBackend::hashed_unit_vector(const std::string& text, std::size_t dim) {
    Rng rng(derive_seed(0x5eed, text));
    std::vector<double> v(dim);
    double norm = 0.0;
    for (auto& x : v) {
        x = rng.unit() * 2.0 - 1.0;
        norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) norm = 1.0;
    for (auto& x : v) x /= norm;
    return v;
}

// ---------------------------------------------------------------- call log

CallLog::CallLog(std::optional<std::filesystem::path> path) : path_(std::move(path)) {
    writer_ = std::thread([this] { run(); });
}

CallLog::~CallLog() {
    {
        std::lock_guard lock(mu_);
        stop_ = true;
    }
    cv_.notify_all();
    writer_.join();
}

void CallLog::append(json entry) {
    {
        std::lock_guard lock(mu_);
        queue_.push_back(std::move(entry));
    }
    cv_.notify_one();
}

void CallLog::flush() {
    std::unique_lock lock(mu_);
    drained_.wait(lock, [this] { return queue_.empty() && !busy_; });
}

std::vector<json> CallLog::entries() const {
    std::lock_guard lock(mu_);
    return written_;
}

void CallLog::run() {
    std::ofstream out;
    if (path_) {
        if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
        out.open(*path_, std::ios::app | std::ios::binary);
    }
    std::unique_lock lock(mu_);
    while (true) {
        cv_.wait(lock, [this] { return stop_ || !queue_.empty(); });
        while (!queue_.empty()) {
            json entry = std::move(queue_.front());
            queue_.pop_front();
            busy_ = true;
            lock.unlock();
            if (out.is_open()) {
                out << dump_line(entry) << '\n';
                out.flush();
            }
            lock.lock();
            written_.push_back(std::move(entry));
            busy_ = false;
        }
        drained_.notify_all();
        if (stop_) break;
    }
}

// ---------------------------------------------------------------- replay

void ReplayCache::insert(const json& entry) {
    if (entry.value("status", std::string{}) != "ok") return;
    const std::string kind = entry.value("kind", std::string{});
    const std::string hash = entry.value("prompt_hash", std::string{});
    if (kind == "chat" && entry.contains("response")) {
        completions_.emplace(hash, entry["response"].get<std::string>());
    } else if (kind == "embed" && entry.contains("embedding")) {
        embeddings_.emplace(hash, entry["embedding"].get<std::vector<double>>());
    }
}

ReplayCache ReplayCache::load(const std::filesystem::path& log_path) {
    ReplayCache cache;
    if (!std::filesystem::exists(log_path)) return cache;
    read_jsonl(log_path, [&](const json& entry, std::size_t) { cache.insert(entry); });
    return cache;
}

std::optional<std::string> ReplayCache::completion(const std::string& prompt_hash) const {
    if (auto it = completions_.find(prompt_hash); it != completions_.end()) return it->second;
    return std::nullopt;
}

std::optional<std::vector<double>> ReplayCache::embedding(const std::string& text_hash) const {
    if (auto it = embeddings_.find(text_hash); it != embeddings_.end()) return it->second;
    return std::nullopt;
}

// ---------------------------------------------------------------- labels

namespace {

std::string fold_token(std::string_view token) {
    std::size_t b = 0;
    std::size_t e = token.size();
    auto punct = [](char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; };
    while (b < e && punct(token[b])) ++b;
    while (e > b && punct(token[e - 1])) --e;
    return ascii_lower(token.substr(b, e - b));
}

}  // namespace

std::optional<std::string> match_label(std::string_view completion, const std::vector<std::string>& labels) {
    const std::string trimmed = trim(completion);
    const std::string whole = fold_token(trimmed);
    std::size_t cut = 0;
    while (cut < trimmed.size() && !std::isspace(static_cast<unsigned char>(trimmed[cut]))) ++cut;
    const std::string first = fold_token(std::string_view(trimmed).substr(0, cut));
    for (const auto& label : labels) {
        const std::string folded = fold_token(label);
        if (folded.empty()) continue;
        if (folded == whole || folded == first) return label;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------- gateway

Gateway::Gateway(GatewayConfig config, std::shared_ptr<Backend> backend, std::shared_ptr<CallLog> log,
                 std::shared_ptr<const ReplayCache> replay)
    : config_((config.validate(), std::move(config))),
      backend_(std::move(backend)),
      log_(std::move(log)),
      replay_(std::move(replay)),
      slots_(config_.max_parallel),
      sleeper_([](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }) {
    if (!backend_) throw std::invalid_argument("gateway needs a backend");
}

template <typename Fn>
BackendReply Gateway::with_retries(const std::string& kind, const std::string& hash, Fn&& call, json& entry) {
    entry = json{{"kind", kind}, {"prompt_hash", hash}, {"model", config_.model_name}};
    json backoffs = json::array();
    const auto started = std::chrono::steady_clock::now();
    std::string last_error;
    int last_status = 0;
    bool transport_failure = false;

    int attempt = 0;
    for (attempt = 1; attempt <= config_.retry.max_attempts; ++attempt) {
        if (attempt > 1) {
            auto delay = config_.retry.base_backoff * (1LL << std::min(attempt - 2, 16));
            backoffs.push_back(delay.count());
            sleeper_(delay);
        }
        try {
            slots_.acquire();
            struct Release {
                std::counting_semaphore<>& s;
                ~Release() { s.release(); }
            } release{slots_};
            BackendReply reply = call();
            if (reply.status >= 200 && reply.status < 300) {
                entry["attempts"] = attempt;
                entry["backoff_ms"] = backoffs;
                entry["latency_ms"] = std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::steady_clock::now() - started).count();
                if (reply.prompt_tokens) entry["prompt_tokens"] = *reply.prompt_tokens;
                if (reply.completion_tokens) entry["completion_tokens"] = *reply.completion_tokens;
                entry["status"] = "ok";
                return reply;
            }
            last_status = reply.status;
            last_error = reply.text;
            transport_failure = false;
            const bool retryable = reply.status >= 500 || reply.status == 429;
            if (!retryable) break;
        } catch (const TransportError& e) {
            transport_failure = true;
            last_error = e.what();
        }
    }

    entry["attempts"] = std::min(attempt, config_.retry.max_attempts);
    entry["backoff_ms"] = backoffs;
    entry["status"] = "error";
    entry["error"] = last_error;
    if (log_) log_->append(entry);
    if (transport_failure) throw TransportError(last_error);
    throw EndpointError(last_status, last_error);
}

std::string Gateway::complete(const std::string& prompt, const DecodingParams& params) {
    if (prompt.empty()) throw std::invalid_argument("complete: prompt is empty");
    params.validate();
    const std::string hash = sha256_hex(prompt);
    if (replay_) {
        if (auto cached = replay_->completion(hash)) return *cached;
    }
    json entry;
    BackendReply reply = with_retries(
        "chat", hash, [&] { return backend_->chat(config_.model_name, prompt, params); }, entry);
    entry["response"] = reply.text;
    entry["decoding"] = params.to_json();
    if (log_) log_->append(std::move(entry));
    return reply.text;
}

std::vector<double> Gateway::embed(const std::string& text) {
    if (text.empty()) throw std::invalid_argument("embed: text is empty");
    const std::string hash = sha256_hex(text);
    std::vector<double> vec;
    std::optional<std::vector<double>> cached;
    if (replay_) cached = replay_->embedding(hash);
    if (cached) {
        vec = std::move(*cached);
    } else {
        json entry;
        BackendReply reply = with_retries(
            "embed", hash, [&] { return backend_->embed(config_.model_name, text); }, entry);
        vec = std::move(reply.embedding);
        entry["embedding"] = vec;
        if (log_) log_->append(std::move(entry));
    }
    if (vec.empty()) throw EndpointError(200, "empty embedding vector");

    std::size_t expected = 0;
    if (!embedding_dim_.compare_exchange_strong(expected, vec.size()) && expected != vec.size()) {
        throw DimensionMismatchError("embedding dimension changed from " + std::to_string(expected) + " to " +
                                     std::to_string(vec.size()));
    }
    return vec;
}

ClassifyResult Gateway::classify(const std::string& prompt, const std::vector<std::string>& labels,
                                 const DecodingParams& params) {
    if (labels.empty()) throw std::invalid_argument("classify: labels are empty");
    std::string raw = complete(prompt, params);
    auto label = match_label(raw, labels);
    if (!label) throw UnrecognizedLabelError(raw);
    return {*label, raw};
}

}  // namespace forge
