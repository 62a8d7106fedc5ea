#include "forge/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "forge/analytics.hpp"
#include "forge/filter.hpp"
#include "forge/parallel.hpp"
#include "forge/review.hpp"
#include "forge/seeds.hpp"
#include "forge/synthetic.hpp"
#include "forge/task_forge.hpp"
#include "forge/text.hpp"

namespace fs = std::filesystem;

namespace forge {

// ---------------------------------------------------------------- config

const std::vector<ConfigKey>& corpus_config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"path", "", "path", "JSONL file, or directory of JSONL / plain-text files"},
        {"format", "jsonl", "jsonl|plain-text-per-file", "input format"},
        {"mode", "", "|window|qa_pair|whole", "sampling mode; empty picks the corpus default"},
        {"min_chars", "", "uint?", "window minimum in characters (default 2000)"},
        {"max_chars", "", "uint?", "window maximum in characters (default 3500)"},
        {"snap", "true", "bool", "snap windows to sentence boundaries"},
        {"qa_question", "", "string", "regex for question lines (qa_pair mode)"},
        {"qa_answer", "", "string", "regex for answer lines (qa_pair mode)"},
        {"limit", "0", "uint", "keep at most this many raw documents, drawn at random; 0 keeps all"},
    };
    return keys;
}

namespace {

constexpr std::string_view kCorpusPrefix = "corpus.";

const ConfigKey* find_key(const std::string& key) {
    for (const auto& k : config_keys()) {
        if (k.name == key) return &k;
    }
    if (key.starts_with(kCorpusPrefix)) {
        auto dot = key.rfind('.');
        if (dot > kCorpusPrefix.size()) {
            std::string field = key.substr(dot + 1);
            for (const auto& k : corpus_config_keys()) {
                if (k.name == field) return &k;
            }
        }
    }
    return nullptr;
}

bool parse_bool(std::string_view v, bool& out) {
    std::string s = ascii_lower(v);
    if (s == "true" || s == "yes" || s == "on" || s == "1") { out = true; return true; }
    if (s == "false" || s == "no" || s == "off" || s == "0") { out = false; return true; }
    return false;
}

bool parse_uint(std::string_view v, std::uint64_t& out) {
    auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    return ec == std::errc() && p == v.data() + v.size() && !v.empty();
}

bool parse_real(std::string_view v, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(std::string(v), &used);
        return used == v.size();
    } catch (const std::exception&) {
        return false;
    }
}

void check_value(const ConfigKey& def, const std::string& key, const std::string& value) {
    std::string type = def.type;
    const bool optional = type.ends_with("?");
    if (optional) type.pop_back();
    if (value.empty() && (optional || type == "string" || type == "path")) return;
    auto fail = [&](const std::string& what) {
        throw ConfigError("config key '" + key + "': '" + value + "' is not " + what);
    };
    if (type == "string" || type == "path") return;
    if (type == "bool") {
        bool b;
        if (!parse_bool(value, b)) fail("a boolean");
    } else if (type == "uint") {
        std::uint64_t u;
        if (!parse_uint(value, u)) fail("a non-negative integer");
    } else if (type == "real") {
        double d;
        if (!parse_real(value, d) || d < 0) fail("a non-negative number");
    } else if (type == "unit") {
        double d;
        if (!parse_real(value, d) || d < 0.0 || d > 1.0) fail("a number in [0, 1]");
    } else {
        std::vector<std::string> choices;
        std::stringstream ss(type);
        for (std::string c; std::getline(ss, c, '|');) choices.push_back(c);
        if (type.starts_with("|")) choices.push_back("");
        if (std::find(choices.begin(), choices.end(), value) == choices.end()) fail("one of " + type);
    }
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
    static const std::vector<ConfigKey> keys = {
        {"run.seed", "42", "uint", "seed for every random draw in the run"},
        {"run.created_at", "", "string", "fixed created_at stamp for records; empty uses the clock"},
        {"pipeline.stages",
         "sample,seed-expand,seed-invert,build-meta,filter,gate,stats,diversity,relevance,export-sft,export-disc",
         "string", "stages run by `forge all`, in order"},
        {"pipeline.order", "filter_first", "filter_first|gate_first", "whether filtering or gating runs first"},
        {"gateway.backend", "mock", "mock|http", "mock is the offline synthetic model"},
        {"gateway.base_url", "http://127.0.0.1:8000/v1", "string", "OpenAI-compatible endpoint prefix"},
        {"gateway.model", "default", "string", "model name sent with every request"},
        {"gateway.auth_env", "OPENAI_API_KEY", "string", "environment variable holding the bearer token"},
        {"gateway.max_parallel", "4", "uint", "requests in flight at most"},
        {"gateway.max_attempts", "3", "uint", "attempts per request, including the first"},
        {"gateway.base_backoff_ms", "500", "uint", "backoff before the second attempt; doubles after"},
        {"gateway.timeout_ms", "60000", "uint", "per-request timeout"},
        {"gateway.embedding_dim", "64", "uint", "embedding size of the mock backend"},
        {"decoding.generation.temperature", "1.0", "real", "temperature for task generation"},
        {"decoding.generation.max_tokens", "1024", "uint", "max tokens for task generation"},
        {"decoding.check.temperature", "0", "real", "temperature for classification and checks"},
        {"decoding.check.max_tokens", "256", "uint", "max tokens for classification and checks"},
        {"seeds.manual", "", "path", "JSONL of manual seeds (both views)"},
        {"seeds.k", "5", "uint", "demonstrations per document-view expansion prompt"},
        {"seeds.expand_documents", "200", "uint", "documents drawn for document-view expansion"},
        {"seeds.parse_attempts", "1", "uint", "expansion attempts per document"},
        {"seeds.filter_expanded", "true", "bool", "drop expanded seeds whose task score is below filter.theta"},
        {"seeds.invert_source", "", "path", "JSONL of tasks {instruction, input, output} to invert"},
        {"seeds.invert_count", "50", "uint", "tasks drawn for inversion"},
        {"seeds.invert_k", "5", "uint", "demonstrations per inversion prompt"},
        {"seeds.inversions_per_task", "1", "uint", "inversions requested per task"},
        {"prompt.generation_template", "", "path", "override of the generation prompt template"},
        {"prompt.inversion_template", "", "path", "override of the inversion prompt template"},
        {"meta.generator_text", "", "string", "override of the generator meta-instruction"},
        {"meta.discriminator_text", "", "string", "override of the discriminator meta-instruction"},
        {"meta.document_view_demos", "3", "uint", "document-view demonstrations per build-meta prompt"},
        {"meta.task_view_demos", "2", "uint", "task-view demonstrations per build-meta prompt"},
        {"filter.theta", "0.5", "unit", "records with task score below theta are removed"},
        {"filter.consistency_theta", "", "unit?", "threshold of the consistency check; empty uses filter.theta"},
        {"filter.overlap", "true", "bool", "run the token-overlap filter"},
        {"filter.answerability", "true", "bool", "run the answerability probe"},
        {"filter.consistency", "true", "bool", "run the consistency check"},
        {"filter.judge_mode", "false", "bool", "ask a yes/no judge after the refusal patterns"},
        {"filter.refusal_patterns", "", "string", "'|'-separated reply prefixes counted as refusals"},
        {"filter.consistency_direction", "output_in_reply", "output_in_reply|reply_in_output",
         "normalize the consistency overlap by the output or by the reply"},
        {"gate.enabled", "true", "bool", "run the discriminator gate"},
        {"dedupe.enabled", "true", "bool", "drop duplicate tasks before retaining"},
        {"relevance.semantic", "true", "bool", "add embedding-based relevance"},
        {"relevance.mode", "embedding_cosine", "embedding_cosine|token_greedy", "semantic scorer"},
        {"review.sample_size", "50", "uint", "items per review queue"},
        {"review.left", "", "path", "pairwise: retained.jsonl of the left system"},
        {"review.right", "", "path", "pairwise: retained.jsonl of the right system"},
        {"review.left_system", "A", "string", "pairwise: name of the left system"},
        {"review.right_system", "B", "string", "pairwise: name of the right system"},
        {"review.subject", "", "string", "pairwise report orientation; empty uses the left system"},
        {"review.assets", "", "path", "directory served at /; empty uses the bundled page"},
    };
    return keys;
}

Config::Config() : base_dir_(fs::current_path()) {
    for (const auto& k : config_keys()) values_[k.name] = k.default_value;
}

Config Config::parse(std::string_view text, const std::string& origin) {
    Config c;
    std::size_t line_no = 0;
    for (const auto& raw : split_lines(text)) {
        ++line_no;
        std::string line = trim(raw);
        if (line.empty() || line.front() == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": expected 'key = value'");
        }
        try {
            c.set(trim(std::string_view(line).substr(0, eq)), trim(std::string_view(line).substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return c;
}

Config Config::load(const fs::path& path) {
    Config c = parse(read_file(path), path.string());
    c.base_dir_ = fs::absolute(path).parent_path();
    return c;
}

void Config::set(const std::string& key, const std::string& value) {
    const ConfigKey* def = find_key(key);
    if (!def) throw ConfigError("unknown config key '" + key + "'");
    check_value(*def, key, value);
    values_[key] = value;
}

const std::string& Config::get(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    const ConfigKey* def = find_key(key);
    if (!def) throw ConfigError("unknown config key '" + key + "'");
    return def->default_value;
}

std::optional<std::string> Config::get_optional(const std::string& key) const {
    const std::string& v = get(key);
    if (v.empty()) return std::nullopt;
    return v;
}

double Config::get_real(const std::string& key) const {
    double d = 0.0;
    if (!parse_real(get(key), d)) throw ConfigError("config key '" + key + "' is not a number");
    return d;
}

std::uint64_t Config::get_uint(const std::string& key) const {
    std::uint64_t u = 0;
    if (!parse_uint(get(key), u)) throw ConfigError("config key '" + key + "' is not an integer");
    return u;
}

bool Config::get_bool(const std::string& key) const {
    bool b = false;
    if (!parse_bool(get(key), b)) throw ConfigError("config key '" + key + "' is not a boolean");
    return b;
}

std::vector<std::string> Config::get_list(const std::string& key) const {
    std::vector<std::string> out;
    std::stringstream ss(get(key));
    for (std::string item; std::getline(ss, item, ',');) {
        std::string t = trim(item);
        if (!t.empty()) out.push_back(t);
    }
    return out;
}

std::optional<fs::path> Config::get_path(const std::string& key) const {
    auto v = get_optional(key);
    if (!v) return std::nullopt;
    fs::path p(*v);
    return p.is_absolute() ? p : base_dir_ / p;
}

std::vector<std::string> Config::corpus_names() const {
    std::set<std::string> names;
    for (const auto& [key, value] : values_) {
        if (!key.starts_with(kCorpusPrefix)) continue;
        auto dot = key.rfind('.');
        names.insert(key.substr(kCorpusPrefix.size(), dot - kCorpusPrefix.size()));
    }
    for (const auto& n : names) {
        if (get("corpus." + n + ".path").empty()) throw ConfigError("corpus '" + n + "' has no corpus." + n + ".path");
    }
    return {names.begin(), names.end()};
}

json Config::snapshot() const {
    json j = json::object();
    for (const auto& [k, v] : values_) j[k] = v;
    return j;
}

std::string Config::to_text() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
}

std::string Config::hash() const { return sha256_hex(to_text()); }

Config resolve_config(const fs::path& run_dir, const std::optional<fs::path>& path) {
    if (path) return Config::load(*path);
    fs::path local = run_dir / "forge.conf";
    if (fs::exists(local)) return Config::load(local);
    return Config{};
}

// ---------------------------------------------------------------- stages

std::string_view to_string(Stage s) {
    switch (s) {
        case Stage::sample: return "sample";
        case Stage::seed_expand: return "seed-expand";
        case Stage::seed_invert: return "seed-invert";
        case Stage::build_meta: return "build-meta";
        case Stage::generate: return "generate";
        case Stage::filter: return "filter";
        case Stage::gate: return "gate";
        case Stage::stats: return "stats";
        case Stage::diversity: return "diversity";
        case Stage::relevance: return "relevance";
        case Stage::export_sft: return "export-sft";
        case Stage::export_disc: return "export-disc";
    }
    return "sample";
}

const std::vector<Stage>& all_stages() {
    static const std::vector<Stage> stages = {
        Stage::sample, Stage::seed_expand, Stage::seed_invert, Stage::build_meta, Stage::generate, Stage::filter,
        Stage::gate, Stage::stats, Stage::diversity, Stage::relevance, Stage::export_sft, Stage::export_disc,
    };
    return stages;
}

Stage parse_stage(std::string_view s) {
    for (Stage st : all_stages()) {
        if (to_string(st) == s) return st;
    }
    throw std::invalid_argument("unknown stage: " + std::string(s));
}

bool Counters::conserved() const {
    return generated == parse_failed + filtered + gated_invalid + retained + in_flight;
}

json Counters::to_json() const {
    return json{{"sampled", sampled},   {"generated", generated},         {"parse_failed", parse_failed},
                {"filtered", filtered}, {"gated_invalid", gated_invalid}, {"retained", retained},
                {"in_flight", in_flight}};
}

std::string task_fingerprint(const Task& task) {
    return sha256_hex(normalize_whitespace(task.instruction) + '\x1f' + normalize_whitespace(task.input) + '\x1f' +
                      normalize_whitespace(task.output));
}

DedupeResult dedupe(std::vector<TaskRecord> records) {
    DedupeResult result;
    std::set<std::string> seen;
    for (auto& r : records) {
        if (!r.task || seen.insert(task_fingerprint(*r.task)).second) {
            result.kept.push_back(std::move(r));
            continue;
        }
        r.advance(RecordStatus::filtered);
        r.reject_reason = "duplicate";
        result.dropped.push_back(std::move(r));
    }
    return result;
}

// ---------------------------------------------------------------- pipeline

namespace {

std::size_t count_lines(const fs::path& p) {
    if (!fs::exists(p)) return 0;
    std::ifstream in(p, std::ios::binary);
    std::size_t n = 0;
    for (std::string line; std::getline(in, line);) {
        if (!is_blank(line)) ++n;
    }
    return n;
}

std::string file_hash(const fs::path& p) { return sha256_hex(read_file(p)); }

/// Hashes a file, or every regular file below a directory in path order.
std::string tree_hash(const fs::path& p) {
    if (!fs::exists(p)) return "missing";
    if (!fs::is_directory(p)) return file_hash(p);
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::string acc;
    for (const auto& f : files) acc += fs::relative(f, p).generic_string() + ":" + file_hash(f) + "\n";
    return sha256_hex(acc);
}

std::vector<Document> read_documents(const fs::path& p) {
    std::vector<Document> docs;
    for (const auto& j : read_jsonl_strict(p)) docs.push_back(document_from_json(j));
    return docs;
}

void write_records(const fs::path& p, const std::vector<TaskRecord>& records) {
    write_file_atomic(p, records_to_jsonl(records));
}

/// Uniform subset of size min(n, count) of [0, n), returned in ascending order.
std::vector<std::size_t> pick_subset(std::size_t n, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (count >= n) return idx;
    Rng rng(seed);
    rng.shuffle(idx);
    idx.resize(count);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::vector<std::string> errors_json(const std::vector<std::string>& errors) { return errors; }

}  // namespace

struct Pipeline::State {
    fs::path lock_path;
    json manifest;
    std::shared_ptr<Gateway> gateway;
};

Pipeline::Pipeline(fs::path run_dir, Config config, RunOptions options)
    : state_(std::make_unique<State>()), run_dir_(std::move(run_dir)), config_(std::move(config)),
      options_(std::move(options)) {
    fs::create_directories(run_dir_);
    state_->lock_path = run_dir_ / run_files::lock;
    int fd = ::open(state_->lock_path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0) {
        throw LockError("run directory " + run_dir_.string() + " is locked by another process (remove " +
                        state_->lock_path.string() + " if it is stale)");
    }
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto written = ::write(fd, pid.data(), pid.size());
    ::close(fd);

    fs::path mpath = run_dir_ / run_files::manifest;
    if (fs::exists(mpath)) {
        try {
            state_->manifest = json::parse(read_file(mpath));
        } catch (const json::exception& e) {
            fs::remove(state_->lock_path);
            throw PipelineError("unreadable manifest " + mpath.string() + ": " + e.what());
        }
    } else {
        const std::string now = utc_timestamp();
        state_->manifest = json{{"run_id", sha256_hex(fs::absolute(run_dir_).string() + now).substr(0, 12)},
                                {"created_at", now},
                                {"stages", json::object()}};
    }
    if (!state_->manifest.contains("stages")) state_->manifest["stages"] = json::object();
}

Pipeline::~Pipeline() {
    std::error_code ec;
    fs::remove(state_->lock_path, ec);
}

json Pipeline::manifest() const { return state_->manifest; }

namespace {

struct StageOutput {
    std::vector<std::string> files;
    json report = json::object();
};

MetaInstruction meta_from(const Config& c) {
    MetaInstruction m;
    if (auto g = c.get_optional("meta.generator_text")) m.generator_text = *g;
    if (auto d = c.get_optional("meta.discriminator_text")) m.discriminator_text = *d;
    return m;
}

DecodingParams generation_params(const Config& c) {
    DecodingParams p{c.get_real("decoding.generation.temperature"),
                     static_cast<int>(c.get_uint("decoding.generation.max_tokens")), {}};
    p.validate();
    return p;
}

DecodingParams check_params(const Config& c) {
    DecodingParams p{c.get_real("decoding.check.temperature"), static_cast<int>(c.get_uint("decoding.check.max_tokens")),
                     {}};
    p.validate();
    return p;
}

PromptTemplate template_from(const Config& c, const std::string& key, PromptTemplate fallback) {
    if (auto p = c.get_path(key)) return PromptTemplate::load(*p);
    return fallback;
}

bool filter_first(const Config& c) { return c.get("pipeline.order") == "filter_first"; }

/// Stages whose outputs are derived from `s`'s outputs.
std::vector<Stage> direct_dependents(Stage s, const Config& c) {
    const Stage first = filter_first(c) ? Stage::filter : Stage::gate;
    const Stage second = filter_first(c) ? Stage::gate : Stage::filter;
    const std::vector<Stage> finals = {Stage::stats, Stage::diversity, Stage::relevance, Stage::export_sft,
                                       Stage::export_disc};
    switch (s) {
        case Stage::sample: return {Stage::seed_expand, Stage::build_meta, Stage::generate};
        case Stage::seed_expand:
        case Stage::seed_invert: return {Stage::build_meta};
        case Stage::build_meta: return {Stage::generate, first};
        case Stage::generate: return {Stage::build_meta, first};
        default: break;
    }
    std::vector<Stage> out;
    if (s == first) out.push_back(second);
    if (s == second || s == first) out.insert(out.end(), finals.begin(), finals.end());
    return out;
}

}  // namespace

Counters Pipeline::recount() const {
    auto p = [&](std::string_view name) { return run_dir_ / name; };
    const json& stages = state_->manifest["stages"];
    Counters c;
    c.sampled = count_lines(p(run_files::documents));
    if (!fs::exists(p(run_files::generated))) return c;
    for (const auto& r : read_records(p(run_files::generated))) {
        ++c.generated;
        if (r.status == RecordStatus::parse_failed) ++c.parse_failed;
    }
    c.filtered = count_lines(p(run_files::rejects)) + count_lines(p(run_files::duplicates));
    c.gated_invalid = count_lines(p(run_files::gated_invalid));
    c.retained = count_lines(p(run_files::retained));

    const bool ff = filter_first(config_);
    const std::string first = std::string(to_string(ff ? Stage::filter : Stage::gate));
    const std::string second = std::string(to_string(ff ? Stage::gate : Stage::filter));
    const auto first_passed = ff ? run_files::filter_passed : run_files::gate_passed;
    const auto first_parked = ff ? run_files::filter_parked : run_files::gate_parked;
    const auto second_parked = ff ? run_files::gate_parked : run_files::filter_parked;
    if (!stages.contains(first)) {
        c.in_flight = c.generated - c.parse_failed;
    } else if (!stages.contains(second)) {
        c.in_flight = count_lines(p(first_passed)) + count_lines(p(first_parked));
    } else {
        c.in_flight = count_lines(p(first_parked)) + count_lines(p(second_parked));
    }
    return c;
}

std::vector<StageResult> Pipeline::run_all() {
    std::vector<StageResult> results;
    for (const auto& name : config_.get_list("pipeline.stages")) results.push_back(run(parse_stage(name)));
    return results;
}

StageResult Pipeline::run(Stage stage) {
    const std::string name(to_string(stage));
    auto p = [&](std::string_view file) { return run_dir_ / file; };
    json& stages = state_->manifest["stages"];
    const bool ff = filter_first(config_);

    auto require = [&](std::string_view file, std::string_view producer) {
        if (!fs::exists(p(file))) throw MissingUpstreamError(name, std::string(producer));
    };
    auto gateway = [&]() -> Gateway& {
        if (!state_->gateway) {
            GatewayConfig gc;
            gc.base_url = config_.get("gateway.base_url");
            gc.model_name = config_.get("gateway.model");
            gc.auth_env = config_.get("gateway.auth_env");
            gc.max_parallel = static_cast<int>(config_.get_uint("gateway.max_parallel"));
            gc.retry.max_attempts = static_cast<int>(config_.get_uint("gateway.max_attempts"));
            gc.retry.base_backoff = std::chrono::milliseconds(config_.get_uint("gateway.base_backoff_ms"));
            gc.timeout = std::chrono::milliseconds(config_.get_uint("gateway.timeout_ms"));
            gc.validate();
            std::shared_ptr<Backend> backend = options_.backend;
            if (!backend) {
                if (config_.get("gateway.backend") == "mock") {
                    backend = make_synthetic_backend(config_.get_uint("gateway.embedding_dim"));
                } else {
                    backend = std::make_shared<HttpBackend>(gc);
                }
            }
            std::shared_ptr<const ReplayCache> replay;
            if (options_.replay && fs::exists(p(run_files::calls))) {
                replay = std::make_shared<ReplayCache>(ReplayCache::load(p(run_files::calls)));
            }
            auto log = std::make_shared<CallLog>(p(run_files::calls));
            state_->gateway = std::make_shared<Gateway>(gc, backend, log, replay);
        }
        return *state_->gateway;
    };

    // Prerequisites and inputs, checked before anything is written.
    std::vector<fs::path> inputs;
    const std::vector<Stage> finals = {Stage::stats, Stage::diversity, Stage::relevance, Stage::export_sft,
                                       Stage::export_disc};
    switch (stage) {
        case Stage::sample: {
            auto names = config_.corpus_names();
            if (names.empty()) throw ConfigError("sample: no corpus configured (set corpus.<Name>.path)");
            for (const auto& n : names) inputs.push_back(*config_.get_path("corpus." + n + ".path"));
            break;
        }
        case Stage::seed_expand:
            require(run_files::documents, "sample");
            if (!config_.get_path("seeds.manual")) throw ConfigError("seed-expand: seeds.manual is not set");
            inputs = {p(run_files::documents), *config_.get_path("seeds.manual")};
            break;
        case Stage::seed_invert:
            if (!config_.get_path("seeds.manual")) throw ConfigError("seed-invert: seeds.manual is not set");
            if (!config_.get_path("seeds.invert_source")) throw ConfigError("seed-invert: seeds.invert_source is not set");
            inputs = {*config_.get_path("seeds.manual"), *config_.get_path("seeds.invert_source")};
            break;
        case Stage::build_meta:
            require(run_files::documents, "sample");
            require(run_files::seeds_document_view, "seed-expand");
            inputs = {p(run_files::documents), p(run_files::seeds_document_view)};
            if (config_.get_uint("meta.task_view_demos") > 0) {
                require(run_files::seeds_task_view, "seed-invert");
                inputs.push_back(p(run_files::seeds_task_view));
            }
            break;
        case Stage::generate:
            require(run_files::documents, "sample");
            inputs = {p(run_files::documents)};
            break;
        case Stage::filter:
        case Stage::gate: {
            const bool is_first = (stage == Stage::filter) == ff;
            if (is_first) {
                if (!fs::exists(p(run_files::generated))) throw MissingUpstreamError(name, "generate");
                inputs = {p(run_files::generated)};
            } else {
                const Stage first = ff ? Stage::filter : Stage::gate;
                if (!stages.contains(std::string(to_string(first)))) {
                    throw OrderingError("stage '" + name + "' cannot run before '" + std::string(to_string(first)) +
                                        "' (pipeline.order = " + config_.get("pipeline.order") + ")");
                }
                inputs = {p(ff ? run_files::filter_passed : run_files::gate_passed)};
            }
            break;
        }
        case Stage::stats:
        case Stage::diversity:
        case Stage::relevance:
        case Stage::export_sft:
        case Stage::export_disc:
            if (!stages.contains(std::string(to_string(ff ? Stage::gate : Stage::filter)))) {
                throw MissingUpstreamError(name, std::string(to_string(ff ? Stage::gate : Stage::filter)));
            }
            require(run_files::retained, ff ? "gate" : "filter");
            inputs = {p(run_files::retained)};
            if (stage == Stage::export_disc) {
                require(run_files::rejects, "filter");
                inputs.push_back(p(run_files::rejects));
                if (fs::exists(p(run_files::judgments))) inputs.push_back(p(run_files::judgments));
            }
            break;
    }
    for (const char* key : {"prompt.generation_template", "prompt.inversion_template"}) {
        if (auto t = config_.get_path(key)) inputs.push_back(*t);
    }

    std::string acc = name + "\n" + config_.hash() + "\n";
    for (const auto& in : inputs) acc += in.filename().string() + ":" + tree_hash(in) + "\n";
    const std::string input_hash = sha256_hex(acc);

    if (stages.contains(name) && stages[name].value("input_hash", "") == input_hash) {
        bool intact = true;
        for (const auto& [file, sha] : stages[name]["outputs"].items()) {
            if (!fs::exists(p(file)) || file_hash(p(file)) != sha.get<std::string>()) intact = false;
        }
        if (intact) {
            StageResult r{stage, true, stages[name].value("report", json::object()), recount()};
            return r;
        }
    }

    // Outputs derived from this stage's previous outputs are now stale.
    std::set<Stage> stale;
    std::vector<Stage> work = direct_dependents(stage, config_);
    while (!work.empty()) {
        Stage s = work.back();
        work.pop_back();
        if (s == stage || !stale.insert(s).second) continue;
        for (Stage d : direct_dependents(s, config_)) work.push_back(d);
    }
    for (Stage s : stale) {
        const std::string sn(to_string(s));
        if (!stages.contains(sn)) continue;
        for (const auto& [file, _] : stages[sn]["outputs"].items()) {
            std::error_code ec;
            fs::remove(p(file), ec);
        }
        stages.erase(sn);
    }

    const std::string started = utc_timestamp();
    const std::uint64_t seed = config_.get_uint("run.seed");
    const MetaInstruction meta = meta_from(config_);
    StageOutput out;

    auto finalize = [&](std::vector<TaskRecord> passed) {
        DedupeResult d;
        if (config_.get_bool("dedupe.enabled")) {
            d = dedupe(std::move(passed));
        } else {
            d.kept = std::move(passed);
        }
        for (auto& r : d.kept) r.advance(RecordStatus::retained);
        write_records(p(run_files::retained), d.kept);
        write_records(p(run_files::duplicates), d.dropped);
        out.files.insert(out.files.end(), {std::string(run_files::retained), std::string(run_files::duplicates)});
        out.report["retained"] = d.kept.size();
        out.report["duplicates"] = d.dropped.size();
    };

    auto parsed_records = [&](const fs::path& file) {
        std::vector<TaskRecord> recs;
        for (auto& r : read_records(file)) {
            if (r.status == RecordStatus::parsed) recs.push_back(std::move(r));
        }
        return recs;
    };

    switch (stage) {
        case Stage::sample: {
            std::vector<Document> docs;
            std::set<std::string> seen_text;
            json per_corpus = json::object();
            for (const auto& n : config_.corpus_names()) {
                const std::string base = "corpus." + n + ".";
                const CorpusKind kind = CorpusKind::parse(n);
                SamplingPolicy policy = SamplingPolicy::default_for(kind);
                const std::string mode = config_.get(base + "mode");
                if (mode == "window") policy = SamplingPolicy::window(2000, 3500);
                if (mode == "qa_pair") policy = SamplingPolicy::qa_pair();
                if (mode == "whole") policy = SamplingPolicy::whole();
                if (policy.mode == SamplingMode::window) {
                    if (config_.get_optional(base + "min_chars")) policy.min_chars = config_.get_uint(base + "min_chars");
                    if (config_.get_optional(base + "max_chars")) policy.max_chars = config_.get_uint(base + "max_chars");
                }
                policy.snap_boundaries = config_.get_bool(base + "snap");
                if (auto q = config_.get_optional(base + "qa_question")) {
                    policy.qa_pattern = QaPattern{*q, config_.get(base + "qa_answer")};
                }
                try {
                    policy.validate();
                } catch (const std::exception& e) {
                    throw ConfigError("corpus " + n + ": " + e.what());
                }

                std::vector<RawDocument> raws;
                LoadReport load = load_corpus(*config_.get_path(base + "path"), kind,
                                              parse_corpus_format(config_.get(base + "format")),
                                              [&](RawDocument r) { raws.push_back(std::move(r)); });
                const std::uint64_t limit = config_.get_uint(base + "limit");
                std::vector<std::size_t> chosen =
                    pick_subset(raws.size(), limit == 0 ? raws.size() : limit, derive_seed(seed, "select/" + kind.name()));

                std::vector<SampleResult> results(chosen.size());
                parallel_for(chosen.size(), hardware_threads(), [&](std::size_t i) {
                    const RawDocument& raw = raws[chosen[i]];
                    Rng rng(derive_seed(seed, "sample/" + raw.id));
                    results[i] = sample_document(raw, policy, rng);
                });
                std::size_t sampled = 0, fallback = 0, no_qa = 0, dup = 0;
                for (auto& r : results) {
                    if (r.note == SampleNote::fallback_whole) ++fallback;
                    if (r.note == SampleNote::no_qa_pair) ++no_qa;
                    if (!r.document) continue;
                    if (!seen_text.insert(sha256_hex(r.document->text)).second) {
                        ++dup;
                        continue;
                    }
                    ++sampled;
                    docs.push_back(std::move(*r.document));
                }
                per_corpus[kind.name()] = json{{"read", load.read},
                                               {"load_skipped", load.skipped},
                                               {"load_errors", load.errors},
                                               {"selected", chosen.size()},
                                               {"sampled", sampled},
                                               {"fallback_whole", fallback},
                                               {"no_qa_pair", no_qa},
                                               {"duplicate_text", dup}};
            }
            std::string content;
            for (const auto& d : docs) content += dump_line(to_json(d)) + "\n";
            write_file_atomic(p(run_files::documents), content);
            out.report = json{{"corpora", per_corpus}, {"documents", docs.size()}};
            write_file_atomic(p(run_files::sample_report), dump_pretty(out.report) + "\n");
            out.files = {std::string(run_files::documents), std::string(run_files::sample_report)};
            break;
        }
        case Stage::seed_expand: {
            const fs::path manual = *config_.get_path("seeds.manual");
            SeedPool pool = SeedPool::load(manual);
            const std::size_t k = config_.get_uint("seeds.k");
            std::vector<Document> all = read_documents(p(run_files::documents));
            std::vector<Document> eligible;
            std::size_t no_seeds = 0;
            for (auto& d : all) {
                if (pool.eligible({d.corpus, SeedView::document_view, SeedOrigin::manual}).size() >= std::max<std::size_t>(k, 1)) {
                    eligible.push_back(std::move(d));
                } else {
                    ++no_seeds;
                }
            }
            std::vector<Document> chosen;
            for (std::size_t i : pick_subset(eligible.size(), config_.get_uint("seeds.expand_documents"),
                                             derive_seed(seed, "expand-select"))) {
                chosen.push_back(eligible[i]);
            }
            ExpansionOptions opts;
            opts.k = k;
            opts.seed = seed;
            opts.parse_attempts = static_cast<int>(config_.get_uint("seeds.parse_attempts"));
            opts.params = generation_params(config_);
            opts.prompt = template_from(config_, "prompt.generation_template", PromptTemplate::generation_default());
            ExpansionReport rep = expand_document_view(pool, chosen, gateway(), opts);

            const double theta = config_.get_real("filter.theta");
            std::string content;
            for (const auto& s : pool.eligible({std::nullopt, SeedView::document_view, SeedOrigin::manual})) {
                content += dump_line(to_json(s)) + "\n";
            }
            std::size_t kept = 0, below = 0;
            for (auto& s : rep.added) {
                if (config_.get_bool("seeds.filter_expanded") &&
                    task_score(s.example.document.text, s.example.task).score < theta) {
                    ++below;
                    continue;
                }
                s.id = "expanded-" + std::to_string(++kept);
                content += dump_line(to_json(s)) + "\n";
            }
            write_file_atomic(p(run_files::seeds_document_view), content);
            out.files = {std::string(run_files::seeds_document_view)};
            out.report = json{{"documents_selected", chosen.size()},
                              {"documents_without_seeds", no_seeds},
                              {"expanded_raw", rep.added.size()},
                              {"expanded_kept", kept},
                              {"below_theta", below},
                              {"parse_failures", rep.parse_failures},
                              {"duplicates", rep.duplicates},
                              {"errors", errors_json(rep.errors)}};
            break;
        }
        case Stage::seed_invert: {
            SeedPool pool = SeedPool::load(*config_.get_path("seeds.manual"));
            std::vector<Task> source;
            for (const auto& j : read_jsonl_strict(*config_.get_path("seeds.invert_source"))) {
                source.push_back(task_from_json(j));
            }
            std::vector<Task> tasks;
            for (std::size_t i : pick_subset(source.size(), config_.get_uint("seeds.invert_count"),
                                             derive_seed(seed, "invert-select"))) {
                tasks.push_back(source[i]);
            }
            InversionOptions opts;
            opts.k = config_.get_uint("seeds.invert_k");
            opts.seed = seed;
            opts.inversions_per_task = config_.get_uint("seeds.inversions_per_task");
            opts.params = generation_params(config_);
            opts.prompt = template_from(config_, "prompt.inversion_template", PromptTemplate::inversion_default());
            ExpansionReport rep = invert_tasks(tasks, pool, gateway(), opts);
            std::string content;
            for (const auto& s : pool.eligible({std::nullopt, SeedView::task_view, SeedOrigin::manual})) {
                content += dump_line(to_json(s)) + "\n";
            }
            std::size_t n = 0;
            for (auto& s : rep.added) {
                s.id = "inverted-" + std::to_string(++n);
                content += dump_line(to_json(s)) + "\n";
            }
            write_file_atomic(p(run_files::seeds_task_view), content);
            out.files = {std::string(run_files::seeds_task_view)};
            out.report = json{{"tasks_selected", tasks.size()},
                              {"inverted", rep.added.size()},
                              {"empty_documents", rep.parse_failures},
                              {"duplicates", rep.duplicates},
                              {"errors", errors_json(rep.errors)}};
            break;
        }
        case Stage::build_meta:
        case Stage::generate: {
            std::vector<Document> docs = read_documents(p(run_files::documents));
            GenerationContext ctx{generation_params(config_), stage == Stage::build_meta ? "meta" : "designer",
                                  config_.get("run.created_at")};
            GenerationReport rep;
            if (stage == Stage::build_meta) {
                SeedPool pool = SeedPool::load(p(run_files::seeds_document_view));
                if (fs::exists(p(run_files::seeds_task_view))) pool.merge_from(p(run_files::seeds_task_view));
                MetaBuildOptions opts;
                opts.document_view_demos = config_.get_uint("meta.document_view_demos");
                opts.task_view_demos = config_.get_uint("meta.task_view_demos");
                opts.seed = seed;
                opts.prompt = template_from(config_, "prompt.generation_template", PromptTemplate::generation_default());
                rep = build_meta_records(docs, pool, gateway(), opts, ctx);
            } else {
                rep = generate_tasks(docs, meta, gateway(), ctx);
            }
            write_records(p(run_files::generated), rep.records);
            out.files = {std::string(run_files::generated)};
            out.report = json{{"phase", ctx.phase},
                              {"documents", docs.size()},
                              {"parsed", rep.parsed},
                              {"parse_failed", rep.parse_failed},
                              {"errors", errors_json(rep.errors)}};
            break;
        }
        case Stage::filter: {
            std::vector<TaskRecord> recs = parsed_records(inputs.front());
            FilterOptions fo;
            fo.theta = config_.get_real("filter.theta");
            if (config_.get_optional("filter.consistency_theta")) {
                fo.consistency_theta = config_.get_real("filter.consistency_theta");
            }
            fo.overlap = config_.get_bool("filter.overlap");
            fo.answerability = config_.get_bool("filter.answerability");
            fo.consistency = config_.get_bool("filter.consistency");
            fo.answerability_options.judge_mode = config_.get_bool("filter.judge_mode");
            fo.answerability_options.params = check_params(config_);
            if (auto pats = config_.get_optional("filter.refusal_patterns")) {
                fo.answerability_options.refusal_patterns.clear();
                std::stringstream ss(*pats);
                for (std::string item; std::getline(ss, item, '|');) {
                    if (!trim(item).empty()) fo.answerability_options.refusal_patterns.push_back(ascii_lower(trim(item)));
                }
            }
            fo.direction = parse_consistency_direction(config_.get("filter.consistency_direction"));
            fo.consistency_params = check_params(config_);
            const std::size_t in = recs.size();
            FilterOutcome res =
                run_filters(std::move(recs), fo, (fo.answerability || fo.consistency) ? &gateway() : nullptr);
            std::map<std::string, std::size_t> reasons;
            for (const auto& r : res.rejected) ++reasons[r.reject_reason];
            write_records(p(run_files::rejects), res.rejected);
            write_records(p(run_files::filter_parked), res.parked);
            out.report = json{{"input", in},
                              {"passed", res.passed.size()},
                              {"rejected", res.rejected.size()},
                              {"parked", res.parked.size()},
                              {"reject_reasons", reasons}};
            write_records(p(run_files::filter_passed), res.passed);
            out.files = {std::string(run_files::filter_passed), std::string(run_files::rejects),
                         std::string(run_files::filter_parked)};
            if (!ff) finalize(std::move(res.passed));
            break;
        }
        case Stage::gate: {
            std::vector<TaskRecord> recs = parsed_records(inputs.front());
            const std::size_t in = recs.size();
            enum class Fate { pass, invalid, park };
            std::vector<Fate> fate(recs.size(), Fate::pass);
            std::vector<std::string> errors(recs.size());
            std::size_t anomalies = 0;
            if (config_.get_bool("gate.enabled")) {
                Gateway& gw = gateway();
                const DecodingParams params = check_params(config_);
                parallel_for(recs.size(), gw.max_parallel(), [&](std::size_t i) {
                    try {
                        GateVerdict v = gate(recs[i], meta, gw, params);
                        fate[i] = v.verdict == Verdict::valid ? Fate::pass : Fate::invalid;
                    } catch (const GatewayError& e) {
                        fate[i] = Fate::park;
                        errors[i] = recs[i].id + ": " + e.what();
                    }
                });
            }
            std::vector<TaskRecord> passed, invalid, parked;
            std::vector<std::string> errs;
            for (std::size_t i = 0; i < recs.size(); ++i) {
                if (recs[i].gate && recs[i].gate->anomaly) ++anomalies;
                if (!errors[i].empty()) errs.push_back(errors[i]);
                switch (fate[i]) {
                    case Fate::pass: passed.push_back(std::move(recs[i])); break;
                    case Fate::invalid: invalid.push_back(std::move(recs[i])); break;
                    case Fate::park: parked.push_back(std::move(recs[i])); break;
                }
            }
            write_records(p(run_files::gated_invalid), invalid);
            write_records(p(run_files::gate_parked), parked);
            write_records(p(run_files::gate_passed), passed);
            out.files = {std::string(run_files::gate_passed), std::string(run_files::gated_invalid),
                         std::string(run_files::gate_parked)};
            out.report = json{{"input", in},
                              {"enabled", config_.get_bool("gate.enabled")},
                              {"passed", passed.size()},
                              {"gated_invalid", invalid.size()},
                              {"anomalies", anomalies},
                              {"parked", parked.size()},
                              {"errors", errs}};
            if (ff) finalize(std::move(passed));
            break;
        }
        case Stage::stats: {
            auto recs = read_records(p(run_files::retained));
            auto by_corpus = length_stats(recs, GroupBy::corpus);
            auto all = length_stats(recs, GroupBy::all);
            out.report = json{{"by_corpus", length_report_json(by_corpus)}, {"all", length_report_json(all)}};
            write_file_atomic(p("stats_report.json"), dump_pretty(out.report) + "\n");
            write_file_atomic(p("stats_table.txt"), render_length_table(by_corpus) + "\n" + render_length_table(all));
            out.files = {"stats_report.json", "stats_table.txt"};
            break;
        }
        case Stage::diversity: {
            auto recs = read_records(p(run_files::retained));
            std::vector<std::string> instructions;
            for (const auto& r : recs) instructions.push_back(r.task->instruction);
            HeuristicAnalyzer analyzer;
            DiversityProfile prof = verb_noun_profile(instructions, analyzer);
            json dj = diversity_json(prof, analyzer.name());
            write_file_atomic(p("diversity.json"), dump_pretty(dj) + "\n");
            out.files = {"diversity.json"};
            out.report = json{{"instructions", instructions.size()},
                              {"pairs", prof.pair_total()},
                              {"unparsed", prof.unparsed_count}};
            break;
        }
        case Stage::relevance: {
            auto recs = read_records(p(run_files::retained));
            RelevanceReport rep = literal_relevance(recs, GroupBy::corpus);
            if (config_.get_bool("relevance.semantic")) {
                const SemanticMode mode = config_.get("relevance.mode") == "token_greedy" ? SemanticMode::token_greedy
                                                                                           : SemanticMode::embedding_cosine;
                semantic_relevance(rep, recs, gateway(), GroupBy::corpus, mode);
            }
            out.report = rep.to_json();
            write_file_atomic(p("relevance_report.json"), dump_pretty(out.report) + "\n");
            write_file_atomic(p("relevance_table.txt"), rep.render_table());
            out.files = {"relevance_report.json", "relevance_table.txt"};
            break;
        }
        case Stage::export_sft: {
            auto recs = read_records(p(run_files::retained));
            std::size_t n = emit_sft_dataset(recs, meta, p(run_files::sft));
            out.files = {std::string(run_files::sft)};
            out.report = json{{"written", n}};
            break;
        }
        case Stage::export_disc: {
            auto retained = read_records(p(run_files::retained));
            auto negatives = read_records(p(run_files::rejects));
            std::vector<TaskRecord> human;
            if (fs::exists(p(run_files::judgments))) {
                human = export_review_negatives(read_judgments(p(run_files::judgments)), retained);
            }
            std::set<std::string> human_ids;
            for (const auto& r : human) human_ids.insert(r.id);
            std::vector<TaskRecord> positives;
            for (auto& r : retained) {
                if (!human_ids.contains(r.id)) positives.push_back(std::move(r));
            }
            negatives.insert(negatives.end(), std::make_move_iterator(human.begin()),
                             std::make_move_iterator(human.end()));
            DiscriminatorReport rep =
                emit_discriminator_dataset(positives, negatives, meta, p(run_files::disc), p(run_files::disc_audit));
            out.files = {std::string(run_files::disc), std::string(run_files::disc_audit)};
            out.report = json{{"positives", rep.positives},
                              {"negatives", rep.negatives},
                              {"human_negatives", human_ids.size()},
                              {"skipped", rep.skipped},
                              {"warnings", rep.warnings}};
            break;
        }
    }

    if (state_->gateway && state_->gateway->call_log()) state_->gateway->call_log()->flush();

    json entry{{"input_hash", input_hash}, {"started_at", started}, {"finished_at", utc_timestamp()},
               {"report", out.report}, {"outputs", json::object()}};
    for (const auto& f : out.files) entry["outputs"][f] = file_hash(p(f));
    stages[name] = entry;

    Counters counters = recount();
    if (!counters.conserved()) {
        throw std::logic_error("manifest counters are not conserved after stage " + name + ": " +
                               counters.to_json().dump());
    }
    json& m = state_->manifest;
    m["config"] = config_.snapshot();
    m["config_hash"] = config_.hash();
    m["counters"] = counters.to_json();
    m["meta_instruction"] = json{{"generator_text", meta.generator_text},
                                 {"discriminator_text", meta.discriminator_text},
                                 {"generator_overridden", meta.generator_overridden()},
                                 {"discriminator_overridden", meta.discriminator_overridden()}};
    m["templates"] = json{
        {"generation", template_from(config_, "prompt.generation_template", PromptTemplate::generation_default()).hash()},
        {"inversion", template_from(config_, "prompt.inversion_template", PromptTemplate::inversion_default()).hash()}};
    m["scorers"] = json{{"tokenizer", "word-level, case-folded, punctuation-split"},
                        {"consistency_direction", config_.get("filter.consistency_direction")},
                        {"diversity_analyzer", HeuristicAnalyzer{}.name()},
                        {"semantic", semantic_scorer_name(config_.get("relevance.mode") == "token_greedy"
                                                              ? SemanticMode::token_greedy
                                                              : SemanticMode::embedding_cosine,
                                                          config_.get("gateway.model"))}};
    m["updated_at"] = utc_timestamp();
    write_file_atomic(p(run_files::manifest), dump_pretty(m) + "\n");
    return StageResult{stage, false, out.report, counters};
}

}  // namespace forge
