#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "httplib.h"

#include "forge/jsonl.hpp"
#include "forge/pipeline.hpp"
#include "forge/review.hpp"
#include "forge/review_server.hpp"

namespace fs = std::filesystem;
using namespace forge;

namespace {

enum Exit { ok = 0, failure = 1, usage = 2, upstream = 3, locked = 4 };

struct RunArgs {
    std::string run_dir;
    std::string config_path;
    std::optional<double> theta;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
    bool replay = false;
};

void add_run_args(CLI::App* cmd, RunArgs& args, bool run_required = true) {
    auto* run = cmd->add_option("--run", args.run_dir, "run directory");
    if (run_required) run->required();
    cmd->add_option("--config", args.config_path, "config file (default <run>/forge.conf)");
    cmd->add_option("--theta", args.theta, "overrides filter.theta");
    cmd->add_option("--seed", args.seed, "overrides run.seed");
    cmd->add_option("--set", args.overrides, "key=value override, repeatable");
    cmd->add_flag("--replay", args.replay, "answer model calls from <run>/calls.jsonl");
}

Config build_config(const RunArgs& args) {
    std::optional<fs::path> path;
    if (!args.config_path.empty()) path = args.config_path;
    Config config = resolve_config(args.run_dir, path);
    for (const auto& kv : args.overrides) {
        auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        config.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (args.theta) config.set("filter.theta", std::to_string(*args.theta));
    if (args.seed) config.set("run.seed", std::to_string(*args.seed));
    return config;
}

void print_result(const StageResult& r) {
    std::cout << to_string(r.stage) << (r.skipped ? ": up to date" : ": done") << "  counters "
              << dump_line(r.counters.to_json()) << "\n";
}

int run_stages(const RunArgs& args, const std::optional<Stage>& only) {
    fs::create_directories(args.run_dir);
    Pipeline pipeline(args.run_dir, build_config(args), RunOptions{args.replay, nullptr});
    if (only) {
        print_result(pipeline.run(*only));
    } else {
        for (const auto& r : pipeline.run_all()) print_result(r);
    }
    return ok;
}

std::optional<fs::path> assets_dir(const Config& config) {
    if (auto p = config.get_path("review.assets")) return p;
#ifdef FORGE_ASSETS_DIR
    fs::path bundled = FORGE_ASSETS_DIR;
    if (fs::is_directory(bundled)) return bundled;
#endif
    return std::nullopt;
}

std::unique_ptr<ReviewService> make_service(const fs::path& run_dir, const Config& config, ReviewMode mode) {
    ReviewOptions opts;
    opts.sample_size = config.get_uint("review.sample_size");
    opts.seed = config.get_uint("run.seed");
    opts.judgments_path = run_dir / run_files::judgments;
    opts.pairwise_path = run_dir / run_files::pairwise;
    opts.subject_system = config.get("review.subject");
    fs::create_directories(run_dir / "review");
    if (mode == ReviewMode::single) {
        fs::path dataset = run_dir / run_files::retained;
        if (!fs::exists(dataset)) throw MissingUpstreamError("review", "filter/gate (retained.jsonl)");
        return std::make_unique<ReviewService>(read_records(dataset), opts);
    }
    auto left = config.get_path("review.left");
    auto right = config.get_path("review.right");
    if (!left || !right) throw ConfigError("pairwise review needs review.left and review.right");
    return ReviewService::pairwise(read_records(*left), read_records(*right), config.get("review.left_system"),
                                   config.get("review.right_system"), opts);
}

httplib::Server* g_server = nullptr;

void stop_server(int) {
    if (g_server) g_server->stop();
}

int serve(const RunArgs& args, const std::string& bind, const std::string& mode_name) {
    Config config = build_config(args);
    auto service = make_service(args.run_dir, config, parse_review_mode(mode_name));
    auto server = make_review_server(*service, assets_dir(config));

    std::string host = "127.0.0.1";
    int port = 8080;
    auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
        port = std::stoi(bind);
    } else {
        host = bind.substr(0, colon);
        port = std::stoi(bind.substr(colon + 1));
    }
    g_server = server.get();
    std::signal(SIGINT, stop_server);
    std::signal(SIGTERM, stop_server);
    std::cout << "review (" << mode_name << ") on http://" << host << ":" << port << "/" << std::endl;
    if (!server->listen(host, port)) {
        std::cerr << "error: cannot listen on " << bind << "\n";
        return failure;
    }
    return ok;
}

int report(const RunArgs& args) {
    Config config = build_config(args);
    fs::path run_dir = args.run_dir;
    json out = json::object();
    std::vector<Judgment> singles;
    if (fs::exists(run_dir / run_files::judgments)) singles = read_judgments(run_dir / run_files::judgments);
    out["single"] = singles.empty() ? json(nullptr) : aggregate_judgments(singles).to_json();
    std::vector<PairwiseJudgment> pairs;
    if (fs::exists(run_dir / run_files::pairwise)) pairs = read_pairwise(run_dir / run_files::pairwise);
    if (!pairs.empty()) {
        std::string subject = config.get("review.subject");
        if (subject.empty()) subject = pairs.front().left_system;
        out["pairwise"] = aggregate_pairwise(pairs, subject).to_json();
    } else {
        out["pairwise"] = nullptr;
    }
    std::cout << dump_pretty(out) << "\n";
    return ok;
}

void print_keys() {
    for (const auto& k : config_keys()) {
        std::cout << k.name << " = " << k.default_value << "\n    [" << k.type << "] " << k.doc << "\n";
    }
    for (const auto& k : corpus_config_keys()) {
        std::cout << "corpus.<Name>." << k.name << " = " << k.default_value << "\n    [" << k.type << "] " << k.doc
                  << "\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"forge: generate, filter, analyze and review instruction-tuning tasks"};
    app.require_subcommand(1);

    RunArgs args;
    std::optional<Stage> chosen;
    std::vector<CLI::App*> stage_cmds;
    for (Stage s : all_stages()) {
        std::string name(to_string(s));
        auto* cmd = app.add_subcommand(name, "run the " + name + " stage");
        add_run_args(cmd, args);
        cmd->callback([&chosen, s] { chosen = s; });
        stage_cmds.push_back(cmd);
    }
    auto* all = app.add_subcommand("all", "run the stages listed in pipeline.stages");
    add_run_args(all, args);

    auto* status = app.add_subcommand("status", "print the run manifest");
    status->add_option("--run", args.run_dir, "run directory")->required();

    app.add_subcommand("config-keys", "list config keys with defaults")->callback(print_keys);

    auto* review = app.add_subcommand("review", "human review");
    review->require_subcommand(1);
    std::string bind = "127.0.0.1:8080";
    if (args.run_dir.empty()) args.run_dir = ".";
    std::string mode = "single";
    auto* serve_cmd = review->add_subcommand("serve", "serve the review UI and API");
    add_run_args(serve_cmd, args, false);
    serve_cmd->add_option("--bind", bind, "host:port")->capture_default_str();
    serve_cmd->add_option("--mode", mode, "single or pairwise")
        ->check(CLI::IsMember({"single", "pairwise"}))
        ->capture_default_str();
    auto* report_cmd = review->add_subcommand("report", "aggregate stored judgments");
    add_run_args(report_cmd, args, false);
    auto* export_cmd = review->add_subcommand("export", "print review negatives as JSONL");
    add_run_args(export_cmd, args, false);

    CLI11_PARSE(app, argc, argv);

    try {
        if (chosen) return run_stages(args, chosen);
        if (all->parsed()) return run_stages(args, std::nullopt);
        if (status->parsed()) {
            std::cout << read_file(fs::path(args.run_dir) / run_files::manifest);
            return ok;
        }
        if (serve_cmd->parsed()) return serve(args, bind, mode);
        if (report_cmd->parsed()) return report(args);
        if (export_cmd->parsed()) {
            const fs::path run_dir = args.run_dir;
            std::vector<Judgment> judged;
            if (fs::exists(run_dir / run_files::judgments)) judged = read_judgments(run_dir / run_files::judgments);
            auto negatives = export_review_negatives(judged, read_records(run_dir / run_files::retained));
            std::cout << records_to_jsonl(negatives);
            return ok;
        }
        return ok;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return usage;
    } catch (const MissingUpstreamError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return upstream;
    } catch (const OrderingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return upstream;
    } catch (const LockError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return locked;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return failure;
    }
}
