#include "forge/review_server.hpp"

#include "httplib.h"

namespace forge {

namespace {

constexpr const char* kJson = "application/json";

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(dump_line(body), kJson);
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, status, json{{"error", message}});
}

template <typename Fn>
void guarded(httplib::Response& res, Fn&& fn) {
    try {
        fn();
    } catch (const ReviewConflict& e) {
        send_error(res, 409, e.what());
    } catch (const ReviewBadRequest& e) {
        send_error(res, 400, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed JSON body: ") + e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

}  // namespace

const std::string& builtin_review_page() {
    static const std::string page = R"(<!doctype html>
<html lang="en">
<head><meta charset="utf-8"><title>Task review</title></head>
<body>
<h1>Task review</h1>
<p>The review board UI is not bundled with this server. The JSON API is available:</p>
<ul>
<li><code>GET /api/queue/next?annotator=&lt;id&gt;</code></li>
<li><code>POST /api/judgment</code></li>
<li><code>POST /api/pairwise</code></li>
<li><code>GET /api/report</code></li>
<li><code>GET /api/export/negatives</code></li>
</ul>
</body>
</html>
)";
    return page;
}

std::unique_ptr<httplib::Server> make_review_server(ReviewService& service,
                                                    const std::optional<std::filesystem::path>& assets_dir) {
    auto server = std::make_unique<httplib::Server>();
    ReviewService* svc = &service;

    server->Get("/api/queue/next", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            if (!req.has_param("annotator")) throw ReviewBadRequest("missing annotator parameter");
            send_json(res, 200, svc->next(req.get_param_value("annotator")));
        });
    });
    server->Post("/api/judgment", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, svc->submit_judgment(json::parse(req.body)).to_json()); });
    });
    server->Post("/api/pairwise", [svc](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            PairwiseJudgment j = svc->submit_pairwise(json::parse(req.body));
            json body = j.to_json();
            // System names stay hidden until the report.
            body.erase("left_system");
            body.erase("right_system");
            send_json(res, 200, body);
        });
    });
    server->Get("/api/report", [svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, svc->report()); });
    });
    server->Get("/api/export/negatives", [svc](const httplib::Request&, httplib::Response& res) {
        guarded(res, [&] { res.set_content(svc->export_negatives_jsonl(), "application/x-ndjson"); });
    });

    if (assets_dir && std::filesystem::is_directory(*assets_dir)) {
        server->set_mount_point("/", assets_dir->string());
    } else {
        server->Get("/", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(builtin_review_page(), "text/html; charset=utf-8");
        });
    }
    return server;
}

}  // namespace forge
