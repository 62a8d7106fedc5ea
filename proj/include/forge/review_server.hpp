#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "forge/review.hpp"

namespace httplib {
class Server;
}

namespace forge {

/// Registers the review API on a new server:
///   GET  /api/queue/next?annotator=<id>
///   POST /api/judgment
///   POST /api/pairwise
///   GET  /api/report
///   GET  /api/export/negatives
/// and serves `assets_dir` at / (a minimal built-in page when absent).
/// Validation failures answer 400, queue conflicts 409.
std::unique_ptr<httplib::Server> make_review_server(ReviewService& service,
                                                    const std::optional<std::filesystem::path>& assets_dir);

/// The page served at / when no asset directory is configured.
const std::string& builtin_review_page();

}  // namespace forge
