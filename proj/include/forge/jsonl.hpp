#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace forge {

using json = nlohmann::json;

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Compact single-line dump with sorted keys; invalid UTF-8 is replaced.
std::string dump_line(const json& value);

/// Pretty dump used for manifests and reports.
std::string dump_pretty(const json& value);

std::string read_file(const std::filesystem::path& path);

/// Writes via a sibling temp file and rename, so readers never observe a
/// truncated file.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

struct JsonlReport {
    std::size_t read = 0;
    std::size_t malformed = 0;
    std::vector<std::string> errors;
};

/// Calls `on_record(value, line_index)` for each non-blank line. Lines that do
/// not parse as JSON objects are counted in the report and skipped.
JsonlReport read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const json&, std::size_t)>& on_record);

/// Reads every line of a JSONL file strictly: any malformed line throws.
std::vector<json> read_jsonl_strict(const std::filesystem::path& path);

std::string to_jsonl(const std::vector<json>& rows);

}  // namespace forge
