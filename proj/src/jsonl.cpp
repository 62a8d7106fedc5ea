#include "forge/jsonl.hpp"

#include <fstream>
#include <sstream>
#include <system_error>

#include <unistd.h>

#include "forge/text.hpp"

namespace forge {

std::string dump_line(const json& value) {
    return value.dump(-1, ' ', false, json::error_handler_t::replace);
}

std::string dump_pretty(const json& value) {
    return value.dump(2, ' ', false, json::error_handler_t::replace) + "\n";
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path.string());
    return ss.str();
}

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(path.parent_path(), ec);
        if (ec) throw IoError("cannot create directory " + path.parent_path().string());
    }
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
        out.flush();
        if (!out) {
            std::error_code ignored;
            fs::remove(tmp, ignored);
            throw IoError("write failed: " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        std::error_code ignored;
        fs::remove(tmp, ignored);
        throw IoError("cannot rename into " + path.string() + ": " + ec.message());
    }
}

JsonlReport read_jsonl(const std::filesystem::path& path,
                       const std::function<void(const json&, std::size_t)>& on_record) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    JsonlReport report;
    std::string line;
    std::size_t index = 0;
    while (std::getline(in, line)) {
        if (is_blank(line)) continue;
        json value = json::parse(line, nullptr, false);
        if (value.is_discarded() || !value.is_object()) {
            ++report.malformed;
            report.errors.push_back(path.filename().string() + ":" + std::to_string(index) +
                                    ": not a JSON object");
        } else {
            ++report.read;
            on_record(value, index);
        }
        ++index;
    }
    if (in.bad()) throw IoError("read failed: " + path.string());
    return report;
}

std::vector<json> read_jsonl_strict(const std::filesystem::path& path) {
    std::vector<json> rows;
    auto report = read_jsonl(path, [&](const json& v, std::size_t) { rows.push_back(v); });
    if (report.malformed > 0) {
        throw IoError(path.string() + ": " + std::to_string(report.malformed) +
                      " malformed line(s); first: " + report.errors.front());
    }
    return rows;
}

std::string to_jsonl(const std::vector<json>& rows) {
    std::string out;
    for (const auto& row : rows) {
        out += dump_line(row);
        out += '\n';
    }
    return out;
}

}  // namespace forge
