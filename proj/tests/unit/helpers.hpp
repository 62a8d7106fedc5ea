#pragma once

#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>

#include "forge/corpus.hpp"
#include "forge/record.hpp"
#include "forge/task.hpp"

namespace forge::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("forge-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Document make_doc(const std::string& id, const std::string& text, CorpusKind corpus = CorpusKind::parse("Wikipedia")) {
    return make_whole_document(RawDocument{id, corpus, text, {}});
}

inline TaskRecord make_record(const std::string& id, const std::string& doc_text, Task task,
                              CorpusKind corpus = CorpusKind::parse("Wikipedia")) {
    TaskRecord r;
    r.id = id;
    r.document = make_doc("doc/" + id, doc_text, corpus);
    r.task = std::move(task);
    r.status = RecordStatus::parsed;
    r.phase = "designer";
    r.created_at = "2024-01-01T00:00:00Z";
    return r;
}

}  // namespace forge::testing
