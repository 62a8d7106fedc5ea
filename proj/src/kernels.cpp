#include "forge/kernels.hpp"

#include <cmath>
#include <stdexcept>

namespace forge::kernels {

namespace {

constexpr std::size_t kBlock = 1024;

double block_sum(std::span<const double> v, double center, bool squared) {
    const std::size_t n = v.size();
    const std::size_t blocks = (n + kBlock - 1) / kBlock;
    std::vector<double> partial(blocks, 0.0);
    const long nb = static_cast<long>(blocks);
#pragma omp parallel for schedule(static)
    for (long b = 0; b < nb; ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * kBlock;
        const std::size_t hi = std::min(n, lo + kBlock);
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) {
            const double d = v[i] - center;
            acc += squared ? d * d : d;
        }
        partial[static_cast<std::size_t>(b)] = acc;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

}  // namespace

std::vector<TaskScore> score_tasks(std::span<const ScoreJob> jobs, const Tokenizer& tokenizer) {
    std::vector<TaskScore> out(jobs.size());
    const long n = static_cast<long>(jobs.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (long i = 0; i < n; ++i) {
        const auto& job = jobs[static_cast<std::size_t>(i)];
        out[static_cast<std::size_t>(i)] = task_score(job.doc_text, *job.task, tokenizer);
    }
    return out;
}

std::vector<TaskScore> score_tasks_serial(std::span<const ScoreJob> jobs, const Tokenizer& tokenizer) {
    std::vector<TaskScore> out;
    out.reserve(jobs.size());
    for (const auto& job : jobs) out.push_back(task_score(job.doc_text, *job.task, tokenizer));
    return out;
}

FieldStats field_stats(std::span<const double> values) {
    FieldStats s;
    s.count = values.size();
    if (values.empty()) return s;
    s.mean = block_sum(values, 0.0, false) / static_cast<double>(s.count);
    if (s.count > 1) s.std = std::sqrt(block_sum(values, s.mean, true) / static_cast<double>(s.count));
    return s;
}

FieldStats field_stats_serial(std::span<const double> values) {
    FieldStats s;
    s.count = values.size();
    if (values.empty()) return s;
    double sum = 0.0;
    for (double v : values) sum += v;
    s.mean = sum / static_cast<double>(s.count);
    if (s.count > 1) {
        double sq = 0.0;
        for (double v : values) sq += (v - s.mean) * (v - s.mean);
        s.std = std::sqrt(sq / static_cast<double>(s.count));
    }
    return s;
}

std::vector<double> overlap_scores(std::span<const std::string_view> docs, std::span<const std::string_view> fields) {
    if (docs.size() != fields.size()) throw std::invalid_argument("overlap_scores: size mismatch");
    std::vector<double> out(docs.size());
    const long n = static_cast<long>(docs.size());
#pragma omp parallel for schedule(dynamic, 64)
    for (long i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        TokenSet field = tokenize(fields[k]);
        out[k] = field.empty() ? -1.0 : overlap_score(tokenize(docs[k]), field);
    }
    return out;
}

std::vector<double> overlap_scores_serial(std::span<const std::string_view> docs,
                                          std::span<const std::string_view> fields) {
    if (docs.size() != fields.size()) throw std::invalid_argument("overlap_scores: size mismatch");
    std::vector<double> out;
    out.reserve(docs.size());
    for (std::size_t k = 0; k < docs.size(); ++k) {
        TokenSet field = tokenize(fields[k]);
        out.push_back(field.empty() ? -1.0 : overlap_score(tokenize(docs[k]), field));
    }
    return out;
}

}  // namespace forge::kernels
