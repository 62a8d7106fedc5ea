#pragma once

// Data-parallel kernels used by the filter and analytics stages. Each kernel
// has an OpenMP version and a plain serial version; the serial ones are the
// reference the tests and the benchmark compare against.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "forge/tokens.hpp"

namespace forge::kernels {

struct ScoreJob {
    std::string_view doc_text;
    const Task* task = nullptr;
};

std::vector<TaskScore> score_tasks(std::span<const ScoreJob> jobs, const Tokenizer& tokenizer = tokenize);
std::vector<TaskScore> score_tasks_serial(std::span<const ScoreJob> jobs, const Tokenizer& tokenizer = tokenize);

struct FieldStats {
    std::size_t count = 0;
    double mean = 0.0;
    double std = 0.0;  // population standard deviation
};

/// Two-pass mean and population std. The parallel version sums fixed-size
/// blocks and combines them in block order, so its result does not depend on
/// the thread count.
FieldStats field_stats(std::span<const double> values);
FieldStats field_stats_serial(std::span<const double> values);

/// Pairwise overlap scores σ̃(doc, field); undefined scores come back as -1.
std::vector<double> overlap_scores(std::span<const std::string_view> docs, std::span<const std::string_view> fields);
std::vector<double> overlap_scores_serial(std::span<const std::string_view> docs,
                                          std::span<const std::string_view> fields);

}  // namespace forge::kernels
