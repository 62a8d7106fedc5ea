#include "doctest.h"

#include <cmath>
#include <omp.h>

#include "forge/kernels.hpp"
#include "forge/text.hpp"

using namespace forge;

namespace {

std::string random_text(Rng& rng, int words) {
    static const std::vector<std::string> vocab = {"sun", "Moon", "star", "7", "river", "hill", "x", "y", "z", "owl"};
    std::string s;
    for (int i = 0; i < words; ++i) s += vocab[rng.below(vocab.size())] + (rng.below(4) == 0 ? ", " : " ");
    return s;
}

}  // namespace

TEST_CASE("parallel and serial task scores agree exactly") {
    Rng rng(11);
    std::vector<std::string> docs;
    std::vector<Task> tasks;
    for (int i = 0; i < 2000; ++i) {
        docs.push_back(random_text(rng, 12));
        tasks.push_back(Task{"do", rng.below(4) == 0 ? "" : random_text(rng, 3), random_text(rng, 4)});
    }
    std::vector<kernels::ScoreJob> jobs;
    for (int i = 0; i < 2000; ++i) jobs.push_back({docs[i], &tasks[i]});
    auto par = kernels::score_tasks(jobs);
    auto ser = kernels::score_tasks_serial(jobs);
    REQUIRE(par.size() == ser.size());
    for (std::size_t i = 0; i < par.size(); ++i) {
        CHECK(par[i].score == ser[i].score);
        CHECK(par[i].input == ser[i].input);
    }
}

TEST_CASE("overlap_scores marks undefined scores with -1") {
    std::vector<std::string_view> docs = {"a b", "a b", "c"};
    std::vector<std::string_view> fields = {"a", "!!", "c d"};
    auto s = kernels::overlap_scores(docs, fields);
    CHECK(s == std::vector<double>{1.0, -1.0, 0.5});
    CHECK(kernels::overlap_scores_serial(docs, fields) == s);
}

TEST_CASE("field_stats matches a direct computation") {
    std::vector<double> v = {60, 80};
    auto s = kernels::field_stats(v);
    CHECK(s.count == 2);
    CHECK(s.mean == 70);
    CHECK(s.std == 10);
    auto empty = kernels::field_stats(std::span<const double>{});
    CHECK(empty.count == 0);
    CHECK(empty.mean == 0);
    CHECK(empty.std == 0);
    CHECK(kernels::field_stats(std::vector<double>{5}).std == 0);
}

TEST_CASE("parallel field_stats does not depend on the thread count") {
    Rng rng(3);
    std::vector<double> v(100000);
    for (auto& x : v) x = static_cast<double>(rng.below(5000)) / 7.0;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    auto one = kernels::field_stats(v);
    omp_set_num_threads(7);
    auto seven = kernels::field_stats(v);
    omp_set_num_threads(saved);
    CHECK(one.mean == seven.mean);
    CHECK(one.std == seven.std);
    auto ser = kernels::field_stats_serial(v);
    CHECK(std::abs(ser.mean - one.mean) <= 1e-9 * std::abs(ser.mean));
    CHECK(std::abs(ser.std - one.std) <= 1e-9 * std::abs(ser.std));
}
