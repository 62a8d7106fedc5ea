// Serial reference vs OpenMP kernels on synthetic workloads. Each row is the
// median wall time of --reps runs; results are checked for equality first.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "forge/kernels.hpp"
#include "forge/text.hpp"

using namespace forge;

namespace {

std::string random_words(Rng& rng, std::size_t words) {
    static const char* vocab[] = {"the",  "court", "held", "that", "matrix", "proof", "lemma", "river", "city",
                                  "data", "model", "sum",  "of",   "und",    "été",   "число", "λόγος", "code"};
    std::string s;
    for (std::size_t i = 0; i < words; ++i) {
        if (i) s += rng.below(12) == 0 ? ". " : " ";
        s += vocab[rng.below(std::size(vocab))];
        if (rng.below(4) == 0) s += std::to_string(rng.below(1000));
    }
    return s;
}

double median_ms(int reps, const std::function<void()>& fn) {
    std::vector<double> t;
    for (int i = 0; i < reps; ++i) {
        auto a = std::chrono::steady_clock::now();
        fn();
        t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - a).count());
    }
    std::sort(t.begin(), t.end());
    return t[t.size() / 2];
}

void row(const char* name, std::size_t n, double serial, double parallel, bool same) {
    std::printf("%-16s %10zu %12.2f %12.2f %8.2fx  %s\n", name, n, serial, parallel, serial / parallel,
                same ? "equal" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"benchmark serial vs OpenMP kernels"};
    std::size_t tasks = 20'000;
    std::size_t values = 5'000'000;
    int reps = 5;
    int threads = 0;
    app.add_option("--tasks", tasks, "records for score_tasks and overlap_scores")->capture_default_str();
    app.add_option("--values", values, "values for field_stats")->capture_default_str();
    app.add_option("--reps", reps, "repetitions per measurement")->capture_default_str()->check(CLI::PositiveNumber);
    app.add_option("--threads", threads, "OpenMP threads; 0 keeps the runtime default");
    CLI11_PARSE(app, argc, argv);
    if (threads > 0) omp_set_num_threads(threads);

    Rng rng(7);
    std::vector<std::string> docs(tasks);
    std::vector<Task> task_list(tasks);
    for (std::size_t i = 0; i < tasks; ++i) {
        docs[i] = random_words(rng, 300);
        task_list[i] = Task{random_words(rng, 12), rng.below(3) ? random_words(rng, 30) : "", random_words(rng, 60)};
    }
    std::vector<kernels::ScoreJob> jobs;
    std::vector<std::string_view> doc_views, field_views;
    for (std::size_t i = 0; i < tasks; ++i) {
        jobs.push_back({docs[i], &task_list[i]});
        doc_views.push_back(docs[i]);
        field_views.push_back(task_list[i].output);
    }
    std::vector<double> vals(values);
    for (auto& v : vals) v = static_cast<double>(rng.below(5000));

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-16s %10s %12s %12s %9s\n", "kernel", "n", "serial ms", "openmp ms", "speedup");

    {
        std::vector<TaskScore> a, b;
        double s = median_ms(reps, [&] { a = kernels::score_tasks_serial(jobs); });
        double p = median_ms(reps, [&] { b = kernels::score_tasks(jobs); });
        bool same = a.size() == b.size();
        for (std::size_t i = 0; same && i < a.size(); ++i) {
            same = a[i].score == b[i].score && a[i].input == b[i].input && a[i].output == b[i].output;
        }
        row("score_tasks", tasks, s, p, same);
    }
    {
        kernels::FieldStats a, b;
        double s = median_ms(reps, [&] { a = kernels::field_stats_serial(vals); });
        double p = median_ms(reps, [&] { b = kernels::field_stats(vals); });
        row("field_stats", values, s, p, a.count == b.count && std::abs(a.mean - b.mean) <= 1e-9 * a.mean &&
                                             std::abs(a.std - b.std) <= 1e-9 * std::max(1.0, a.std));
    }
    {
        std::vector<double> a, b;
        double s = median_ms(reps, [&] { a = kernels::overlap_scores_serial(doc_views, field_views); });
        double p = median_ms(reps, [&] { b = kernels::overlap_scores(doc_views, field_views); });
        row("overlap_scores", tasks, s, p, a == b);
    }
    return 0;
}
