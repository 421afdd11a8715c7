#include "tfb/util.hpp"

#include <cmath>
#include <cstdlib>
#include <thread>

namespace tfb {

std::size_t thread_budget() {
    const char* env = std::getenv("TFB_KIT_THREADS");
    long requested = 0;
    if (env != nullptr && *env != '\0') {
        char* end = nullptr;
        requested = std::strtol(env, &end, 10);
        if (end == env || requested < 0) requested = 0;
    }
    std::size_t n = static_cast<std::size_t>(requested);
    if (n == 0) {
        n = std::thread::hardware_concurrency();
        if (n == 0) n = 1;
    }
    return n;
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers = std::min(thread_budget(), n);
    if (workers <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            // Strided assignment: worker w owns indices w, w+workers, ...
            for (std::size_t i = w; i < n; i += workers) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

namespace {

double pairwise_sum_range(const double* xs, std::size_t n) {
    if (n <= 8) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += xs[i];
        return acc;
    }
    const std::size_t half = n / 2;
    return pairwise_sum_range(xs, half) + pairwise_sum_range(xs + half, n - half);
}

}  // namespace

double pairwise_sum(std::span<const double> xs) {
    return pairwise_sum_range(xs.data(), xs.size());
}

double pairwise_mean(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    return pairwise_sum(xs) / static_cast<double>(xs.size());
}

double population_std(std::span<const double> xs) {
    if (xs.empty()) return 0.0;
    const double mu = pairwise_mean(xs);
    std::vector<double> sq(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double c = xs[i] - mu;
        sq[i] = c * c;
    }
    return std::sqrt(pairwise_mean(sq));
}

}  // namespace tfb
