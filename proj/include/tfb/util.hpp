#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace tfb {

// Worker budget for data-parallel loops. Reads TFB_KIT_THREADS on every call;
// 0 or unset means hardware concurrency. Always at least 1.
std::size_t thread_budget();

// Runs fn(i) for i in [0, n). Each index writes only its own slots, so the
// result is independent of the worker count. Falls back to a serial loop when
// the budget is 1 or n is small.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// Fixed-order pairwise-tree summation. Used for every reduction whose result
// must be bit-identical regardless of how the per-element work was scheduled.
double pairwise_sum(std::span<const double> xs);

double pairwise_mean(std::span<const double> xs);

// Sample standard deviation with the population convention (divide by N),
// so a single sample or a degenerate spread gives exactly 0.
double population_std(std::span<const double> xs);

}  // namespace tfb
