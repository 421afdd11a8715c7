#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "tfb/data.hpp"
#include "tfb/inference.hpp"
#include "tfb/netcore.hpp"

namespace tfb {

enum class MetricKind { NLL, ACC, ECE, MSE, EmbeddingNorm };

const char* metric_name(MetricKind k);
MetricKind metric_from_name(const std::string& name);

// True when noise degrades the metric by pushing it up (NLL, ECE, MSE,
// EmbeddingNorm by convention); ACC degrades downward.
bool metric_degrades_upward(MetricKind k);

struct EceBin {
    double confidence_sum = 0.0;
    double accuracy_sum = 0.0;
    std::int64_t population = 0;

    double mean_confidence() const;
    double mean_accuracy() const;
};

struct MetricReport {
    MetricKind kind = MetricKind::NLL;
    double value = 0.0;
    std::int64_t sample_count = 0;  // MC samples used (0 = deterministic)
    std::optional<std::vector<EceBin>> bin_detail;
};

// Probabilities below this are floored before the log; the same floor is
// applied wherever an NLL is computed so estimates stay comparable.
inline constexpr double kProbFloor = 1e-12;

/**
 * Mean negative log probability of the true class/outcome. Inputs must lie
 * in (0, 1]; zero or negative probability is a domain error (NumericError).
 * Values in (0, kProbFloor) are floored, not rejected.
 */
double nll(std::span<const double> true_class_probs);

/**
 * Expected calibration error over `bins` equal-width confidence bins
 * (default 15): sum over bins of population/n * |accuracy - confidence|.
 * Bin index is floor(confidence * bins) clamped to the last bin, so
 * confidence 1.0 lands in bin bins-1. Empty bins contribute zero.
 * confidences must lie in [0, 1]; correctness flags are 0/1.
 */
MetricReport ece(std::span<const double> confidences, std::span<const int> correct,
                 int bins = 15);

// How a Bayesian evaluation aggregates across weight samples.
// AveragedPredictive: average the per-sample probabilities (or predictions)
// first, then compute the metric on the averaged predictive -- the default.
// ExpectedMetric: compute the metric per weight sample and average the
// metric values instead.
enum class McConvention { AveragedPredictive, ExpectedMetric };

/**
 * Evaluates one metric for a network on a dataset.
 *
 * posterior == nullptr is the deterministic mode (mc_samples ignored,
 * sample_count reported as 0). Otherwise mc_samples weight draws are taken
 * through mc_predict's noise streams (seed, layer, sample), so evaluations
 * at different sigma_q share common random numbers.
 *
 * Metric/task pairing: NLL, ACC, ECE need classification; MSE needs
 * regression; EmbeddingNorm works for both (mean L2 norm of the activations
 * entering the final layer; its Bayesian form averages the per-sample norms).
 * Mismatches throw ValidationError.
 */
MetricReport evaluate(const Network& net, const NetworkPosterior* posterior,
                      const Dataset& dataset, MetricKind kind, int mc_samples,
                      std::uint64_t seed, McConvention convention = McConvention::AveragedPredictive);

}  // namespace tfb
