#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "tfb/adapter.hpp"
#include "tfb/netcore.hpp"

namespace tfb {

/**
 * The Bayesianized view of a network: one BayesianAdapter per adapted layer
 * (aligned with net.layers, fixed layers hold nullopt) plus the posterior
 * family every layer shares. sigma_q is the same scalar across layers by
 * construction of bayesianize_network / with_sigma.
 */
struct NetworkPosterior {
    std::vector<std::optional<BayesianAdapter>> layers;
    PosteriorFamily family = PosteriorFamily::LowRankIsotropic;

    double sigma_q() const;  // shared budget; throws if no adapted layer
};

// Regroups every adapted layer at the shared budget sigma_q.
NetworkPosterior bayesianize_network(const Network& net, double sigma_q, PosteriorFamily family);

// Same posterior, new budget; no SVD recomputation.
NetworkPosterior posterior_with_sigma(const NetworkPosterior& posterior, double sigma_q);

enum class PredictMode { FullModel, LastLayerOnly };

struct PredictionConfig {
    int mc_samples = 10;
    std::uint64_t seed = 0;
    PredictMode mode = PredictMode::FullModel;
    bool keep_samples = false;  // retain raw per-sample outputs
};

/**
 * Monte-Carlo predictive summary. Regression: mean and std are per output
 * coordinate (population convention, so one sample or sigma_q = 0 gives std
 * exactly 0). Classification: class_probs holds the sample-averaged softmax
 * per input (the predictive distribution); mean/std describe those class
 * probabilities across samples.
 */
struct PredictiveSummary {
    std::vector<std::vector<double>> mean;         // per input
    std::vector<std::vector<double>> std_dev;      // per input
    std::vector<std::vector<double>> class_probs;  // classification only
    // keep_samples: samples[k][input] = raw output vector of sample k.
    std::vector<std::vector<std::vector<double>>> samples;
};

// Instrumentation for the last-layer fast path: how many times the
// deterministic prefix (all layers before the final one) was evaluated.
struct PredictStats {
    long long prefix_passes = 0;
};

/**
 * Draws cfg.mc_samples weight samples and summarizes the forward passes.
 * Sample k of layer l uses noise stream (cfg.seed, l, k); this is the one
 * place those streams are assigned, so every consumer (metrics, search,
 * bands) shares common random numbers through here. LastLayerOnly leaves all
 * but the final adapted layer deterministic.
 */
PredictiveSummary mc_predict(const Network& net, const NetworkPosterior& posterior,
                             const std::vector<std::vector<double>>& inputs,
                             const PredictionConfig& cfg, Task task,
                             PredictStats* stats = nullptr);

/**
 * Equivalent to mc_predict with mode LastLayerOnly but computes the prefix
 * once per input and reuses the cached activation across samples: the prefix
 * pass count is exactly |inputs| instead of |inputs| * mc_samples. Identical
 * arithmetic per sample, so results match the naive path bit for bit.
 * Requires the final layer to be adapted.
 */
PredictiveSummary last_layer_fast_predict(const Network& net, const NetworkPosterior& posterior,
                                          const std::vector<std::vector<double>>& inputs,
                                          const PredictionConfig& cfg, Task task,
                                          PredictStats* stats = nullptr);

struct BandRow {
    double x = 0.0;
    double mean = 0.0;
    double lo = 0.0;  // mean - std
    double hi = 0.0;  // mean + std
};

// +/-1-std predictive band of a scalar-in scalar-out regression network.
std::vector<BandRow> prediction_band(const Network& net, const NetworkPosterior& posterior,
                                     const std::vector<double>& x_grid,
                                     const PredictionConfig& cfg);

}  // namespace tfb
