#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "tfb/adapter.hpp"
#include "tfb/data.hpp"
#include "tfb/metrics.hpp"

namespace tfb {

enum class ToleranceMode { RelativeFraction, Absolute };

/**
 * Configuration of the variance-budget search. Defaults follow the anchored
 * recipe: NLL on ~500 anchor points, relative tolerance 0.003, five
 * bisection rounds on [0.001, 0.015], 10 MC samples per probe, common random
 * numbers via a fixed seed.
 */
struct SearchConfig {
    MetricKind metric = MetricKind::NLL;
    ToleranceMode tolerance_mode = ToleranceMode::RelativeFraction;
    double epsilon = 0.003;
    double bracket_lo = 0.001;
    double bracket_hi = 0.015;
    int max_rounds = 5;
    int mc_samples = 10;
    std::uint64_t seed = 0;
    PosteriorFamily family = PosteriorFamily::LowRankIsotropic;
    McConvention convention = McConvention::AveragedPredictive;

    void validate() const;  // bracket order, positive rounds/samples, epsilon >= 0
    double resolved_epsilon(double p0) const;
};

struct Probe {
    double sigma_q = 0.0;
    double metric_value = 0.0;
    bool accepted = false;
};

struct SearchTrace {
    double p0 = 0.0;            // deterministic baseline metric
    double epsilon_abs = 0.0;   // resolved absolute tolerance
    std::vector<Probe> probes;  // one per round, in order
    double result_sigma = 0.0;  // largest accepted sigma, else bracket_lo
    bool any_accepted = false;
    double bracket_lo = 0.0;    // final bracket after the last round
    double bracket_width = 0.0;
};

/**
 * Bisection on the variance budget against an arbitrary metric evaluator.
 *
 * Each round probes the midpoint of the current bracket and accepts it when
 * |metric(sigma) - p0| < epsilon_abs (strict; non-finite probe values are
 * rejected). Acceptance moves the bracket floor up to the midpoint,
 * rejection pulls the ceiling down; exactly max_rounds probes run. The
 * bracket is carried as (lo, width) and the width is halved each round, so
 * after k rounds it equals (hi - lo) / 2^k exactly. result_sigma is the
 * final floor: the largest probed value known to satisfy the constraint, or
 * bracket_lo if nothing was accepted (any_accepted = false flags that).
 */
SearchTrace binary_search_core(double p0, const std::function<double(double)>& metric_at_sigma,
                               const SearchConfig& cfg);

/**
 * The production wrapper: p0 is the deterministic metric of `net` on
 * `anchor`, each probe Bayesianizes the network at the midpoint budget and
 * evaluates with cfg.mc_samples draws under cfg.seed (common random numbers
 * across probes). Throws NumericError if the baseline is non-finite.
 */
SearchTrace binary_search_sigma(const Network& net, const Dataset& anchor,
                                const SearchConfig& cfg);

struct GridProbe {
    double sigma_q = 0.0;
    double metric_value = 0.0;
};

struct GridResult {
    double sigma_star = 0.0;
    double p0 = 0.0;
    double target = 0.0;  // metric level interpolated for
    std::vector<GridProbe> probes;
    bool clamped = false;  // target fell outside the observed range
};

/**
 * Grid fast path: piecewise-linear interpolation of the probe table.
 *
 * The target level is p0 + target_drop for metrics that degrade upward
 * (NLL, MSE, ECE, EmbeddingNorm) and p0 - target_drop for ACC. Segments are
 * scanned in ascending sigma; when several cross the target the largest
 * sigma wins (the budget is being maximized). A target outside the observed
 * range clamps to the nearest grid endpoint and sets `clamped`.
 */
GridResult grid_interpolate_core(double p0, std::span<const GridProbe> probes,
                                 double target_drop, MetricKind metric);

/**
 * Production wrapper of the grid path: probes every sigma in `grid`
 * (ascending, positive) with an independently derived seed per grid point,
 * then interpolates. Default grid mirroring the anchored recipe:
 * {0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.05}.
 */
GridResult grid_interpolated_sigma(const Network& net, const Dataset& anchor,
                                   std::span<const double> grid, double target_drop,
                                   const SearchConfig& cfg);

std::span<const double> default_sigma_grid();

}  // namespace tfb
