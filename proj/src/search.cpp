#include "tfb/search.hpp"

#include <algorithm>
#include <cmath>

#include "tfb/errors.hpp"
#include "tfb/inference.hpp"
#include "tfb/rng.hpp"
#include "tfb/util.hpp"

namespace tfb {

void SearchConfig::validate() const {
    if (!(bracket_lo >= 0.0) || !(bracket_hi > bracket_lo)) {
        throw ValidationError("SearchConfig: need 0 <= bracket_lo < bracket_hi");
    }
    if (max_rounds < 1) throw ValidationError("SearchConfig: max_rounds must be >= 1");
    if (mc_samples < 1) throw ValidationError("SearchConfig: mc_samples must be >= 1");
    if (!(epsilon >= 0.0)) throw ValidationError("SearchConfig: epsilon must be >= 0");
}

double SearchConfig::resolved_epsilon(double p0) const {
    if (tolerance_mode == ToleranceMode::Absolute) return epsilon;
    return epsilon * std::fabs(p0);
}

SearchTrace binary_search_core(double p0, const std::function<double(double)>& metric_at_sigma,
                               const SearchConfig& cfg) {
    cfg.validate();
    if (!std::isfinite(p0)) {
        throw NumericError("binary_search_core: baseline metric is not finite");
    }

    SearchTrace trace;
    trace.p0 = p0;
    trace.epsilon_abs = cfg.resolved_epsilon(p0);

    // Bracket as (lo, width): the width halves exactly each round.
    double lo = cfg.bracket_lo;
    double width = cfg.bracket_hi - cfg.bracket_lo;

    for (int round = 0; round < cfg.max_rounds; ++round) {
        width *= 0.5;
        const double mid = lo + width;
        const double value = metric_at_sigma(mid);
        // A non-finite probe cannot satisfy a strict tolerance; it is an
        // ordinary rejection, not an error.
        const bool accepted =
            std::isfinite(value) && std::fabs(value - p0) < trace.epsilon_abs;
        trace.probes.push_back(Probe{mid, value, accepted});
        if (accepted) lo = mid;
    }

    trace.bracket_lo = lo;
    trace.bracket_width = width;
    trace.any_accepted =
        std::any_of(trace.probes.begin(), trace.probes.end(),
                    [](const Probe& p) { return p.accepted; });
    trace.result_sigma = lo;
    return trace;
}

namespace {

double evaluate_at_sigma(const Network& net, const NetworkPosterior& base,
                         const Dataset& anchor, const SearchConfig& cfg, double sigma,
                         std::uint64_t seed) {
    const NetworkPosterior posterior = posterior_with_sigma(base, sigma);
    return evaluate(net, &posterior, anchor, cfg.metric, cfg.mc_samples, seed, cfg.convention)
        .value;
}

}  // namespace

SearchTrace binary_search_sigma(const Network& net, const Dataset& anchor,
                                const SearchConfig& cfg) {
    cfg.validate();
    anchor.validate();

    const double p0 = evaluate(net, nullptr, anchor, cfg.metric, 0, cfg.seed).value;
    if (!std::isfinite(p0)) {
        throw NumericError("binary_search_sigma: deterministic baseline is not finite");
    }

    // One SVD per adapted layer, reused across every probe. The probe seed is
    // cfg.seed for all rounds: common random numbers make the metric smooth
    // in sigma.
    const NetworkPosterior base = bayesianize_network(net, 0.0, cfg.family);
    return binary_search_core(
        p0,
        [&](double sigma) { return evaluate_at_sigma(net, base, anchor, cfg, sigma, cfg.seed); },
        cfg);
}

GridResult grid_interpolate_core(double p0, std::span<const GridProbe> probes,
                                 double target_drop, MetricKind metric) {
    if (probes.size() < 2) {
        throw ValidationError("grid_interpolate_core: need at least two probes");
    }
    for (std::size_t i = 1; i < probes.size(); ++i) {
        if (!(probes[i].sigma_q > probes[i - 1].sigma_q)) {
            throw ValidationError("grid_interpolate_core: probe sigmas must be ascending");
        }
    }
    if (!(target_drop >= 0.0)) {
        throw ValidationError("grid_interpolate_core: target_drop must be >= 0");
    }

    GridResult result;
    result.p0 = p0;
    result.probes.assign(probes.begin(), probes.end());
    result.target = metric_degrades_upward(metric) ? p0 + target_drop : p0 - target_drop;

    // Scan segments in ascending sigma; keep the last crossing (largest
    // sigma) since the budget is being maximized.
    bool found = false;
    double sigma_star = 0.0;
    for (std::size_t i = 0; i + 1 < probes.size(); ++i) {
        const double y0 = probes[i].metric_value;
        const double y1 = probes[i + 1].metric_value;
        const double lo = std::min(y0, y1);
        const double hi = std::max(y0, y1);
        if (result.target < lo || result.target > hi) continue;
        double t = 0.0;
        if (y1 != y0) {
            t = (result.target - y0) / (y1 - y0);
        }
        // Flat segment at the target: the whole segment qualifies; take its
        // upper end (largest sigma).
        if (y1 == y0) t = 1.0;
        sigma_star = probes[i].sigma_q + t * (probes[i + 1].sigma_q - probes[i].sigma_q);
        found = true;
    }

    if (!found) {
        // Outside the observed range: clamp toward the endpoint nearest the
        // target in metric terms.
        const double first = probes.front().metric_value;
        const double last = probes.back().metric_value;
        result.clamped = true;
        sigma_star = std::fabs(result.target - first) <= std::fabs(result.target - last)
                         ? probes.front().sigma_q
                         : probes.back().sigma_q;
    }

    result.sigma_star = sigma_star;
    return result;
}

GridResult grid_interpolated_sigma(const Network& net, const Dataset& anchor,
                                   std::span<const double> grid, double target_drop,
                                   const SearchConfig& cfg) {
    cfg.validate();
    anchor.validate();
    if (grid.size() < 2) {
        throw ValidationError("grid_interpolated_sigma: need at least two grid points");
    }
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!(grid[i] > 0.0) || (i > 0 && !(grid[i] > grid[i - 1]))) {
            throw ValidationError(
                "grid_interpolated_sigma: grid must be positive and strictly ascending");
        }
    }

    const double p0 = evaluate(net, nullptr, anchor, cfg.metric, 0, cfg.seed).value;
    if (!std::isfinite(p0)) {
        throw NumericError("grid_interpolated_sigma: deterministic baseline is not finite");
    }

    const NetworkPosterior base = bayesianize_network(net, 0.0, cfg.family);

    // Each grid point draws from its own derived seed and the slots are
    // assembled by index, so the result is the same no matter how the probes
    // are scheduled.
    std::vector<GridProbe> probes(grid.size());
    parallel_for(grid.size(), [&](std::size_t i) {
        const std::uint64_t point_seed = rng::derive_stream(cfg.seed, {0x6721d, i});
        probes[i] =
            GridProbe{grid[i], evaluate_at_sigma(net, base, anchor, cfg, grid[i], point_seed)};
    });

    return grid_interpolate_core(p0, probes, target_drop, cfg.metric);
}

std::span<const double> default_sigma_grid() {
    static const double kGrid[] = {0.01, 0.015, 0.02, 0.025, 0.03, 0.035, 0.04, 0.05};
    return kGrid;
}

}  // namespace tfb
