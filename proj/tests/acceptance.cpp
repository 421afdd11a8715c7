// Release gate: one check per acceptance criterion. Each prints a single
// [PASS]/[FAIL] line with the pinned tolerance, the measured number, and the
// runtime; the exit status is the count of failed criteria. Every check is
// seeded and deterministic, so a green run here is reproducible bit for bit.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "tfb/adapter.hpp"
#include "tfb/data.hpp"
#include "tfb/errors.hpp"
#include "tfb/inference.hpp"
#include "tfb/linalg.hpp"
#include "tfb/metrics.hpp"
#include "tfb/netcore.hpp"
#include "tfb/oracle.hpp"
#include "tfb/rng.hpp"
#include "tfb/search.hpp"
#include "tfb/util.hpp"

using namespace tfb;
using namespace tfb::rng;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, ...) {
    char buf[512];
    va_list args;
    va_start(args, pattern);
    std::vsnprintf(buf, sizeof(buf), pattern, args);
    va_end(args);
    return std::string(buf);
}

DenseMatrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t stream) {
    DenseMatrix out(rows, cols);
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = normal_at(stream, i);
    return out;
}

LoraAdapter random_adapter(std::size_t m, std::size_t r, std::size_t n, std::uint64_t seed) {
    LoraAdapter adapter;
    adapter.w0 = DenseMatrix(m, n);
    adapter.b = random_matrix(m, r, derive_stream(seed, {0}));
    adapter.a = random_matrix(r, n, derive_stream(seed, {1}));
    return adapter;
}

std::vector<std::vector<double>> random_inputs(std::size_t count, std::size_t dim,
                                               std::uint64_t seed) {
    const std::uint64_t s = derive_stream(seed, {7});
    std::vector<std::vector<double>> out(count, std::vector<double>(dim));
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < dim; ++j) out[i][j] = normal_at(s, i * dim + j);
    return out;
}

// Moves the A factors off their zero init so adapted deltas are generic.
void fill_a(Network& net, std::uint64_t seed, double scale_by = 0.3) {
    const std::uint64_t s = derive_stream(seed, {99});
    for (Layer& layer : net.layers) {
        if (layer.spec.kind != LayerKind::DenseAdapted) continue;
        for (std::size_t i = 0; i < layer.a.data.size(); ++i)
            layer.a.data[i] = scale_by * normal_at(s, i);
    }
}

// --- 01: assembled covariance is a scaled projector -------------------------------

Outcome check_covariance_projector() {
    double max_err = 0.0;
    const double sigmas[] = {0.1, 1.0, 3.0};
    for (std::uint64_t t = 0; t < 100; ++t) {
        const std::uint64_t s = derive_stream(1001, {t});
        const std::size_t m = 2 + word_at(s, 0) % 5;                        // 2..6
        const std::size_t n = 1 + word_at(s, 1) % 4;                        // 1..4
        const std::size_t r = 1 + word_at(s, 2) % std::min({m, n, std::size_t(3)});
        const LoraAdapter adapter = random_adapter(m, r, n, derive_stream(1002, {t}));
        for (double sigma : sigmas) {
            const BayesianAdapter bayes = bayesianize(adapter, sigma);
            const DenseMatrix cov =
                covariance_from_omega(bayes.b_prime, implied_omega(bayes));
            DenseMatrix u(m, r);
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t j = 0; j < r; ++j)
                    u.at(i, j) = bayes.b_prime.at(i, j) / bayes.d[j];
            const DenseMatrix rotated = rotate_to_adapted_basis(cov, u);
            const DenseMatrix want = scale(projection_matrix(m, n, r), sigma * sigma);
            max_err = std::max(max_err, max_abs_diff(rotated, want));
        }
    }
    return {max_err <= 1e-9,
            fmt("100 adapters x 3 sigmas, max |rotated cov - sigma^2 P| = %.2e (tol 1e-9)",
                max_err)};
}

// --- 02: SVD regrouping preserves the delta ----------------------------------------

Outcome check_regrouping() {
    double max_rel = 0.0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        const std::uint64_t s = derive_stream(2001, {t});
        const std::size_t m = 2 + word_at(s, 0) % 9;  // 2..10
        const std::size_t n = 1 + word_at(s, 1) % 8;  // 1..8
        const std::size_t r = 1 + word_at(s, 2) % std::min({m, n, std::size_t(4)});
        const LoraAdapter adapter = random_adapter(m, r, n, derive_stream(2002, {t}));
        const BayesianAdapter bayes = bayesianize(adapter, 1.0);
        const DenseMatrix original = matmul(adapter.b, adapter.a);
        const DenseMatrix regrouped = matmul(bayes.b_prime, bayes.m_mean);
        max_rel = std::max(max_rel, max_abs_diff(regrouped, original) / max_abs(original));
    }
    return {max_rel <= 1e-10,
            fmt("1000 adapters, max rel entry error of B'M vs BA = %.2e (tol 1e-10)",
                max_rel)};
}

// --- 03: closed-form KL matches the general Gaussian KL ----------------------------

Outcome check_kl_agreement() {
    double max_rel = 0.0;
    for (std::uint64_t t = 0; t < 200; ++t) {
        const std::uint64_t s = derive_stream(3001, {t});
        const std::size_t m = 2 + word_at(s, 0) % 4;  // 2..5
        const std::size_t n = 1 + word_at(s, 1) % 4;  // 1..4
        const std::size_t r = 1 + word_at(s, 2) % std::min({m, n, std::size_t(3)});
        const double sq = 0.05 + 0.25 * double(word_at(s, 3) % 5);  // 0.05..1.05
        const double sp = 0.50 + 0.25 * double(word_at(s, 4) % 4);  // 0.5..1.25

        const LoraAdapter adapter = random_adapter(m, r, n, derive_stream(3002, {t}));
        const BayesianAdapter bayes = bayesianize(adapter, sq);
        const DenseMatrix cov = covariance_from_omega(bayes.b_prime, implied_omega(bayes));
        DenseMatrix u(m, r);
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < r; ++j) u.at(i, j) = bayes.b_prime.at(i, j) / bayes.d[j];
        const DenseMatrix q_sup = restrict_to_support(rotate_to_adapted_basis(cov, u), m, n, r);
        const DenseMatrix p_sup = scale(DenseMatrix::identity(n * r), sp * sp);
        const std::vector<double> mu(n * r, 0.0);

        const double general = gaussian_kl_general(mu, q_sup, mu, p_sup);
        const double closed = kl_lowrank_closed_form({sq, sp, n, r, 1.0});
        max_rel = std::max(max_rel,
                           std::fabs(general - closed) / std::max(1.0, std::fabs(closed)));
    }
    double max_self = 0.0;
    for (double s : {0.3, 1.0, 2.5}) {
        max_self = std::max(max_self, std::fabs(kl_lowrank_closed_form({s, s, 3, 2, 1.0})));
    }
    return {max_rel <= 1e-8 && max_self <= 1e-12,
            fmt("200 tuples, max rel |general - closed| = %.2e (tol 1e-8); "
                "max |KL(s,s)| = %.2e (tol 1e-12)",
                max_rel, max_self)};
}

// --- 04: Lagrangian minimizer equals the constrained maximizer ---------------------

Outcome check_sweep_equivalence() {
    const std::size_t points = 10000;
    const double lo = 1e-4, hi = 1.5;
    const double step = (hi - lo) / double(points - 1);
    std::vector<double> grid(points);
    for (std::size_t i = 0; i < points; ++i) grid[i] = lo + double(i) * step;
    const std::vector<double> lambdas = {0.1, 1.0, 10.0};
    const KlParams base{0.5, 1.0, 3, 2, 1.0};  // n*r = 6

    double max_gap = 0.0, max_analytic_gap = 0.0, max_eps_err = 0.0;
    for (double c : {0.5, 2.0}) {
        const auto loss = [c](double s) { return c * s * s; };
        const std::vector<SweepRow> rows = vi_equivalence_sweep(loss, lambdas, base, grid);
        for (const SweepRow& row : rows) {
            max_gap = std::max(max_gap,
                               std::fabs(row.argmin_lagrangian - row.argmax_constrained));
            // d/ds [c s^2 + lambda (nr/2)(s^2 - log s^2 - 1)] = 0 at
            // s = sqrt(lambda nr / (2c + lambda nr)) for a unit-variance prior.
            const double nr = 6.0;
            const double analytic = std::sqrt(row.lambda * nr / (2.0 * c + row.lambda * nr));
            max_analytic_gap =
                std::max(max_analytic_gap, std::fabs(row.argmin_lagrangian - analytic));
            max_eps_err = std::max(
                max_eps_err, std::fabs(row.epsilon_tilde - loss(row.argmin_lagrangian)));
        }
    }
    const bool pass = max_gap <= step * (1.0 + 1e-12) &&
                      max_analytic_gap <= step * (1.0 + 1e-12) && max_eps_err <= 1e-15;
    return {pass,
            fmt("6 (c, lambda) rows on %zu-point grid: max |argmin - argmax| = %.2e, "
                "max |argmin - analytic| = %.2e (tol = step %.2e)",
                points, max_gap, max_analytic_gap, step)};
}

// --- 05: bisection tracks the acceptance boundary of monotone metrics --------------

Outcome check_bisection() {
    const double lo = 0.1, hi = 1.7;
    const double resolution = (hi - lo) / 32.0;  // 5 rounds
    SearchConfig cfg;
    cfg.tolerance_mode = ToleranceMode::Absolute;
    cfg.epsilon = 0.5;
    cfg.bracket_lo = lo;
    cfg.bracket_hi = hi;
    cfg.max_rounds = 5;

    struct Case {
        double p0, slope;
    };
    // Boundaries: 0.25 (inside), 1.25 (inside, decreasing), 1.7 (all accepted).
    const std::vector<Case> cases = {{1.0, 2.0}, {4.0, -0.4}, {0.0, 0.1}};
    double max_boundary_gap = 0.0;
    for (const Case& c : cases) {
        const auto metric = [&](double s) { return c.p0 + c.slope * s; };
        const SearchTrace trace = binary_search_core(c.p0, metric, cfg);
        if (trace.probes.size() != 5) return {false, "expected exactly 5 probes"};

        // Replay the bracket walk with the same arithmetic: the width must
        // halve exactly each round and every probe must sit at lo + width.
        double want_lo = lo;
        double want_width = hi - lo;
        for (const Probe& probe : trace.probes) {
            want_width *= 0.5;
            const double want_mid = want_lo + want_width;
            if (probe.sigma_q != want_mid) return {false, "probe is not the exact midpoint"};
            const double value = metric(want_mid);
            const bool want_accept =
                std::isfinite(value) && std::fabs(value - c.p0) < trace.epsilon_abs;
            if (probe.accepted != want_accept) return {false, "acceptance replay mismatch"};
            if (probe.accepted) want_lo = want_mid;
        }
        if (trace.bracket_width != want_width || trace.bracket_lo != want_lo ||
            trace.result_sigma != want_lo) {
            return {false, "final bracket does not match the exact replay"};
        }

        const double boundary = std::min(cfg.epsilon / std::fabs(c.slope), hi);
        const double gap = boundary - trace.result_sigma;
        if (gap < -1e-15 || gap > resolution + 1e-15) {
            return {false, fmt("result %.6f not within (hi-lo)/32 below boundary %.6f",
                               trace.result_sigma, boundary)};
        }
        max_boundary_gap = std::max(max_boundary_gap, gap);
    }
    return {true, fmt("3 linear metrics: exact midpoint/width replay, "
                      "max boundary gap = %.3e (cap %.3e)",
                      max_boundary_gap, resolution)};
}

// --- 06: grid interpolation recovers a linear crossing exactly ---------------------

Outcome check_grid_interpolation() {
    std::vector<GridProbe> up, down;
    for (double s : default_sigma_grid()) {
        up.push_back({s, 0.2 + 40.0 * s});   // degrades upward (NLL-like)
        down.push_back({s, 0.9 - 2.0 * s});  // degrades downward (ACC-like)
    }
    const GridResult nll_result = grid_interpolate_core(0.2, up, 1.0, MetricKind::NLL);
    const GridResult acc_result = grid_interpolate_core(0.9, down, 0.04, MetricKind::ACC);
    const double err_nll = std::fabs(nll_result.sigma_star - 0.025);  // (p0+1.0 at 40/unit)
    const double err_acc = std::fabs(acc_result.sigma_star - 0.020);  // (p0-0.04 at 2/unit)
    const bool pass =
        err_nll <= 1e-9 && err_acc <= 1e-9 && !nll_result.clamped && !acc_result.clamped;
    return {pass, fmt("linear profiles on the default grid: |sigma* - analytic| = "
                      "%.2e (up), %.2e (down), tol 1e-9",
                      err_nll, err_acc)};
}

// --- 07: toy regression band widens away from the data -----------------------------

Outcome check_toy_band() {
    const Dataset data = toy_cubic(42);  // 20 points, y = x^3 + noise
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, 1, 16, 1, Activation::Tanh},
        LayerSpec{LayerKind::DenseAdapted, 16, 1, 1, Activation::Identity},
    };
    Network net = init_network(specs, 7);
    const TrainResult trained = train_adam(std::move(net), data, LossKind::MSE, 1000, 0.1, 0.0);
    const double mse = trained.loss_curve.back();
    if (!(mse <= 150.0)) {
        return {false, fmt("training MSE %.2f exceeds the 150 cap", mse)};
    }

    const NetworkPosterior posterior =
        bayesianize_network(trained.net, 1.0, PosteriorFamily::FullRankIsotropic);
    PredictionConfig cfg;
    cfg.mc_samples = 10;
    cfg.seed = 7;
    const std::vector<BandRow> band =
        prediction_band(trained.net, posterior, {-6.0, 0.0, 6.0}, cfg);
    const double w_left = band[0].hi - band[0].lo;
    const double w_mid = band[1].hi - band[1].lo;
    const double w_right = band[2].hi - band[2].lo;
    const double ratio = std::min(w_left, w_right) / w_mid;

    // Threshold pre-registered from the pinned reference run (observed 5.09;
    // 5.1..16 across alternative seeds).
    const bool pass = w_left > w_mid && w_right > w_mid && ratio >= 3.0;
    return {pass, fmt("mse=%.2f, band widths %.2f / %.2f / %.2f at x=-6/0/+6, "
                      "min edge/center ratio %.2f (floor 3.0)",
                      mse, w_left, w_mid, w_right, ratio)};
}

// --- 08: zero variance budget reduces to the deterministic model -------------------

Outcome check_zero_sigma_degeneracy() {
    double max_dev = 0.0;
    const auto track = [&](double got, double want) {
        max_dev = std::max(max_dev, std::fabs(got - want));
    };

    // Regression side.
    Network reg_net = init_network(
        {LayerSpec{LayerKind::DenseAdapted, 1, 5, 1, Activation::Tanh},
         LayerSpec{LayerKind::DenseAdapted, 5, 1, 1, Activation::Identity}},
        21);
    fill_a(reg_net, 21, 0.4);
    const Dataset cubic = toy_cubic(42);

    // Classification side.
    Network cls_net = init_network(
        {LayerSpec{LayerKind::DenseAdapted, 2, 6, 2, Activation::Tanh},
         LayerSpec{LayerKind::DenseAdapted, 6, 3, 1, Activation::Identity}},
        22);
    fill_a(cls_net, 22, 0.4);
    const Dataset blobs = toy_blobs(3, 25, 3.0, 5);

    for (PosteriorFamily family :
         {PosteriorFamily::LowRankIsotropic, PosteriorFamily::FullRankIsotropic}) {
        const NetworkPosterior reg_post = bayesianize_network(reg_net, 0.0, family);
        const NetworkPosterior cls_post = bayesianize_network(cls_net, 0.0, family);

        for (MetricKind kind : {MetricKind::MSE, MetricKind::EmbeddingNorm}) {
            track(evaluate(reg_net, &reg_post, cubic, kind, 7, 9).value,
                  evaluate(reg_net, nullptr, cubic, kind, 0, 9).value);
        }
        for (MetricKind kind :
             {MetricKind::NLL, MetricKind::ACC, MetricKind::ECE, MetricKind::EmbeddingNorm}) {
            track(evaluate(cls_net, &cls_post, blobs, kind, 7, 9).value,
                  evaluate(cls_net, nullptr, blobs, kind, 0, 9).value);
        }

        // Prediction side: MC mean vs the plain forward pass.
        PredictionConfig cfg;
        cfg.mc_samples = 7;
        const auto reg_inputs = random_inputs(6, 1, 81);
        const PredictiveSummary reg_sum =
            mc_predict(reg_net, reg_post, reg_inputs, cfg, Task::Regression);
        for (std::size_t i = 0; i < reg_inputs.size(); ++i) {
            const std::vector<double> det = forward(reg_net, reg_inputs[i]);
            for (std::size_t j = 0; j < det.size(); ++j) track(reg_sum.mean[i][j], det[j]);
        }
        const auto cls_inputs = random_inputs(6, 2, 82);
        const PredictiveSummary cls_sum =
            mc_predict(cls_net, cls_post, cls_inputs, cfg, Task::Classification);
        for (std::size_t i = 0; i < cls_inputs.size(); ++i) {
            const std::vector<double> probs = softmax(forward(cls_net, cls_inputs[i]));
            for (std::size_t j = 0; j < probs.size(); ++j)
                track(cls_sum.class_probs[i][j], probs[j]);
        }
    }
    return {max_dev <= 1e-12,
            fmt("both families, all metrics, both tasks: max |bayes - det| = %.2e (tol 1e-12)",
                max_dev)};
}

// --- 09: last-layer fast path matches the naive restriction ------------------------

Outcome check_last_layer_fast_path() {
    double max_dev = 0.0;
    for (std::uint64_t t = 0; t < 100; ++t) {
        const std::size_t hidden = 3 + t % 5;
        const std::size_t out = 1 + t % 3;
        std::vector<LayerSpec> specs = {
            LayerSpec{LayerKind::DenseAdapted, 2, hidden, 1 + t % 2, Activation::Tanh}};
        if (t % 3 == 0) {
            specs.push_back(LayerSpec{LayerKind::DenseFixed, hidden, hidden, 0,
                                      Activation::ReLU});
        }
        specs.push_back(LayerSpec{LayerKind::DenseAdapted, specs.back().out_dim, out,
                                  1 + t % std::min({specs.back().out_dim, out, std::size_t(2)}),
                                  Activation::Identity});
        Network net = init_network(specs, 9000 + t);
        fill_a(net, 9000 + t);
        const NetworkPosterior post = bayesianize_network(
            net, 0.1 + 0.05 * double(t % 4),
            t % 2 ? PosteriorFamily::LowRankIsotropic : PosteriorFamily::FullRankIsotropic);
        const auto inputs = random_inputs(2 + t % 4, 2, 9100 + t);
        const Task task = (out >= 2 && t % 2) ? Task::Classification : Task::Regression;

        PredictionConfig cfg;
        cfg.mc_samples = 3 + int(t % 4);
        cfg.seed = t;
        cfg.mode = PredictMode::LastLayerOnly;

        PredictStats naive_stats, fast_stats;
        const PredictiveSummary naive = mc_predict(net, post, inputs, cfg, task, &naive_stats);
        const PredictiveSummary fast =
            last_layer_fast_predict(net, post, inputs, cfg, task, &fast_stats);

        for (std::size_t i = 0; i < inputs.size(); ++i) {
            for (std::size_t j = 0; j < naive.mean[i].size(); ++j) {
                max_dev = std::max(max_dev, std::fabs(naive.mean[i][j] - fast.mean[i][j]));
                max_dev =
                    std::max(max_dev, std::fabs(naive.std_dev[i][j] - fast.std_dev[i][j]));
            }
            if (task == Task::Classification) {
                for (std::size_t j = 0; j < naive.class_probs[i].size(); ++j)
                    max_dev = std::max(
                        max_dev, std::fabs(naive.class_probs[i][j] - fast.class_probs[i][j]));
            }
        }
        if (fast_stats.prefix_passes != (long long)inputs.size()) {
            return {false, fmt("fast path ran the prefix %lld times for %zu inputs",
                               fast_stats.prefix_passes, inputs.size())};
        }
        if (naive_stats.prefix_passes != (long long)inputs.size() * cfg.mc_samples) {
            return {false, "naive path prefix count is not |inputs| * mc_samples"};
        }
    }
    return {max_dev <= 1e-12,
            fmt("100 configs: max |naive - fast| = %.2e (tol 1e-12), "
                "prefix passes = |inputs| on every config",
                max_dev)};
}

// --- 10: calibration and likelihood metrics match brute-force oracles --------------

// Comparison-form binning: bin k holds k/bins <= c < (k+1)/bins, and exact
// 1.0 lands in the last bin.
double ece_oracle(const std::vector<double>& conf, const std::vector<int>& correct, int bins) {
    double total = 0.0;
    const double n = double(conf.size());
    for (int k = 0; k < bins; ++k) {
        double conf_sum = 0.0, acc_sum = 0.0;
        long pop = 0;
        for (std::size_t i = 0; i < conf.size(); ++i) {
            const bool in_bin =
                (conf[i] >= double(k) / bins && conf[i] < double(k + 1) / bins) ||
                (k == bins - 1 && conf[i] == 1.0);
            if (!in_bin) continue;
            conf_sum += conf[i];
            acc_sum += correct[i];
            ++pop;
        }
        if (pop == 0) continue;
        total += double(pop) / n * std::fabs(acc_sum / double(pop) - conf_sum / double(pop));
    }
    return total;
}

Outcome check_metric_oracles() {
    std::size_t ece_mismatches = 0;
    double max_nll_dev = 0.0;
    for (std::uint64_t t = 0; t < 1000; ++t) {
        const std::uint64_t sc = derive_stream(10001, {t, 0});
        const std::uint64_t sr = derive_stream(10001, {t, 1});
        const std::size_t n = 1 + word_at(sc, 999999) % 40;
        std::vector<double> conf(n), probs(n);
        std::vector<int> correct(n);
        for (std::size_t i = 0; i < n; ++i) {
            conf[i] = uniform01_at(sc, i);
            probs[i] = uniform01_at(sc, 1000 + i);
            correct[i] = int(word_at(sr, i) % 2);
        }
        if (n > 4) {  // exercise the exact bin edges and endpoints
            conf[0] = 0.0;
            conf[1] = 1.0;
            conf[2] = 2.0 / 15.0;
            conf[3] = 14.0 / 15.0;
        }
        if (ece(conf, correct).value != ece_oracle(conf, correct, 15)) ++ece_mismatches;

        long double serial = 0.0L;
        for (double p : probs) serial += -std::log((long double)p);
        serial /= (long double)n;
        max_nll_dev = std::max(max_nll_dev, std::fabs(nll(probs) - double(serial)));
    }

    const std::vector<double> sure(32, 1.0);
    const std::vector<int> right(32, 1);
    const bool edge_ok = ece(sure, right).value == 0.0 && nll(sure) == 0.0;
    const bool pass = ece_mismatches == 0 && max_nll_dev <= 1e-12 && edge_ok;
    return {pass, fmt("1000 sets: ECE bitwise mismatches = %zu, max |NLL - serial oracle| "
                      "= %.2e (tol 1e-12), confident-correct edge %s",
                      ece_mismatches, max_nll_dev, edge_ok ? "exact" : "WRONG")};
}

// --- 11: analytic gradients match central finite differences -----------------------

struct ParamRef {
    std::size_t layer;
    enum Which { B, A, Bias } which;
    std::size_t index;
};

std::vector<ParamRef> list_params(const Network& net) {
    std::vector<ParamRef> out;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        if (layer.spec.kind == LayerKind::DenseAdapted) {
            for (std::size_t i = 0; i < layer.b.data.size(); ++i)
                out.push_back({l, ParamRef::B, i});
            for (std::size_t i = 0; i < layer.a.data.size(); ++i)
                out.push_back({l, ParamRef::A, i});
        }
        for (std::size_t i = 0; i < layer.bias.size(); ++i)
            out.push_back({l, ParamRef::Bias, i});
    }
    return out;
}

double& param_at(Network& net, const ParamRef& ref) {
    Layer& layer = net.layers[ref.layer];
    switch (ref.which) {
        case ParamRef::B: return layer.b.data[ref.index];
        case ParamRef::A: return layer.a.data[ref.index];
        default: return layer.bias[ref.index];
    }
}

double grad_at(const Gradients& grads, const ParamRef& ref) {
    switch (ref.which) {
        case ParamRef::B: return grads.b[ref.layer].data[ref.index];
        case ParamRef::A: return grads.a[ref.layer].data[ref.index];
        default: return grads.bias[ref.layer][ref.index];
    }
}

Outcome check_gradients() {
    double max_rel = 0.0;
    for (std::uint64_t t = 0; t < 200; ++t) {
        const std::uint64_t s = derive_stream(11001, {t});
        const std::size_t in = 1 + word_at(s, 0) % 4;
        const std::size_t hidden = 2 + word_at(s, 1) % 5;
        const bool classify = (t % 2 == 1);
        const std::size_t out = classify ? 2 + word_at(s, 2) % 2 : 1;
        const Activation act = (t % 3 == 0) ? Activation::ReLU : Activation::Tanh;
        const LayerKind first =
            (t % 5 == 0) ? LayerKind::DenseFixed : LayerKind::DenseAdapted;
        const LayerKind last =
            (t % 7 == 0) ? LayerKind::DenseFixed : LayerKind::DenseAdapted;
        const std::vector<LayerSpec> specs = {
            LayerSpec{first, in, hidden,
                      first == LayerKind::DenseAdapted ? 1 + word_at(s, 3) % std::min(in, hidden)
                                                       : 0,
                      act},
            LayerSpec{last, hidden, out,
                      last == LayerKind::DenseAdapted ? 1 + word_at(s, 4) % std::min(hidden, out)
                                                      : 0,
                      Activation::Identity},
        };
        Network net = init_network(specs, 11100 + t);
        fill_a(net, 11100 + t);

        Dataset batch;
        batch.task = classify ? Task::Classification : Task::Regression;
        const std::size_t count = 2 + word_at(s, 5) % 7;
        const std::uint64_t sx = derive_stream(11002, {t});
        for (std::size_t i = 0; i < count; ++i) {
            std::vector<double> x(in);
            for (std::size_t j = 0; j < in; ++j) x[j] = normal_at(sx, i * in + j);
            batch.inputs.push_back(std::move(x));
        }
        if (classify) {
            batch.class_count = out;
            batch.labels.emplace();
            for (std::size_t i = 0; i < count; ++i)
                batch.labels->push_back(int(word_at(sx, 5000 + i) % out));
        } else {
            batch.targets.emplace();
            for (std::size_t i = 0; i < count; ++i)
                batch.targets->push_back(normal_at(sx, 6000 + i));
        }
        const LossKind loss = classify ? LossKind::SoftmaxCrossEntropy : LossKind::MSE;
        const double wd = (t % 4 == 0) ? 0.05 : 0.0;

        const Gradients grads = loss_and_grads(net, batch, loss, wd).second;
        const std::vector<ParamRef> params = list_params(net);
        const std::size_t stride = std::max<std::size_t>(1, params.size() / 24);
        const double h = 1e-5;
        for (std::size_t p = 0; p < params.size(); p += stride) {
            const ParamRef& ref = params[p];
            const double saved = param_at(net, ref);
            param_at(net, ref) = saved + h;
            const double up = loss_and_grads(net, batch, loss, wd).first;
            param_at(net, ref) = saved - h;
            const double down = loss_and_grads(net, batch, loss, wd).first;
            param_at(net, ref) = saved;

            const double numeric = (up - down) / (2.0 * h);
            const double analytic = grad_at(grads, ref);
            const double denom = std::max({1.0, std::fabs(numeric), std::fabs(analytic)});
            max_rel = std::max(max_rel, std::fabs(numeric - analytic) / denom);
        }
    }
    return {max_rel <= 1e-4,
            fmt("200 network/batch pairs: max rel |numeric - analytic| = %.2e (tol 1e-4)",
                max_rel)};
}

// --- 12: Monte-Carlo error shrinks like 1/sqrt(N) ----------------------------------

Outcome check_mc_scaling() {
    Network net = init_network(
        {LayerSpec{LayerKind::DenseAdapted, 2, 6, 2, Activation::Tanh},
         LayerSpec{LayerKind::DenseAdapted, 6, 3, 1, Activation::Identity}},
        33);
    fill_a(net, 33, 0.5);
    const NetworkPosterior post =
        bayesianize_network(net, 0.5, PosteriorFamily::LowRankIsotropic);
    const std::vector<std::vector<double>> input = {{0.7, -0.4}};

    const std::size_t reps = 2000;
    const int sample_counts[] = {10, 40, 160};
    std::vector<double> se;
    for (int n : sample_counts) {
        std::vector<double> estimates(reps);
        for (std::size_t rep = 0; rep < reps; ++rep) {
            PredictionConfig cfg;
            cfg.mc_samples = n;
            cfg.seed = derive_stream(4242, {std::uint64_t(n), rep});
            estimates[rep] =
                mc_predict(net, post, input, cfg, Task::Classification).class_probs[0][0];
        }
        se.push_back(population_std(estimates));
    }

    // Each SE over R reps carries relative sampling noise ~ 1/sqrt(2R), so a
    // ratio of independent SEs has SD ~ ratio * sqrt(1/R).
    const double tol = 3.0 * 2.0 * std::sqrt(1.0 / double(reps));
    const double r1 = se[0] / se[1];
    const double r2 = se[1] / se[2];
    const bool pass = se[0] > se[1] && se[1] > se[2] && std::fabs(r1 - 2.0) <= tol &&
                      std::fabs(r2 - 2.0) <= tol;
    return {pass, fmt("SE(10/40/160) = %.4f / %.4f / %.4f over %zu reps; "
                      "quadrupling ratios %.3f, %.3f (want 2 +/- %.3f)",
                      se[0], se[1], se[2], reps, r1, r2, tol)};
}

// --- 13: the posterior covariance ignores the factorization ------------------------

Outcome check_reparameterization() {
    double max_lowrank_dev = 0.0;
    double min_cstd_dev = std::numeric_limits<double>::infinity();
    for (std::uint64_t t = 0; t < 20; ++t) {
        const std::size_t m = 3 + t % 4;
        const std::size_t n = 2 + t % 3;
        const std::size_t r = 1 + t % std::min({m, n, std::size_t(3)});
        const LoraAdapter first = random_adapter(m, r, n, derive_stream(13001, {t}));

        // Equivalent factorization: (B R, R^-1 A) leaves the delta unchanged.
        const DenseMatrix rot = random_matrix(r, r, derive_stream(13002, {t}));
        LoraAdapter second = first;
        second.b = matmul(first.b, rot);
        second.a = matmul(invert(rot), first.a);
        const double delta_drift = max_abs_diff(matmul(second.b, second.a),
                                                matmul(first.b, first.a));
        if (delta_drift > 1e-8 * std::max(1.0, max_abs(matmul(first.b, first.a)))) {
            return {false, "reparameterized delta drifted; test precondition broken"};
        }

        const BayesianAdapter bayes1 = bayesianize(first, 0.7);
        const BayesianAdapter bayes2 = bayesianize(second, 0.7);

        const DenseMatrix cov1 = covariance_from_omega(bayes1.b_prime, implied_omega(bayes1));
        const DenseMatrix cov2 = covariance_from_omega(bayes2.b_prime, implied_omega(bayes2));
        max_lowrank_dev = std::max(max_lowrank_dev, max_abs_diff(cov1, cov2));

        const DenseMatrix alt1 =
            covariance_from_omega(bayes1.b_prime, constant_omega(r, n, 0.7));
        const DenseMatrix alt2 =
            covariance_from_omega(bayes2.b_prime, constant_omega(r, n, 0.7));
        min_cstd_dev = std::min(min_cstd_dev, max_abs_diff(alt1, alt2));
    }
    const bool pass = max_lowrank_dev <= 1e-8 && min_cstd_dev > 1e-3;
    return {pass, fmt("20 reparameterizations: low-rank family max dev = %.2e (tol 1e-8); "
                      "constant-std family min dev = %.2e (must exceed 1e-3)",
                      max_lowrank_dev, min_cstd_dev)};
}

struct Criterion {
    int id;
    const char* name;
    double budget_seconds;
    std::function<Outcome()> run;
};

}  // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {1, "assembled-covariance-is-scaled-projector", 5.0, check_covariance_projector},
        {2, "svd-regrouping-preserves-delta", 5.0, check_regrouping},
        {3, "kl-closed-form-matches-general", 10.0, check_kl_agreement},
        {4, "lagrangian-equals-constrained-optimum", 30.0, check_sweep_equivalence},
        {5, "bisection-tracks-monotone-boundary", 1.0, check_bisection},
        {6, "grid-interpolation-recovers-linear-crossing", 1.0, check_grid_interpolation},
        {7, "toy-band-widens-away-from-data", 60.0, check_toy_band},
        {8, "zero-variance-reduces-to-deterministic", 5.0, check_zero_sigma_degeneracy},
        {9, "last-layer-fast-path-matches-naive", 10.0, check_last_layer_fast_path},
        {10, "metric-oracles-agree", 5.0, check_metric_oracles},
        {11, "gradients-match-finite-differences", 30.0, check_gradients},
        {12, "mc-error-scales-inverse-sqrt", 60.0, check_mc_scaling},
        {13, "posterior-invariant-to-reparameterization", 10.0, check_reparameterization},
    };

    int failures = 0;
    for (const Criterion& criterion : criteria) {
        Outcome outcome;
        const auto start = std::chrono::steady_clock::now();
        try {
            outcome = criterion.run();
        } catch (const std::exception& err) {
            outcome = {false, fmt("threw: %s", err.what())};
        }
        const double elapsed =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (elapsed >= criterion.budget_seconds) {
            outcome.pass = false;
            outcome.detail +=
                fmt("; exceeded the %.0fs runtime budget", criterion.budget_seconds);
        }
        if (!outcome.pass) ++failures;
        std::printf("[%s] %02d %s  %s  [%.2fs]\n", outcome.pass ? "PASS" : "FAIL",
                    criterion.id, criterion.name, outcome.detail.c_str(), elapsed);
    }
    std::printf("acceptance: %zu/%zu criteria passed\n", criteria.size() - std::size_t(failures),
                criteria.size());
    return failures;
}
