#include <doctest.h>

#include <cmath>
#include <vector>

#include "tfb/data.hpp"
#include "tfb/errors.hpp"
#include "tfb/inference.hpp"
#include "tfb/netcore.hpp"
#include "tfb/rng.hpp"
#include "tfb/util.hpp"

using namespace tfb;
using namespace tfb::rng;

namespace {

Network small_net(std::uint64_t seed, std::size_t in = 2, std::size_t hidden = 6,
                  std::size_t out = 3) {
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, in, hidden, 2, Activation::Tanh},
        LayerSpec{LayerKind::DenseAdapted, hidden, out, 1, Activation::Identity},
    };
    Network net = init_network(specs, seed);
    const std::uint64_t sa = derive_stream(seed, {99});
    for (Layer& layer : net.layers) {
        for (std::size_t i = 0; i < layer.a.data.size(); ++i) {
            layer.a.data[i] = 0.4 * normal_at(sa, i);
        }
    }
    return net;
}

std::vector<std::vector<double>> grid_inputs(std::size_t count, std::size_t dim,
                                             std::uint64_t seed) {
    std::vector<std::vector<double>> out(count, std::vector<double>(dim));
    const std::uint64_t s = derive_stream(seed, {1});
    for (std::size_t i = 0; i < count; ++i)
        for (std::size_t j = 0; j < dim; ++j) out[i][j] = normal_at(s, i * dim + j);
    return out;
}

}  // namespace

TEST_CASE("sigma_q = 0 collapses the predictive onto the deterministic forward") {
    const Network net = small_net(3);
    const NetworkPosterior post =
        bayesianize_network(net, 0.0, PosteriorFamily::LowRankIsotropic);
    const auto inputs = grid_inputs(5, 2, 10);

    PredictionConfig cfg;
    cfg.mc_samples = 7;
    cfg.keep_samples = true;
    const PredictiveSummary sum = mc_predict(net, post, inputs, cfg, Task::Regression);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        const std::vector<double> det = forward(net, inputs[i]);
        // Every sample path is bitwise the deterministic pass: a zero-noise delta
        // adds exact signed zeros to each preactivation.
        for (const auto& sample : sum.samples) {
            CHECK(sample[i] == det);
        }
        // The mean over n identical doubles rounds in the last bit unless n is a
        // small power of two (blockwise summation: 3x, 5x, 7x are inexact), so the
        // summary is machine-eps close rather than bitwise.
        for (std::size_t j = 0; j < det.size(); ++j) {
            CHECK(std::abs(sum.mean[i][j] - det[j]) <= 1e-13 * (1.0 + std::abs(det[j])));
            CHECK(sum.std_dev[i][j] <= 1e-13 * (1.0 + std::abs(det[j])));
        }
    }
}

TEST_CASE("a single Monte-Carlo sample has zero spread and equals that sample") {
    const Network net = small_net(4);
    const NetworkPosterior post =
        bayesianize_network(net, 0.5, PosteriorFamily::LowRankIsotropic);
    const auto inputs = grid_inputs(3, 2, 11);

    PredictionConfig cfg;
    cfg.mc_samples = 1;
    cfg.keep_samples = true;
    const PredictiveSummary sum = mc_predict(net, post, inputs, cfg, Task::Regression);
    REQUIRE(sum.samples.size() == 1);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        CHECK(sum.mean[i] == sum.samples[0][i]);
        for (double s : sum.std_dev[i]) CHECK(s == 0.0);
    }
}

TEST_CASE("mc_predict is deterministic in the seed and varies across seeds") {
    const Network net = small_net(5);
    const NetworkPosterior post =
        bayesianize_network(net, 0.3, PosteriorFamily::LowRankIsotropic);
    const auto inputs = grid_inputs(4, 2, 12);

    PredictionConfig cfg;
    cfg.mc_samples = 6;
    cfg.seed = 42;
    const PredictiveSummary a = mc_predict(net, post, inputs, cfg, Task::Regression);
    const PredictiveSummary b = mc_predict(net, post, inputs, cfg, Task::Regression);
    CHECK(a.mean == b.mean);
    CHECK(a.std_dev == b.std_dev);

    cfg.seed = 43;
    const PredictiveSummary c = mc_predict(net, post, inputs, cfg, Task::Regression);
    CHECK(a.mean != c.mean);
}

TEST_CASE("doubling sigma_q exactly doubles the spread of a linear layer") {
    // Single linear adapted layer: the output is affine in the noise, and the
    // unit draws are shared across budgets, so deviations scale exactly.
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, 3, 2, 2, Activation::Identity}};
    Network net = init_network(specs, 8);
    const std::uint64_t sa = derive_stream(8, {99});
    for (std::size_t i = 0; i < net.layers[0].a.data.size(); ++i) {
        net.layers[0].a.data[i] = normal_at(sa, i);
    }
    const NetworkPosterior p1 = bayesianize_network(net, 0.2, PosteriorFamily::LowRankIsotropic);
    const NetworkPosterior p2 = posterior_with_sigma(p1, 0.4);
    const auto inputs = grid_inputs(4, 3, 13);

    PredictionConfig cfg;
    cfg.mc_samples = 50;
    const PredictiveSummary s1 = mc_predict(net, p1, inputs, cfg, Task::Regression);
    const PredictiveSummary s2 = mc_predict(net, p2, inputs, cfg, Task::Regression);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < 2; ++j) {
            CHECK(s2.std_dev[i][j] ==
                  doctest::Approx(2.0 * s1.std_dev[i][j]).epsilon(1e-12));
        }
    }
}

TEST_CASE("doubling sigma_q roughly doubles the spread through a nonlinearity") {
    const Network net = small_net(6);
    const NetworkPosterior p1 =
        bayesianize_network(net, 0.05, PosteriorFamily::LowRankIsotropic);
    const NetworkPosterior p2 = posterior_with_sigma(p1, 0.1);
    const auto inputs = grid_inputs(3, 2, 14);

    PredictionConfig cfg;
    cfg.mc_samples = 20000;
    const PredictiveSummary s1 = mc_predict(net, p1, inputs, cfg, Task::Regression);
    const PredictiveSummary s2 = mc_predict(net, p2, inputs, cfg, Task::Regression);
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            if (s1.std_dev[i][j] < 1e-12) continue;
            const double ratio = s2.std_dev[i][j] / s1.std_dev[i][j];
            // Small budgets keep the map near-linear; 5% covers the curvature
            // (the MC noise itself cancels under common random numbers).
            CHECK(std::fabs(ratio - 2.0) < 0.1);
        }
    }
}

TEST_CASE("classification summaries average the per-sample softmax") {
    const Network net = small_net(7);
    const NetworkPosterior post =
        bayesianize_network(net, 0.2, PosteriorFamily::LowRankIsotropic);
    const auto inputs = grid_inputs(4, 2, 15);

    PredictionConfig cfg;
    cfg.mc_samples = 9;
    cfg.keep_samples = true;
    const PredictiveSummary sum = mc_predict(net, post, inputs, cfg, Task::Classification);
    REQUIRE(sum.class_probs.size() == inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        double total = 0.0;
        for (double p : sum.class_probs[i]) total += p;
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

        // Manual average over the kept raw samples.
        for (std::size_t c = 0; c < 3; ++c) {
            std::vector<double> ps(9);
            for (std::size_t k = 0; k < 9; ++k) ps[k] = softmax(sum.samples[k][i])[c];
            CHECK(sum.class_probs[i][c] == doctest::Approx(pairwise_mean(ps)).epsilon(1e-12));
        }
    }
}

TEST_CASE("the last-layer fast path matches the naive restriction bit for bit") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const std::size_t out = 2 + seed % 3;
        const Network net = small_net(200 + seed, 2, 4 + seed % 5, out);
        const NetworkPosterior post =
            bayesianize_network(net, 0.1 + 0.05 * double(seed % 4),
                                seed % 2 ? PosteriorFamily::LowRankIsotropic
                                         : PosteriorFamily::FullRankIsotropic);
        const auto inputs = grid_inputs(3 + seed % 4, 2, 300 + seed);

        PredictionConfig cfg;
        cfg.mc_samples = 5;
        cfg.seed = seed;
        cfg.mode = PredictMode::LastLayerOnly;

        PredictStats naive_stats, fast_stats;
        const PredictiveSummary naive =
            mc_predict(net, post, inputs, cfg, Task::Regression, &naive_stats);
        const PredictiveSummary fast =
            last_layer_fast_predict(net, post, inputs, cfg, Task::Regression, &fast_stats);

        CHECK(naive.mean == fast.mean);
        CHECK(naive.std_dev == fast.std_dev);
        CHECK(naive_stats.prefix_passes ==
              (long long)(inputs.size()) * cfg.mc_samples);
        CHECK(fast_stats.prefix_passes == (long long)(inputs.size()));
    }
}

TEST_CASE("full-model and last-layer-only modes differ when early layers carry noise") {
    const Network net = small_net(31);
    const NetworkPosterior post =
        bayesianize_network(net, 0.4, PosteriorFamily::LowRankIsotropic);
    const auto inputs = grid_inputs(2, 2, 16);

    PredictionConfig cfg;
    cfg.mc_samples = 8;
    const PredictiveSummary full = mc_predict(net, post, inputs, cfg, Task::Regression);
    cfg.mode = PredictMode::LastLayerOnly;
    const PredictiveSummary last = mc_predict(net, post, inputs, cfg, Task::Regression);
    CHECK(full.mean != last.mean);
}

TEST_CASE("prediction_band wraps mean with +/- one std") {
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, 1, 8, 1, Activation::Tanh},
        LayerSpec{LayerKind::DenseAdapted, 8, 1, 1, Activation::Identity},
    };
    Network net = init_network(specs, 44);
    const std::uint64_t sa = derive_stream(44, {99});
    for (Layer& layer : net.layers) {
        for (std::size_t i = 0; i < layer.a.data.size(); ++i) {
            layer.a.data[i] = 0.5 * normal_at(sa, i);
        }
    }
    const NetworkPosterior post =
        bayesianize_network(net, 0.3, PosteriorFamily::FullRankIsotropic);
    const std::vector<double> xs = {-2.0, -1.0, 0.0, 1.0, 2.0};

    PredictionConfig cfg;
    cfg.mc_samples = 16;
    const std::vector<BandRow> band = prediction_band(net, post, xs, cfg);
    REQUIRE(band.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(band[i].x == xs[i]);
        CHECK(band[i].lo <= band[i].mean);
        CHECK(band[i].mean <= band[i].hi);
        CHECK(band[i].hi - band[i].mean == doctest::Approx(band[i].mean - band[i].lo));
    }

    // sigma_q = 0: the band collapses onto the deterministic curve up to the
    // machine-eps rounding of the sample mean (see the zero-sigma test above).
    const std::vector<BandRow> flat =
        prediction_band(net, posterior_with_sigma(post, 0.0), xs, cfg);
    for (const BandRow& row : flat) {
        const double tol = 1e-13 * (1.0 + std::abs(row.mean));
        CHECK(row.lo <= row.mean);
        CHECK(row.mean <= row.hi);
        CHECK(row.mean - row.lo <= tol);
        CHECK(row.hi - row.mean <= tol);
    }
}

TEST_CASE("bayesianize_network view is consistent and rejects adapter-free nets") {
    const Network net = small_net(50);
    const NetworkPosterior post =
        bayesianize_network(net, 0.25, PosteriorFamily::LowRankIsotropic);
    REQUIRE(post.layers.size() == net.layers.size());
    CHECK(post.sigma_q() == 0.25);
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        REQUIRE(post.layers[l].has_value());
        CHECK(post.layers[l]->sigma_q == 0.25);
        const DenseMatrix rebuilt =
            matmul(post.layers[l]->b_prime, post.layers[l]->m_mean);
        const DenseMatrix direct = matmul(net.layers[l].b, net.layers[l].a);
        CHECK(max_abs_diff(rebuilt, direct) < 1e-10 * (1.0 + max_abs(direct)));
    }

    const NetworkPosterior swapped = posterior_with_sigma(post, 0.75);
    CHECK(swapped.sigma_q() == 0.75);
    CHECK(swapped.layers[0]->d == post.layers[0]->d);

    const Network fixed_only = init_network(
        {LayerSpec{LayerKind::DenseFixed, 2, 2, 0, Activation::Identity}}, 1);
    CHECK_THROWS_AS((void)bayesianize_network(fixed_only, 0.1, PosteriorFamily::LowRankIsotropic),
                    ValidationError);
}

TEST_CASE("last_layer_fast_predict requires an adapted final layer") {
    const std::vector<LayerSpec> specs = {
        LayerSpec{LayerKind::DenseAdapted, 2, 4, 1, Activation::Tanh},
        LayerSpec{LayerKind::DenseFixed, 4, 2, 0, Activation::Identity},
    };
    const Network net = init_network(specs, 61);
    const NetworkPosterior post =
        bayesianize_network(net, 0.2, PosteriorFamily::LowRankIsotropic);
    PredictionConfig cfg;
    CHECK_THROWS_AS((void)last_layer_fast_predict(net, post, grid_inputs(2, 2, 17), cfg,
                                                  Task::Regression),
                    ValidationError);
}
