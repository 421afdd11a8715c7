#include "tfb/inference.hpp"

#include <cmath>

#include "tfb/errors.hpp"
#include "tfb/rng.hpp"
#include "tfb/util.hpp"

namespace tfb {

double NetworkPosterior::sigma_q() const {
    for (const auto& slot : layers) {
        if (slot.has_value()) return slot->sigma_q;
    }
    throw ValidationError("NetworkPosterior: no adapted layer");
}

NetworkPosterior bayesianize_network(const Network& net, double sigma_q,
                                     PosteriorFamily family) {
    net.validate();
    NetworkPosterior posterior;
    posterior.family = family;
    posterior.layers.resize(net.layers.size());
    bool any = false;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        if (layer.spec.kind != LayerKind::DenseAdapted) continue;
        LoraAdapter adapter{layer.w0, layer.b, layer.a};
        posterior.layers[l] = bayesianize(adapter, sigma_q);
        any = true;
    }
    if (!any) {
        throw ValidationError("bayesianize_network: network has no adapted layer");
    }
    return posterior;
}

NetworkPosterior posterior_with_sigma(const NetworkPosterior& posterior, double sigma_q) {
    NetworkPosterior out;
    out.family = posterior.family;
    out.layers.resize(posterior.layers.size());
    for (std::size_t l = 0; l < posterior.layers.size(); ++l) {
        if (posterior.layers[l].has_value()) {
            out.layers[l] = with_sigma(*posterior.layers[l], sigma_q);
        }
    }
    return out;
}

namespace {

std::size_t last_adapted_index(const Network& net) {
    for (std::size_t l = net.layers.size(); l-- > 0;) {
        if (net.layers[l].spec.kind == LayerKind::DenseAdapted) return l;
    }
    throw ValidationError("no adapted layer in network");
}

// Noise plan for sample k: every adapted layer in scope gets its delta from
// stream (seed, layer, k).
NoisePlan build_plan(const Network& net, const NetworkPosterior& posterior,
                     const PredictionConfig& cfg, std::size_t k) {
    NoisePlan plan(net.layers.size());
    const std::size_t last =
        cfg.mode == PredictMode::LastLayerOnly ? last_adapted_index(net) : 0;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        if (!posterior.layers[l].has_value()) continue;
        if (cfg.mode == PredictMode::LastLayerOnly && l != last) continue;
        const std::uint64_t stream = rng::derive_stream(cfg.seed, {l, k});
        plan[l] = noise_delta(*posterior.layers[l], posterior.family, stream);
    }
    return plan;
}

void check_predict_args(const Network& net, const NetworkPosterior& posterior,
                        const std::vector<std::vector<double>>& inputs,
                        const PredictionConfig& cfg) {
    net.validate();
    if (posterior.layers.size() != net.layers.size()) {
        throw ShapeError("mc_predict: posterior does not align with the network");
    }
    if (cfg.mc_samples < 1) {
        throw ValidationError("mc_predict: mc_samples must be >= 1");
    }
    for (const auto& x : inputs) {
        if (x.size() != net.in_dim()) throw ShapeError("mc_predict: input width mismatch");
    }
}

// Shared summarization: samples_out[k][i] = output vector of sample k on
// input i.
PredictiveSummary summarize(std::vector<std::vector<std::vector<double>>> samples_out,
                            const PredictionConfig& cfg, Task task, std::size_t input_count,
                            std::size_t out_dim) {
    const std::size_t n_samples = samples_out.size();
    PredictiveSummary summary;
    summary.mean.resize(input_count);
    summary.std_dev.resize(input_count);
    if (task == Task::Classification) summary.class_probs.resize(input_count);

    // For classification the per-sample object of interest is the softmax.
    std::vector<std::vector<std::vector<double>>> probs;
    if (task == Task::Classification) {
        probs.resize(n_samples);
        for (std::size_t k = 0; k < n_samples; ++k) {
            probs[k].resize(input_count);
            for (std::size_t i = 0; i < input_count; ++i) {
                probs[k][i] = softmax(samples_out[k][i]);
            }
        }
    }
    const auto& source = task == Task::Classification ? probs : samples_out;

    std::vector<double> column(n_samples);
    for (std::size_t i = 0; i < input_count; ++i) {
        summary.mean[i].resize(out_dim);
        summary.std_dev[i].resize(out_dim);
        for (std::size_t j = 0; j < out_dim; ++j) {
            for (std::size_t k = 0; k < n_samples; ++k) column[k] = source[k][i][j];
            summary.mean[i][j] = pairwise_mean(column);
            summary.std_dev[i][j] = population_std(column);
        }
        if (task == Task::Classification) summary.class_probs[i] = summary.mean[i];
    }

    if (cfg.keep_samples) summary.samples = std::move(samples_out);
    return summary;
}

}  // namespace

PredictiveSummary mc_predict(const Network& net, const NetworkPosterior& posterior,
                             const std::vector<std::vector<double>>& inputs,
                             const PredictionConfig& cfg, Task task, PredictStats* stats) {
    check_predict_args(net, posterior, inputs, cfg);
    const std::size_t n_samples = static_cast<std::size_t>(cfg.mc_samples);
    const std::size_t prefix_end =
        net.layers.size() > 1 ? net.layers.size() - 1 : 0;  // layers before the final one

    std::vector<std::vector<std::vector<double>>> samples_out(n_samples);
    for (auto& s : samples_out) s.resize(inputs.size());

    parallel_for(n_samples, [&](std::size_t k) {
        const NoisePlan plan = build_plan(net, posterior, cfg, k);
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            samples_out[k][i] = forward(net, inputs[i], &plan);
        }
    });
    if (stats != nullptr && prefix_end > 0) {
        stats->prefix_passes +=
            static_cast<long long>(n_samples) * static_cast<long long>(inputs.size());
    }

    return summarize(std::move(samples_out), cfg, task, inputs.size(), net.out_dim());
}

PredictiveSummary last_layer_fast_predict(const Network& net, const NetworkPosterior& posterior,
                                          const std::vector<std::vector<double>>& inputs,
                                          const PredictionConfig& cfg, Task task,
                                          PredictStats* stats) {
    check_predict_args(net, posterior, inputs, cfg);
    if (net.layers.size() < 2) {
        throw ValidationError("last_layer_fast_predict: needs at least two layers");
    }
    const std::size_t last = net.layers.size() - 1;
    if (net.layers[last].spec.kind != LayerKind::DenseAdapted ||
        !posterior.layers[last].has_value()) {
        throw ValidationError("last_layer_fast_predict: final layer must be adapted");
    }

    // One prefix pass per input, cached. embed() is exactly the prefix.
    std::vector<std::vector<double>> cached(inputs.size());
    parallel_for(inputs.size(), [&](std::size_t i) { cached[i] = embed(net, inputs[i]); });
    if (stats != nullptr) stats->prefix_passes += static_cast<long long>(inputs.size());

    const Layer& final_layer = net.layers[last];
    const std::size_t n_samples = static_cast<std::size_t>(cfg.mc_samples);
    std::vector<std::vector<std::vector<double>>> samples_out(n_samples);
    for (auto& s : samples_out) s.resize(inputs.size());

    // Single-layer view of the tail; forward() on it runs the exact same
    // per-layer arithmetic the naive path runs on the final layer.
    Network tail;
    tail.layers.push_back(final_layer);

    PredictionConfig plan_cfg = cfg;
    plan_cfg.mode = PredictMode::LastLayerOnly;
    parallel_for(n_samples, [&](std::size_t k) {
        const NoisePlan plan = build_plan(net, posterior, plan_cfg, k);
        NoisePlan final_only(1);
        final_only[0] = plan[last];
        for (std::size_t i = 0; i < inputs.size(); ++i) {
            samples_out[k][i] = forward(tail, cached[i], &final_only);
        }
    });

    return summarize(std::move(samples_out), cfg, task, inputs.size(), net.out_dim());
}

std::vector<BandRow> prediction_band(const Network& net, const NetworkPosterior& posterior,
                                     const std::vector<double>& x_grid,
                                     const PredictionConfig& cfg) {
    if (net.in_dim() != 1 || net.out_dim() != 1) {
        throw ValidationError("prediction_band: needs a scalar-in scalar-out network");
    }
    std::vector<std::vector<double>> inputs;
    inputs.reserve(x_grid.size());
    for (double x : x_grid) inputs.push_back({x});

    const PredictiveSummary summary =
        mc_predict(net, posterior, inputs, cfg, Task::Regression, nullptr);

    std::vector<BandRow> band(x_grid.size());
    for (std::size_t i = 0; i < x_grid.size(); ++i) {
        const double mu = summary.mean[i][0];
        const double sd = summary.std_dev[i][0];
        band[i] = BandRow{x_grid[i], mu, mu - sd, mu + sd};
    }
    return band;
}

}  // namespace tfb
