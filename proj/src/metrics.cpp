#include "tfb/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "tfb/errors.hpp"
#include "tfb/rng.hpp"
#include "tfb/util.hpp"

namespace tfb {

const char* metric_name(MetricKind k) {
    switch (k) {
        case MetricKind::NLL: return "nll";
        case MetricKind::ACC: return "acc";
        case MetricKind::ECE: return "ece";
        case MetricKind::MSE: return "mse";
        case MetricKind::EmbeddingNorm: return "embedding_norm";
    }
    throw ValidationError("metric_name: unknown metric");
}

MetricKind metric_from_name(const std::string& name) {
    if (name == "nll") return MetricKind::NLL;
    if (name == "acc") return MetricKind::ACC;
    if (name == "ece") return MetricKind::ECE;
    if (name == "mse") return MetricKind::MSE;
    if (name == "embedding_norm") return MetricKind::EmbeddingNorm;
    throw ValidationError("metric_from_name: unknown metric '" + name + "'");
}

bool metric_degrades_upward(MetricKind k) {
    return k != MetricKind::ACC;
}

double EceBin::mean_confidence() const {
    return population == 0 ? 0.0 : confidence_sum / static_cast<double>(population);
}

double EceBin::mean_accuracy() const {
    return population == 0 ? 0.0 : accuracy_sum / static_cast<double>(population);
}

double nll(std::span<const double> true_class_probs) {
    if (true_class_probs.empty()) throw ValidationError("nll: no probabilities");
    std::vector<double> logs(true_class_probs.size());
    for (std::size_t i = 0; i < true_class_probs.size(); ++i) {
        const double p = true_class_probs[i];
        if (!(p > 0.0) || p > 1.0) {
            throw NumericError("nll: probability " + std::to_string(p) +
                               " outside (0, 1] at index " + std::to_string(i));
        }
        logs[i] = -std::log(std::max(p, kProbFloor));
    }
    return pairwise_mean(logs);
}

MetricReport ece(std::span<const double> confidences, std::span<const int> correct, int bins) {
    if (confidences.size() != correct.size()) {
        throw ShapeError("ece: confidence and correctness lengths differ");
    }
    if (confidences.empty()) throw ValidationError("ece: no predictions");
    if (bins < 1) throw ValidationError("ece: bins must be >= 1");

    std::vector<EceBin> detail(static_cast<std::size_t>(bins));
    for (std::size_t i = 0; i < confidences.size(); ++i) {
        const double c = confidences[i];
        if (!(c >= 0.0 && c <= 1.0)) {
            throw NumericError("ece: confidence " + std::to_string(c) + " outside [0, 1]");
        }
        if (correct[i] != 0 && correct[i] != 1) {
            throw ValidationError("ece: correctness flags must be 0 or 1");
        }
        std::size_t idx = static_cast<std::size_t>(c * static_cast<double>(bins));
        if (idx >= detail.size()) idx = detail.size() - 1;  // confidence 1.0
        detail[idx].confidence_sum += c;
        detail[idx].accuracy_sum += static_cast<double>(correct[i]);
        detail[idx].population += 1;
    }

    const double n = static_cast<double>(confidences.size());
    double value = 0.0;
    for (const EceBin& bin : detail) {
        if (bin.population == 0) continue;
        value += (static_cast<double>(bin.population) / n) *
                 std::fabs(bin.mean_accuracy() - bin.mean_confidence());
    }

    MetricReport report;
    report.kind = MetricKind::ECE;
    report.value = value;
    report.bin_detail = std::move(detail);
    return report;
}

namespace {

void check_metric_task(MetricKind kind, const Dataset& dataset) {
    const bool classification = dataset.task == Task::Classification;
    switch (kind) {
        case MetricKind::NLL:
        case MetricKind::ACC:
        case MetricKind::ECE:
            if (!classification) {
                throw ValidationError(std::string("evaluate: ") + metric_name(kind) +
                                      " needs a classification dataset");
            }
            if (!dataset.labels.has_value()) {
                throw ValidationError("evaluate: dataset has no labels");
            }
            break;
        case MetricKind::MSE:
            if (classification) {
                throw ValidationError("evaluate: mse needs a regression dataset");
            }
            if (!dataset.targets.has_value()) {
                throw ValidationError("evaluate: dataset has no targets");
            }
            break;
        case MetricKind::EmbeddingNorm:
            break;  // either task, labels not needed
    }
}

// Classification metrics from per-example predictive distributions.
double metric_from_probs(MetricKind kind, const std::vector<std::vector<double>>& probs,
                         const std::vector<int>& labels) {
    const std::size_t n = probs.size();
    switch (kind) {
        case MetricKind::NLL: {
            std::vector<double> true_probs(n);
            for (std::size_t i = 0; i < n; ++i) {
                true_probs[i] = probs[i][static_cast<std::size_t>(labels[i])];
            }
            return nll(true_probs);
        }
        case MetricKind::ACC: {
            std::vector<double> hits(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t arg = 0;
                for (std::size_t k = 1; k < probs[i].size(); ++k) {
                    if (probs[i][k] > probs[i][arg]) arg = k;
                }
                hits[i] = arg == static_cast<std::size_t>(labels[i]) ? 1.0 : 0.0;
            }
            return pairwise_mean(hits);
        }
        case MetricKind::ECE: {
            std::vector<double> conf(n);
            std::vector<int> correct(n);
            for (std::size_t i = 0; i < n; ++i) {
                std::size_t arg = 0;
                for (std::size_t k = 1; k < probs[i].size(); ++k) {
                    if (probs[i][k] > probs[i][arg]) arg = k;
                }
                conf[i] = probs[i][arg];
                correct[i] = arg == static_cast<std::size_t>(labels[i]) ? 1 : 0;
            }
            return ece(conf, correct).value;
        }
        default:
            throw ValidationError("metric_from_probs: not a classification metric");
    }
}

double mse_from_outputs(const std::vector<std::vector<double>>& outputs,
                        const std::vector<double>& targets) {
    std::vector<double> sq(outputs.size());
    for (std::size_t i = 0; i < outputs.size(); ++i) {
        const double err = outputs[i][0] - targets[i];
        sq[i] = err * err;
    }
    return pairwise_mean(sq);
}

// Mean over the dataset of the embedding L2 norm, with the given noise plan
// (nullptr = deterministic). Parallel over examples, fixed-order reduction.
double embedding_norm_value(const Network& net, const Dataset& dataset, const NoisePlan* plan) {
    std::vector<double> norms(dataset.size());
    parallel_for(dataset.size(), [&](std::size_t i) {
        const auto trace = forward_trace(net, dataset.inputs[i], plan);
        const std::vector<double>& h = trace[trace.size() - 2];  // enters the final layer
        std::vector<double> sq(h.size());
        for (std::size_t j = 0; j < h.size(); ++j) sq[j] = h[j] * h[j];
        norms[i] = std::sqrt(pairwise_sum(sq));
    });
    return pairwise_mean(norms);
}

// ECE bin populations/means for the report's bin_detail field.
std::vector<EceBin> detail_from_probs(const std::vector<std::vector<double>>& probs,
                                      const std::vector<int>& labels) {
    const std::size_t n = probs.size();
    std::vector<double> conf(n);
    std::vector<int> correct(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t arg = 0;
        for (std::size_t k = 1; k < probs[i].size(); ++k) {
            if (probs[i][k] > probs[i][arg]) arg = k;
        }
        conf[i] = probs[i][arg];
        correct[i] = arg == static_cast<std::size_t>(labels[i]) ? 1 : 0;
    }
    return std::move(*ece(conf, correct).bin_detail);
}

}  // namespace

MetricReport evaluate(const Network& net, const NetworkPosterior* posterior,
                      const Dataset& dataset, MetricKind kind, int mc_samples,
                      std::uint64_t seed, McConvention convention) {
    net.validate();
    dataset.validate();
    if (dataset.size() == 0) throw ValidationError("evaluate: empty dataset");
    check_metric_task(kind, dataset);
    if (kind == MetricKind::EmbeddingNorm && net.layers.size() < 2) {
        throw ValidationError("evaluate: embedding_norm needs at least two layers");
    }
    if (kind == MetricKind::MSE && net.out_dim() != 1) {
        throw ValidationError("evaluate: mse expects a scalar output head");
    }
    if ((kind == MetricKind::NLL || kind == MetricKind::ACC || kind == MetricKind::ECE) &&
        net.out_dim() != dataset.class_count) {
        throw ValidationError("evaluate: network emits " + std::to_string(net.out_dim()) +
                              " logits for " + std::to_string(dataset.class_count) + " classes");
    }

    MetricReport report;
    report.kind = kind;
    report.sample_count = posterior == nullptr ? 0 : mc_samples;

    if (kind == MetricKind::EmbeddingNorm) {
        if (posterior == nullptr) {
            report.value = embedding_norm_value(net, dataset, nullptr);
            return report;
        }
        if (mc_samples < 1) throw ValidationError("evaluate: mc_samples must be >= 1");
        // Bayesian form: average the per-sample dataset-mean norms.
        std::vector<double> per_sample(static_cast<std::size_t>(mc_samples));
        for (std::size_t k = 0; k < per_sample.size(); ++k) {
            NoisePlan plan(net.layers.size());
            for (std::size_t l = 0; l < net.layers.size(); ++l) {
                if (!posterior->layers[l].has_value()) continue;
                const std::uint64_t stream = rng::derive_stream(seed, {l, k});
                plan[l] = noise_delta(*posterior->layers[l], posterior->family, stream);
            }
            per_sample[k] = embedding_norm_value(net, dataset, &plan);
        }
        report.value = pairwise_mean(per_sample);
        return report;
    }

    PredictionConfig cfg;
    cfg.mc_samples = posterior == nullptr ? 1 : mc_samples;
    cfg.seed = seed;
    cfg.mode = PredictMode::FullModel;
    cfg.keep_samples = posterior != nullptr && convention == McConvention::ExpectedMetric;

    PredictiveSummary summary;
    if (posterior == nullptr) {
        // Deterministic: single pass, no noise.
        std::vector<std::vector<double>> outputs(dataset.size());
        parallel_for(dataset.size(), [&](std::size_t i) {
            outputs[i] = forward(net, dataset.inputs[i]);
        });
        if (dataset.task == Task::Classification) {
            std::vector<std::vector<double>> probs(dataset.size());
            for (std::size_t i = 0; i < outputs.size(); ++i) probs[i] = softmax(outputs[i]);
            report.value = metric_from_probs(kind, probs, *dataset.labels);
        } else {
            report.value = mse_from_outputs(outputs, *dataset.targets);
        }
        if (kind == MetricKind::ECE) {
            // Re-run through ece() to surface the bin detail.
            std::vector<std::vector<double>> probs(dataset.size());
            for (std::size_t i = 0; i < outputs.size(); ++i) probs[i] = softmax(outputs[i]);
            report.bin_detail = detail_from_probs(probs, *dataset.labels);
        }
        return report;
    }

    summary = mc_predict(net, *posterior, dataset.inputs, cfg, dataset.task, nullptr);

    if (convention == McConvention::AveragedPredictive) {
        if (dataset.task == Task::Classification) {
            report.value = metric_from_probs(kind, summary.class_probs, *dataset.labels);
            if (kind == MetricKind::ECE) {
                report.bin_detail = detail_from_probs(summary.class_probs, *dataset.labels);
            }
        } else {
            report.value = mse_from_outputs(summary.mean, *dataset.targets);
        }
        return report;
    }

    // ExpectedMetric: metric per weight sample, then the MC mean.
    std::vector<double> per_sample(summary.samples.size());
    for (std::size_t k = 0; k < summary.samples.size(); ++k) {
        if (dataset.task == Task::Classification) {
            std::vector<std::vector<double>> probs(dataset.size());
            for (std::size_t i = 0; i < dataset.size(); ++i) {
                probs[i] = softmax(summary.samples[k][i]);
            }
            per_sample[k] = metric_from_probs(kind, probs, *dataset.labels);
        } else {
            per_sample[k] = mse_from_outputs(summary.samples[k], *dataset.targets);
        }
    }
    report.value = pairwise_mean(per_sample);
    return report;
}

}  // namespace tfb
