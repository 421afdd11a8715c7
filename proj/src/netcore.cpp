#include "tfb/netcore.hpp"

#include <algorithm>
#include <cmath>

#include "tfb/errors.hpp"
#include "tfb/rng.hpp"
#include "tfb/util.hpp"

namespace tfb {

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Tanh: return "tanh";
        case Activation::ReLU: return "relu";
    }
    throw ValidationError("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "tanh") return Activation::Tanh;
    if (name == "relu") return Activation::ReLU;
    throw ValidationError("activation_from_name: unknown activation '" + name + "'");
}

const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::DenseFixed: return "dense_fixed";
        case LayerKind::DenseAdapted: return "dense_adapted";
    }
    throw ValidationError("layer_kind_name: unknown layer kind");
}

LayerKind layer_kind_from_name(const std::string& name) {
    if (name == "dense_fixed") return LayerKind::DenseFixed;
    if (name == "dense_adapted") return LayerKind::DenseAdapted;
    throw ValidationError("layer_kind_from_name: unknown layer kind '" + name + "'");
}

void Network::validate() const {
    if (layers.empty()) throw ShapeError("Network: no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const Layer& layer = layers[l];
        const LayerSpec& spec = layer.spec;
        const std::string where = "Network layer " + std::to_string(l);
        if (spec.in_dim == 0 || spec.out_dim == 0) throw ShapeError(where + ": zero dimension");
        if (layer.w0.rows != spec.out_dim || layer.w0.cols != spec.in_dim) {
            throw ShapeError(where + ": w0 shape mismatch");
        }
        if (layer.bias.size() != spec.out_dim) throw ShapeError(where + ": bias size mismatch");
        if (spec.kind == LayerKind::DenseAdapted) {
            if (spec.rank == 0 || spec.rank > std::min(spec.in_dim, spec.out_dim)) {
                throw ShapeError(where + ": rank must be in [1, min(in, out)]");
            }
            if (layer.b.rows != spec.out_dim || layer.b.cols != spec.rank ||
                layer.a.rows != spec.rank || layer.a.cols != spec.in_dim) {
                throw ShapeError(where + ": adapter factor shape mismatch");
            }
        }
        if (l + 1 < layers.size() && layers[l + 1].spec.in_dim != spec.out_dim) {
            throw ShapeError(where + ": out_dim does not feed layer " + std::to_string(l + 1));
        }
    }
}

Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed) {
    if (specs.empty()) throw ShapeError("init_network: no layer specs");
    Network net;
    net.layers.reserve(specs.size());
    for (std::size_t l = 0; l < specs.size(); ++l) {
        const LayerSpec& spec = specs[l];
        Layer layer;
        layer.spec = spec;
        const double std_in = 1.0 / std::sqrt(static_cast<double>(spec.in_dim));

        layer.w0 = DenseMatrix(spec.out_dim, spec.in_dim);
        const std::uint64_t w0_stream = rng::derive_stream(seed, {l, 0});
        for (std::size_t i = 0; i < layer.w0.data.size(); ++i) {
            layer.w0.data[i] = std_in * rng::normal_at(w0_stream, i);
        }

        layer.bias.assign(spec.out_dim, 0.0);
        const std::uint64_t bias_stream = rng::derive_stream(seed, {l, 1});
        for (std::size_t i = 0; i < layer.bias.size(); ++i) {
            layer.bias[i] = std_in * rng::normal_at(bias_stream, i);
        }

        if (spec.kind == LayerKind::DenseAdapted) {
            layer.b = DenseMatrix(spec.out_dim, spec.rank);
            const std::uint64_t b_stream = rng::derive_stream(seed, {l, 2});
            for (std::size_t i = 0; i < layer.b.data.size(); ++i) {
                layer.b.data[i] = std_in * rng::normal_at(b_stream, i);
            }
            // a starts at zero: the adapter contributes nothing until trained.
            layer.a = DenseMatrix(spec.rank, spec.in_dim);
        }
        net.layers.push_back(std::move(layer));
    }
    net.validate();
    return net;
}

namespace {

double apply_activation(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return z;
        case Activation::Tanh: return std::tanh(z);
        case Activation::ReLU: return z > 0.0 ? z : 0.0;
    }
    return z;
}

double activation_derivative(Activation act, double z) {
    switch (act) {
        case Activation::Identity: return 1.0;
        case Activation::Tanh: {
            const double t = std::tanh(z);
            return 1.0 - t * t;
        }
        case Activation::ReLU: return z > 0.0 ? 1.0 : 0.0;
    }
    return 1.0;
}

// z = w0*h + b*(a*h) [+ D*h] + bias for one layer.
std::vector<double> layer_preactivation(const Layer& layer, std::span<const double> h,
                                        const DenseMatrix* delta) {
    std::vector<double> z = matvec(layer.w0, h);
    if (layer.spec.kind == LayerKind::DenseAdapted) {
        const std::vector<double> ah = matvec(layer.a, h);
        const std::vector<double> bah = matvec(layer.b, ah);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += bah[i];
    }
    if (delta != nullptr) {
        const std::vector<double> dh = matvec(*delta, h);
        for (std::size_t i = 0; i < z.size(); ++i) z[i] += dh[i];
    }
    for (std::size_t i = 0; i < z.size(); ++i) z[i] += layer.bias[i];
    return z;
}

void check_plan(const Network& net, const NoisePlan* plan) {
    if (plan == nullptr) return;
    if (plan->size() != net.layers.size()) {
        throw ShapeError("forward: noise plan has " + std::to_string(plan->size()) +
                         " entries for " + std::to_string(net.layers.size()) + " layers");
    }
    for (std::size_t l = 0; l < plan->size(); ++l) {
        const auto& d = (*plan)[l];
        if (!d.has_value()) continue;
        const LayerSpec& spec = net.layers[l].spec;
        if (d->rows != spec.out_dim || d->cols != spec.in_dim) {
            throw ShapeError("forward: noise delta for layer " + std::to_string(l) +
                             " has wrong shape");
        }
    }
}

}  // namespace

std::vector<std::vector<double>> forward_trace(const Network& net, std::span<const double> x,
                                               const NoisePlan* plan) {
    if (x.size() != net.in_dim()) {
        throw ShapeError("forward: input length " + std::to_string(x.size()) +
                         ", network expects " + std::to_string(net.in_dim()));
    }
    check_plan(net, plan);

    std::vector<std::vector<double>> trace;
    trace.reserve(net.layers.size());
    std::vector<double> h(x.begin(), x.end());
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        const DenseMatrix* delta =
            (plan != nullptr && (*plan)[l].has_value()) ? &(*plan)[l].value() : nullptr;
        std::vector<double> z = layer_preactivation(layer, h, delta);
        for (double& v : z) v = apply_activation(layer.spec.activation, v);
        trace.push_back(z);
        h = trace.back();
    }
    return trace;
}

std::vector<double> forward(const Network& net, std::span<const double> x,
                            const NoisePlan* plan) {
    return forward_trace(net, x, plan).back();
}

std::vector<double> embed(const Network& net, std::span<const double> x) {
    if (net.layers.size() < 2) {
        throw ShapeError("embed: needs at least two layers");
    }
    std::vector<double> h(x.begin(), x.end());
    if (x.size() != net.in_dim()) {
        throw ShapeError("embed: input length mismatch");
    }
    for (std::size_t l = 0; l + 1 < net.layers.size(); ++l) {
        const Layer& layer = net.layers[l];
        std::vector<double> z = layer_preactivation(layer, h, nullptr);
        for (double& v : z) v = apply_activation(layer.spec.activation, v);
        h = std::move(z);
    }
    return h;
}

namespace {

void check_batch(const Network& net, const Dataset& batch, LossKind loss) {
    batch.validate();
    if (batch.size() == 0) throw ValidationError("loss_and_grads: empty batch");
    if (loss == LossKind::MSE) {
        if (!batch.targets.has_value()) {
            throw ValidationError("loss_and_grads: MSE needs regression targets");
        }
        if (net.out_dim() != 1) {
            throw ShapeError("loss_and_grads: scalar regression expects out_dim 1, got " +
                             std::to_string(net.out_dim()));
        }
    } else {
        if (!batch.labels.has_value()) {
            throw ValidationError("loss_and_grads: cross-entropy needs class labels");
        }
        if (batch.class_count != net.out_dim()) {
            throw ShapeError("loss_and_grads: network emits " + std::to_string(net.out_dim()) +
                             " logits for " + std::to_string(batch.class_count) + " classes");
        }
    }
    for (const auto& x : batch.inputs) {
        if (x.size() != net.in_dim()) {
            throw ShapeError("loss_and_grads: input width mismatch");
        }
    }
}

}  // namespace

std::vector<double> softmax(std::span<const double> logits) {
    double zmax = logits[0];
    for (double z : logits) zmax = std::max(zmax, z);
    std::vector<double> p(logits.size());
    double total = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - zmax);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

std::pair<double, Gradients> loss_and_grads(const Network& net, const Dataset& batch,
                                            LossKind loss, double weight_decay) {
    net.validate();
    check_batch(net, batch, loss);
    const std::size_t count = batch.size();
    const std::size_t depth = net.layers.size();

    Gradients grads;
    grads.b.resize(depth);
    grads.a.resize(depth);
    grads.bias.resize(depth);
    for (std::size_t l = 0; l < depth; ++l) {
        const Layer& layer = net.layers[l];
        grads.bias[l].assign(layer.spec.out_dim, 0.0);
        if (layer.spec.kind == LayerKind::DenseAdapted) {
            grads.b[l] = DenseMatrix(layer.spec.out_dim, layer.spec.rank);
            grads.a[l] = DenseMatrix(layer.spec.rank, layer.spec.in_dim);
        }
    }

    std::vector<double> per_example_loss(count, 0.0);

    for (std::size_t ex = 0; ex < count; ++ex) {
        // Forward, keeping pre-activations and inputs per layer.
        std::vector<std::vector<double>> inputs_by_layer(depth);
        std::vector<std::vector<double>> preact_by_layer(depth);
        std::vector<double> h = batch.inputs[ex];
        for (std::size_t l = 0; l < depth; ++l) {
            inputs_by_layer[l] = h;
            std::vector<double> z = layer_preactivation(net.layers[l], h, nullptr);
            preact_by_layer[l] = z;
            for (double& v : z) v = apply_activation(net.layers[l].spec.activation, v);
            h = std::move(z);
        }

        // Loss gradient w.r.t. the network output.
        std::vector<double> dout(h.size(), 0.0);
        if (loss == LossKind::MSE) {
            const double err = h[0] - (*batch.targets)[ex];
            per_example_loss[ex] = err * err;
            dout[0] = 2.0 * err / static_cast<double>(count);
        } else {
            const int y = (*batch.labels)[ex];
            const std::vector<double> p = softmax(h);
            per_example_loss[ex] = -std::log(std::max(p[static_cast<std::size_t>(y)], 1e-300));
            for (std::size_t k = 0; k < p.size(); ++k) {
                dout[k] = (p[k] - (static_cast<int>(k) == y ? 1.0 : 0.0)) /
                          static_cast<double>(count);
            }
        }

        // Backward.
        std::vector<double> grad_h = std::move(dout);
        for (std::size_t li = depth; li-- > 0;) {
            const Layer& layer = net.layers[li];
            std::vector<double> grad_z(grad_h.size());
            for (std::size_t i = 0; i < grad_z.size(); ++i) {
                grad_z[i] = grad_h[i] *
                            activation_derivative(layer.spec.activation, preact_by_layer[li][i]);
            }

            const std::vector<double>& hin = inputs_by_layer[li];
            for (std::size_t i = 0; i < grad_z.size(); ++i) grads.bias[li][i] += grad_z[i];

            if (layer.spec.kind == LayerKind::DenseAdapted) {
                // d/db = grad_z * (a*h)^T ; d/da = (b^T grad_z) * h^T
                const std::vector<double> ah = matvec(layer.a, hin);
                for (std::size_t i = 0; i < layer.b.rows; ++i) {
                    for (std::size_t k = 0; k < layer.b.cols; ++k) {
                        grads.b[li].at(i, k) += grad_z[i] * ah[k];
                    }
                }
                std::vector<double> bt_gz(layer.b.cols, 0.0);
                for (std::size_t i = 0; i < layer.b.rows; ++i) {
                    for (std::size_t k = 0; k < layer.b.cols; ++k) {
                        bt_gz[k] += layer.b.at(i, k) * grad_z[i];
                    }
                }
                for (std::size_t k = 0; k < layer.a.rows; ++k) {
                    for (std::size_t j = 0; j < layer.a.cols; ++j) {
                        grads.a[li].at(k, j) += bt_gz[k] * hin[j];
                    }
                }
            }

            if (li > 0) {
                // grad_h = (w0 + b*a)^T grad_z
                std::vector<double> next(layer.spec.in_dim, 0.0);
                for (std::size_t i = 0; i < layer.w0.rows; ++i) {
                    const double gz = grad_z[i];
                    if (gz == 0.0) continue;
                    for (std::size_t j = 0; j < layer.w0.cols; ++j) {
                        next[j] += layer.w0.at(i, j) * gz;
                    }
                }
                if (layer.spec.kind == LayerKind::DenseAdapted) {
                    std::vector<double> bt_gz(layer.b.cols, 0.0);
                    for (std::size_t i = 0; i < layer.b.rows; ++i) {
                        for (std::size_t k = 0; k < layer.b.cols; ++k) {
                            bt_gz[k] += layer.b.at(i, k) * grad_z[i];
                        }
                    }
                    for (std::size_t k = 0; k < layer.a.rows; ++k) {
                        for (std::size_t j = 0; j < layer.a.cols; ++j) {
                            next[j] += layer.a.at(k, j) * bt_gz[k];
                        }
                    }
                }
                grad_h = std::move(next);
            }
        }
    }

    double total = pairwise_mean(per_example_loss);

    // l2 on trainable parameters only: loss += wd/2 * sum(theta^2),
    // grad += wd * theta.
    if (weight_decay != 0.0) {
        double sq = 0.0;
        for (std::size_t l = 0; l < depth; ++l) {
            const Layer& layer = net.layers[l];
            for (double v : layer.bias) sq += v * v;
            if (layer.spec.kind == LayerKind::DenseAdapted) {
                for (double v : layer.b.data) sq += v * v;
                for (double v : layer.a.data) sq += v * v;
            }
            for (std::size_t i = 0; i < layer.bias.size(); ++i) {
                grads.bias[l][i] += weight_decay * layer.bias[i];
            }
            if (layer.spec.kind == LayerKind::DenseAdapted) {
                for (std::size_t i = 0; i < layer.b.data.size(); ++i) {
                    grads.b[l].data[i] += weight_decay * layer.b.data[i];
                }
                for (std::size_t i = 0; i < layer.a.data.size(); ++i) {
                    grads.a[l].data[i] += weight_decay * layer.a.data[i];
                }
            }
        }
        total += 0.5 * weight_decay * sq;
    }

    return {total, std::move(grads)};
}

namespace {

struct AdamSlot {
    std::vector<double> m;
    std::vector<double> v;
};

void adam_update(std::vector<double>& param, const std::vector<double>& grad, AdamSlot& slot,
                 double lr, std::size_t step) {
    constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    if (slot.m.empty()) {
        slot.m.assign(param.size(), 0.0);
        slot.v.assign(param.size(), 0.0);
    }
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    for (std::size_t i = 0; i < param.size(); ++i) {
        slot.m[i] = b1 * slot.m[i] + (1.0 - b1) * grad[i];
        slot.v[i] = b2 * slot.v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = slot.m[i] / c1;
        const double vhat = slot.v[i] / c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace

TrainResult train_adam(Network net, const Dataset& batch, LossKind loss, std::size_t steps,
                       double learning_rate, double weight_decay) {
    net.validate();
    const std::size_t depth = net.layers.size();
    std::vector<AdamSlot> slot_b(depth), slot_a(depth), slot_bias(depth);

    TrainResult result;
    result.loss_curve.reserve(steps);

    for (std::size_t step = 1; step <= steps; ++step) {
        auto [value, grads] = loss_and_grads(net, batch, loss, weight_decay);
        if (!std::isfinite(value)) {
            throw NumericError("train_adam: loss diverged at step " + std::to_string(step));
        }
        for (std::size_t l = 0; l < depth; ++l) {
            Layer& layer = net.layers[l];
            adam_update(layer.bias, grads.bias[l], slot_bias[l], learning_rate, step);
            if (layer.spec.kind == LayerKind::DenseAdapted) {
                adam_update(layer.b.data, grads.b[l].data, slot_b[l], learning_rate, step);
                adam_update(layer.a.data, grads.a[l].data, slot_a[l], learning_rate, step);
            }
        }
        result.loss_curve.push_back(value);
    }

    result.net = std::move(net);
    return result;
}

}  // namespace tfb
