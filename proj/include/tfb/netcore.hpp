#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "tfb/data.hpp"
#include "tfb/linalg.hpp"

namespace tfb {

enum class Activation { Identity, Tanh, ReLU };
enum class LayerKind { DenseFixed, DenseAdapted };
enum class LossKind { MSE, SoftmaxCrossEntropy };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);
const char* layer_kind_name(LayerKind k);
LayerKind layer_kind_from_name(const std::string& name);

struct LayerSpec {
    LayerKind kind = LayerKind::DenseAdapted;
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    std::size_t rank = 0;  // DenseAdapted only; 1 <= rank <= min(in, out)
    Activation activation = Activation::Identity;
};

/**
 * One dense layer, out_dim x in_dim weights. DenseFixed carries only the
 * frozen w0 and a trainable bias; DenseAdapted adds the trainable low-rank
 * pair (b, a) so the effective weight is w0 + b*a.
 */
struct Layer {
    LayerSpec spec;
    DenseMatrix w0;            // out x in, frozen
    std::vector<double> bias;  // out, trainable
    DenseMatrix b;             // out x rank (adapted only), trainable
    DenseMatrix a;             // rank x in (adapted only), trainable
};

struct Network {
    std::vector<Layer> layers;

    std::size_t in_dim() const { return layers.front().spec.in_dim; }
    std::size_t out_dim() const { return layers.back().spec.out_dim; }
    void validate() const;  // shape chain + spec/tensor consistency
};

/**
 * Seeded initialization: w0, bias and b entries drawn from N(0, 1/in_dim)
 * per layer, a = 0 so every adapter starts at delta-W = 0. Identical specs
 * and seed give a bitwise identical network.
 */
Network init_network(const std::vector<LayerSpec>& specs, std::uint64_t seed);

/**
 * Per-layer additive weight deltas for a stochastic forward pass; entries
 * without a value leave the layer deterministic. An adapted layer with delta
 * D computes z = w0*h + b*(a*h) + D*h + bias, so an all-zero plan reproduces
 * the deterministic forward bit for bit.
 */
using NoisePlan = std::vector<std::optional<DenseMatrix>>;

std::vector<double> forward(const Network& net, std::span<const double> x,
                            const NoisePlan* plan = nullptr);

// Post-activation outputs of every layer (index L-1 is the network output).
std::vector<std::vector<double>> forward_trace(const Network& net, std::span<const double> x,
                                               const NoisePlan* plan = nullptr);

// Activations entering the final layer. Needs at least two layers.
std::vector<double> embed(const Network& net, std::span<const double> x);

// Numerically shifted softmax over a logit vector.
std::vector<double> softmax(std::span<const double> logits);

struct Gradients {
    // Aligned with net.layers; fixed layers leave b/a empty.
    std::vector<DenseMatrix> b;
    std::vector<DenseMatrix> a;
    std::vector<std::vector<double>> bias;
};

/**
 * Full-batch loss and exact gradients for the trainable parameters (b, a,
 * bias). The l2 term (weight_decay/2 * sum of squared trainable parameters)
 * is part of the returned loss so finite differences of the loss check the
 * whole gradient. MSE averages the squared error over examples (summed over
 * output coordinates); SoftmaxCrossEntropy averages -log softmax(z)[y].
 */
std::pair<double, Gradients> loss_and_grads(const Network& net, const Dataset& batch,
                                            LossKind loss, double weight_decay);

struct TrainResult {
    Network net;
    std::vector<double> loss_curve;  // loss after each step
};

/**
 * Full-batch Adam (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).
 * Deterministic. Throws NumericError naming the diverging step index if
 * the loss stops being finite.
 */
TrainResult train_adam(Network net, const Dataset& batch, LossKind loss, std::size_t steps,
                       double learning_rate, double weight_decay);

struct CheckpointMeta {
    std::uint64_t train_seed = 0;
    std::int64_t steps = 0;
    double learning_rate = 0.0;
};

// Posterior info persisted next to the tensors after Bayesianization.
struct CheckpointPosterior {
    std::string family;                       // family_name() string
    double sigma_q = 0.0;
    std::vector<std::vector<double>> d;       // per adapted layer, [] for fixed
};

struct ModelCheckpoint {
    Task task = Task::Regression;
    Network net;
    CheckpointMeta meta;
    std::optional<CheckpointPosterior> posterior;
};

}  // namespace tfb
