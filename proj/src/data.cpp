#include "tfb/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "tfb/errors.hpp"
#include "tfb/netcore.hpp"
#include "tfb/rng.hpp"

namespace tfb {

const char* task_name(Task t) {
    switch (t) {
        case Task::Regression: return "regression";
        case Task::Classification: return "classification";
    }
    throw ValidationError("task_name: unknown task");
}

Task task_from_name(const std::string& name) {
    if (name == "regression") return Task::Regression;
    if (name == "classification") return Task::Classification;
    throw ValidationError("task_from_name: unknown task '" + name + "'");
}

void Dataset::validate() const {
    if (!inputs.empty()) {
        const std::size_t width = inputs.front().size();
        for (const auto& x : inputs) {
            if (x.size() != width) throw ValidationError("Dataset: ragged input rows");
        }
    }
    if (targets.has_value() && labels.has_value()) {
        throw ValidationError("Dataset: both regression targets and class labels present");
    }
    if (task == Task::Regression && labels.has_value()) {
        throw ValidationError("Dataset: regression task with class labels");
    }
    if (task == Task::Classification && targets.has_value()) {
        throw ValidationError("Dataset: classification task with regression targets");
    }
    if (targets.has_value() && targets->size() != inputs.size()) {
        throw ValidationError("Dataset: target count does not match inputs");
    }
    if (labels.has_value()) {
        if (labels->size() != inputs.size()) {
            throw ValidationError("Dataset: label count does not match inputs");
        }
        if (class_count == 0) {
            throw ValidationError("Dataset: labels present but class_count is 0");
        }
        for (int y : *labels) {
            if (y < 0 || static_cast<std::size_t>(y) >= class_count) {
                throw ValidationError("Dataset: label " + std::to_string(y) +
                                      " outside [0, " + std::to_string(class_count) + ")");
            }
        }
    }
}

Dataset toy_cubic(std::uint64_t seed, std::size_t count) {
    Dataset ds;
    ds.task = Task::Regression;
    ds.inputs.reserve(count);
    ds.targets.emplace();
    ds.targets->reserve(count);

    const std::uint64_t x_stream = rng::derive_stream(seed, {0});
    const std::uint64_t eps_stream = rng::derive_stream(seed, {1});
    for (std::size_t i = 0; i < count; ++i) {
        const double x = -4.0 + 8.0 * rng::uniform01_at(x_stream, i);
        const double eps = rng::normal_at(eps_stream, i);
        ds.inputs.push_back({x});
        ds.targets->push_back(x * x * x + 9.0 * eps);
    }
    return ds;
}

Dataset toy_blobs(std::size_t class_count, std::size_t per_class, double separation,
                  std::uint64_t seed) {
    if (class_count < 2) throw ValidationError("toy_blobs: need at least 2 classes");
    if (per_class == 0) throw ValidationError("toy_blobs: per_class must be positive");
    if (separation < 0.0) throw ValidationError("toy_blobs: separation must be >= 0");

    Dataset ds;
    ds.task = Task::Classification;
    ds.class_count = class_count;
    ds.labels.emplace();

    for (std::size_t c = 0; c < class_count; ++c) {
        const double angle = 2.0 * M_PI * static_cast<double>(c) / static_cast<double>(class_count);
        const double cx = separation * std::cos(angle);
        const double cy = separation * std::sin(angle);
        const std::uint64_t stream = rng::derive_stream(seed, {c});
        for (std::size_t i = 0; i < per_class; ++i) {
            ds.inputs.push_back({cx + rng::normal_at(stream, 2 * i),
                                 cy + rng::normal_at(stream, 2 * i + 1)});
            ds.labels->push_back(static_cast<int>(c));
        }
    }
    return ds;
}

Dataset select_anchor(const Dataset& dataset, std::size_t size, std::uint64_t seed) {
    dataset.validate();
    if (size > dataset.size()) {
        throw ValidationError("select_anchor: requested " + std::to_string(size) +
                              " of " + std::to_string(dataset.size()) + " examples");
    }

    // Partial Fisher-Yates over the index vector; first `size` slots are the
    // sample, order preserved as drawn.
    std::vector<std::size_t> idx(dataset.size());
    std::iota(idx.begin(), idx.end(), 0);
    const std::uint64_t stream = rng::derive_stream(seed, {0x5e1ec7});
    for (std::size_t i = 0; i < size; ++i) {
        const std::size_t remaining = idx.size() - i;
        const std::size_t pick =
            i + static_cast<std::size_t>(rng::word_at(stream, i) % remaining);
        std::swap(idx[i], idx[pick]);
    }

    Dataset out;
    out.task = dataset.task;
    out.class_count = dataset.class_count;
    if (dataset.targets.has_value()) out.targets.emplace();
    if (dataset.labels.has_value()) out.labels.emplace();
    for (std::size_t i = 0; i < size; ++i) {
        out.inputs.push_back(dataset.inputs[idx[i]]);
        if (dataset.targets.has_value()) out.targets->push_back((*dataset.targets)[idx[i]]);
        if (dataset.labels.has_value()) out.labels->push_back((*dataset.labels)[idx[i]]);
    }
    return out;
}

Dataset pseudo_label(const Network& net, const Dataset& dataset) {
    dataset.validate();
    if (dataset.task != Task::Classification) {
        throw ValidationError("pseudo_label: only classification datasets can be pseudo-labeled");
    }
    net.validate();
    if (net.out_dim() < 2) {
        throw ValidationError("pseudo_label: network emits fewer than 2 logits");
    }

    Dataset out = dataset;
    out.class_count = net.out_dim();
    out.labels.emplace();
    out.labels->reserve(dataset.size());
    for (const auto& x : dataset.inputs) {
        const std::vector<double> logits = forward(net, x);
        std::size_t arg = 0;
        for (std::size_t k = 1; k < logits.size(); ++k) {
            if (logits[k] > logits[arg]) arg = k;  // ties keep the lowest index
        }
        out.labels->push_back(static_cast<int>(arg));
    }
    return out;
}

}  // namespace tfb
