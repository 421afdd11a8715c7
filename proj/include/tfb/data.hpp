#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace tfb {

struct Network;  // netcore.hpp

enum class Task {
    Regression,
    Classification,
};

const char* task_name(Task t);
Task task_from_name(const std::string& name);

/**
 * A desk-scale dataset: row-vector inputs plus optional targets. Regression
 * targets are scalars per example; classification targets are class indices
 * in [0, class_count). A dataset with neither is "unlabeled" and only useful
 * after pseudo_label().
 */
struct Dataset {
    Task task = Task::Regression;
    std::vector<std::vector<double>> inputs;
    std::optional<std::vector<double>> targets;     // regression
    std::optional<std::vector<int>> labels;         // classification
    std::size_t class_count = 0;                    // classification only

    std::size_t size() const { return inputs.size(); }
    bool labeled() const { return targets.has_value() || labels.has_value(); }

    // Internal consistency (sizes, label ranges); throws ValidationError.
    void validate() const;
};

/**
 * The 1-D cubic toy set: 20 inputs uniform on [-4, 4], targets
 * y = x^3 + 9 * eps with eps ~ N(0, 1). Deterministic per seed.
 */
Dataset toy_cubic(std::uint64_t seed, std::size_t count = 20);

/**
 * 2-D Gaussian blobs: `class_count` unit-variance clusters of `per_class`
 * points, centers at separation * (cos 2*pi*c/C, sin 2*pi*c/C). separation 0
 * collapses every center onto the origin (legal, indistinguishable).
 */
Dataset toy_blobs(std::size_t class_count, std::size_t per_class, double separation,
                  std::uint64_t seed);

/**
 * Uniform subsample without replacement, deterministic per seed; preserves
 * whatever targets exist. Throws ValidationError if size exceeds the dataset.
 */
Dataset select_anchor(const Dataset& dataset, std::size_t size, std::uint64_t seed);

/**
 * Replaces classification targets with the network's own deterministic
 * argmax predictions (ties break to the lowest class index). Idempotent:
 * relabeling the output changes nothing. Regression input is an error.
 */
Dataset pseudo_label(const Network& net, const Dataset& dataset);

}  // namespace tfb
