#pragma once

#include <stdexcept>
#include <string>

namespace tfb {

// Dimension or layout mismatch between operands.
struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// B lost full column rank: smallest singular value at or below tolerance.
struct RankDeficiencyError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A brute-force assembly would exceed the configured size cap.
struct SizeCapError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Numeric contract violation: domain errors, divergence, non-finite values.
struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Bad user-facing input: malformed files, inconsistent flags, missing data.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace tfb
