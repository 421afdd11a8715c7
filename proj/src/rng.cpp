#include "tfb/rng.hpp"

#include <cmath>

#include "tfb/errors.hpp"

namespace tfb::rng {

std::uint64_t splitmix64(std::uint64_t x) {
    std::uint64_t z = x + 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts) {
    std::uint64_t key = splitmix64(seed);
    for (std::uint64_t p : parts) key = splitmix64(key ^ splitmix64(p));
    return key;
}

namespace {

// PCG RXS-M-XS output permutation, 64 bits in, 64 bits out.
std::uint64_t pcg_rxs_m_xs(std::uint64_t state) {
    const std::uint64_t word =
        ((state >> ((state >> 59u) + 5u)) ^ state) * 12605985483714917081ULL;
    return (word >> 43u) ^ word;
}

constexpr std::uint64_t kLcgMultiplier = 6364136223846793005ULL;

}  // namespace

std::uint64_t word_at(std::uint64_t stream, std::uint64_t counter) {
    return pcg_rxs_m_xs(stream + counter * kLcgMultiplier);
}

double uniform01_at(std::uint64_t stream, std::uint64_t counter) {
    // 53 fractional bits, shifted half a step off both endpoints.
    return (static_cast<double>(word_at(stream, counter) >> 11) + 0.5) * 0x1.0p-53;
}

double normal_at(std::uint64_t stream, std::uint64_t counter) {
    return inverse_normal_cdf(uniform01_at(stream, counter));
}

double inverse_normal_cdf(double p) {
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError("inverse_normal_cdf: p must lie in (0, 1)");
    }

    // Acklam's rational approximation, three branches.
    static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02,
                               -2.759285104469687e+02, 1.383577518672690e+02,
                               -3.066479806614716e+01, 2.506628277459239e+00};
    static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02,
                               -1.556989798598866e+02, 6.680131188771972e+01,
                               -1.328068155288572e+01};
    static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01,
                               -2.400758277161838e+00, -2.549732539343734e+00,
                               4.374664141464968e+00,  2.938163982698783e+00};
    static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01,
                               2.445134137142996e+00, 3.754408661907416e+00};
    const double plow = 0.02425;

    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // One Halley step against the exact CDF expressed through erfc.
    const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = e * std::sqrt(2.0 * M_PI) * std::exp(x * x / 2.0);
    x = x - u / (1.0 + x * u / 2.0);
    return x;
}

}  // namespace tfb::rng
