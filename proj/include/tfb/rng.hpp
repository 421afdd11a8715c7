#pragma once

#include <cstdint>
#include <initializer_list>

namespace tfb::rng {

// Counter-based random numbers.
//
// Every random value in the toolkit is addressed, not drawn from mutable
// state: a stream key is derived from a user seed plus structural coordinates
// (layer index, sample index, ...), and the value at a given counter within
// that stream is a pure function of (key, counter). This is what makes noise
// draws reproducible bit-for-bit across thread counts and lets tolerance
// searches reuse common random numbers: the unit noise for (seed, layer,
// sample, entry) never depends on sigma_q.
//
// Generator: the PCG RXS-M-XS 64-bit output permutation applied to an affine
// counter (state = key + counter * LCG multiplier), with stream keys derived
// by chained SplitMix64 absorption.

std::uint64_t splitmix64(std::uint64_t x);

// Derives a stream key from a seed and structural coordinates.
std::uint64_t derive_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> parts);

// Raw 64-bit value at position `counter` of the stream.
std::uint64_t word_at(std::uint64_t stream, std::uint64_t counter);

// Uniform double in the open interval (0, 1).
double uniform01_at(std::uint64_t stream, std::uint64_t counter);

// Standard normal deviate via the inverse-CDF method.
double normal_at(std::uint64_t stream, std::uint64_t counter);

// Inverse of the standard normal CDF on (0, 1). Acklam's rational
// approximation followed by one Halley refinement step; relative error is at
// the double rounding floor over the full open interval.
double inverse_normal_cdf(double p);

}  // namespace tfb::rng
