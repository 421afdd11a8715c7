#pragma once

#include <cstdint>
#include <vector>

#include "tfb/linalg.hpp"

namespace tfb {

/**
 * Posterior families for a Bayesianized adapter.
 *
 * LowRankIsotropic is the production family: noise enters the regrouped
 * factor M with per-row standard deviation sigma_q / d_i, which makes the
 * induced full-weight covariance sigma_q^2 times a rank-n*r orthogonal
 * projector, independent of how the adapter was factorized.
 *
 * FullRankIsotropic perturbs every weight entry directly (the covariance is
 * sigma_q^2 * I over the whole weight). ConstantStd uses a flat
 * per-entry std on M, whose induced covariance drags the factor Gram matrix
 * along and is therefore parameterization dependent. Both exist as
 * comparison points, not defaults.
 */
enum class PosteriorFamily {
    LowRankIsotropic,
    FullRankIsotropic,
    ConstantStd,
};

const char* family_name(PosteriorFamily f);
PosteriorFamily family_from_name(const std::string& name);

/**
 * A frozen low-rank adapter: effective weight W0 + B*A with B (m x r),
 * A (r x n). Any scalar adapter scale is assumed to be folded into B before
 * construction. W0 is frozen and may be all zero for toy layers.
 */
struct LoraAdapter {
    DenseMatrix w0;  // m x n
    DenseMatrix b;   // m x r
    DenseMatrix a;   // r x n

    std::size_t m() const { return b.rows; }
    std::size_t r() const { return b.cols; }
    std::size_t n() const { return a.cols; }

    // Shape consistency; throws ShapeError.
    void validate() const;
};

/**
 * The Bayesianized form of an adapter. The thin SVD B = u diag(d) v^T
 * regroups the factors into b_prime = u diag(d) and m_mean = v^T A without
 * changing the product, and the posterior over the regrouped M factor is
 * N(m_mean, diag-row std sigma_q / d_i), i.e. row i of M carries std
 * sigma_q / d[i] on every entry.
 *
 * Storage is the point: d holds r scalars and sigma_q is one more, so the
 * full r x n std matrix is implied, never materialized.
 */
struct BayesianAdapter {
    DenseMatrix b_prime;    // m x r, columns orthogonal with norms d
    DenseMatrix m_mean;     // r x n
    std::vector<double> d;  // r singular values, descending
    double sigma_q = 0.0;

    std::size_t m() const { return b_prime.rows; }
    std::size_t r() const { return b_prime.cols; }
    std::size_t n() const { return m_mean.cols; }

    // Implied per-entry std of row i of M under the low-rank family.
    double row_std(std::size_t i) const { return sigma_q / d[i]; }
};

/**
 * SVD-regroup an adapter and attach the variance budget sigma_q.
 *
 * Throws ShapeError on inconsistent factors, RankDeficiencyError if B is not
 * full column rank, NumericError for sigma_q < 0 or non-finite inputs.
 * sigma_q = 0 is legal and degenerates to the deterministic adapter.
 */
BayesianAdapter bayesianize(const LoraAdapter& adapter, double sigma_q);

// Same posterior with a different variance budget; the SVD is not redone.
BayesianAdapter with_sigma(BayesianAdapter bayes, double sigma_q);

/**
 * Draws the noise matrix of one posterior sample.
 *
 * LowRankIsotropic / ConstantStd: an r x n matrix E added to M, entry (i, j)
 * drawn as std * unit_normal where std is row_std(i) (low-rank) or sigma_q
 * (constant). FullRankIsotropic: an m x n matrix G added to the full weight,
 * per-entry std sigma_q.
 *
 * The unit normal for entry (i, j) sits at counter i*cols + j of
 * `rng_stream`, so the draw for a fixed stream is a fixed unit sample merely
 * scaled by the std: tolerance searches at different sigma_q values share
 * common random numbers by construction.
 */
DenseMatrix sample_noise(const BayesianAdapter& bayes, PosteriorFamily family,
                         std::uint64_t rng_stream);

/**
 * The same draw expressed as an additive full-weight delta (m x n):
 * b_prime * E for the factor families, G itself for the full-rank family.
 * This is the form the stochastic forward pass consumes.
 */
DenseMatrix noise_delta(const BayesianAdapter& bayes, PosteriorFamily family,
                        std::uint64_t rng_stream);

/**
 * Materializes one weight sample: W0 + b_prime * (m_mean + E) for the factor
 * families, W0 + b_prime * m_mean + G for the full-rank family. With
 * sigma_q = 0 the result equals W0 + b_prime * m_mean exactly.
 */
DenseMatrix realize_weight(const DenseMatrix& w0, const BayesianAdapter& bayes,
                           PosteriorFamily family, std::uint64_t rng_stream);

}  // namespace tfb
