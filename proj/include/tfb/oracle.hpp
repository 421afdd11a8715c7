#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "tfb/adapter.hpp"
#include "tfb/linalg.hpp"

namespace tfb {

/**
 * Brute-force oracles. Everything here is deliberately literal: explicit
 * Kronecker assembly, dense Cholesky, grid scans. The oracles exist to be
 * obviously correct, not fast, and the production code is tested against
 * them rather than the other way round.
 */

struct FullCovariance {
    std::vector<double> mu;  // vec(W0 + b_prime * m_mean), column-stacked
    DenseMatrix sigma;       // mn x mn
};

// Full r x n std matrix implied by a Bayesianized adapter under the low-rank
// family: omega[i][j] = sigma_q / d[i].
DenseMatrix implied_omega(const BayesianAdapter& bayes);

// Constant r x n std matrix (the parameterization-dependent comparison
// family).
DenseMatrix constant_omega(std::size_t r, std::size_t n, double sigma);

/**
 * Assembles the exact full-weight covariance induced by elementwise factor
 * noise with std matrix omega (r x n) on M:
 *   Sigma = [I_n (x) B'] diag(vec(omega)^2) [I_n (x) B']^T
 * with vec() column-stacking. Result is mn x mn; the Kronecker cap applies.
 */
DenseMatrix covariance_from_omega(const DenseMatrix& b_prime, const DenseMatrix& omega);

// Mean and covariance together, for sample-moment cross-checks.
FullCovariance full_posterior(const DenseMatrix& w0, const BayesianAdapter& bayes);

// The canonical rank-nr projector I_n (x) diag(I_r, 0_{m-r}), mn x mn.
DenseMatrix projection_matrix(std::size_t m, std::size_t n, std::size_t r);

/**
 * Expresses an mn x mn full-weight covariance in the basis adapted to the
 * column span of u (m x r, column-orthonormal): completes u to an
 * orthonormal T = [u | u_perp] and returns (I_n (x) T)^T Sigma (I_n (x) T).
 * In that basis the low-rank family's covariance is exactly
 * sigma_q^2 * projection_matrix(m, n, r).
 */
DenseMatrix rotate_to_adapted_basis(const DenseMatrix& sigma, const DenseMatrix& u);

// Extracts the nr x nr support block of a rotated covariance: coordinates
// {j*m + i : i < r} for every column j.
DenseMatrix restrict_to_support(const DenseMatrix& sigma_rotated, std::size_t m, std::size_t n,
                                std::size_t r);

/**
 * KL(N(mu_q, sigma_q_mat) || N(mu_p, sigma_p_mat)) by the general Gaussian
 * formula, Cholesky-based. Both covariances must be strictly positive
 * definite (restrict degenerate ones to their support first); a failed
 * factorization throws NumericError.
 */
double gaussian_kl_general(std::span<const double> mu_q, const DenseMatrix& sigma_q_mat,
                           std::span<const double> mu_p, const DenseMatrix& sigma_p_mat);

struct KlParams {
    double sigma_q = 0.0;
    double sigma_p = 1.0;
    std::size_t n = 1;
    std::size_t r = 1;
    double lambda = 1.0;  // used by sweeps, not by the KL value itself
};

/**
 * Closed-form KL between the low-rank posterior and the isotropic prior,
 * both restricted to the shared rank-nr support:
 *   (n*r / 2) * (log sigma_p^2 - 1 - log sigma_q^2 + sigma_q^2 / sigma_p^2).
 * sigma_q = 0 returns +infinity (the degenerate posterior); sigma_p must be
 * positive. Monotonically decreasing on sigma_q in (0, sigma_p).
 */
double kl_lowrank_closed_form(const KlParams& params);

struct SweepRow {
    double lambda = 0.0;
    double argmin_lagrangian = 0.0;   // sigma minimizing loss + lambda * KL
    double epsilon_tilde = 0.0;       // loss at that minimizer
    double argmax_constrained = 0.0;  // largest sigma with loss <= epsilon_tilde
};

/**
 * For each lambda, dense-scans sigma_grid for the minimizer of
 * loss(sigma) + lambda * KL(sigma) (ties keep the smallest sigma), sets
 * epsilon_tilde = loss at that minimizer, then scans again for the largest
 * sigma with loss(sigma) <= epsilon_tilde. When the regularized and
 * constrained solutions coincide (they do for monotone losses), the two
 * columns agree to within one grid step. lambda = 0 drops the KL term
 * entirely so the sigma = 0 grid point stays usable despite KL(0) = +inf.
 */
std::vector<SweepRow> vi_equivalence_sweep(const std::function<double(double)>& loss,
                                           std::span<const double> lambda_grid,
                                           const KlParams& base,
                                           std::span<const double> sigma_grid);

// One named check of the self-verification suite.
struct CheckResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

struct VerificationOptions {
    bool inject_fault = false;  // corrupt one omega entry; exactly one
                                // covariance-identity check must then fail
};

// The full self-verification battery (covariance identity sweep, projector
// properties, KL route agreement, regularized/constrained sweep).
std::vector<CheckResult> run_verification(const VerificationOptions& opts);

}  // namespace tfb
