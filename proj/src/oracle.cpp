#include "tfb/oracle.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <sstream>

#include "tfb/errors.hpp"
#include "tfb/rng.hpp"

namespace tfb {

DenseMatrix implied_omega(const BayesianAdapter& bayes) {
    DenseMatrix omega(bayes.r(), bayes.n());
    for (std::size_t i = 0; i < omega.rows; ++i) {
        const double std_i = bayes.row_std(i);
        for (std::size_t j = 0; j < omega.cols; ++j) omega.at(i, j) = std_i;
    }
    return omega;
}

DenseMatrix constant_omega(std::size_t r, std::size_t n, double sigma) {
    if (!(sigma >= 0.0)) throw NumericError("constant_omega: sigma must be >= 0");
    return DenseMatrix(r, n, sigma);
}

DenseMatrix covariance_from_omega(const DenseMatrix& b_prime, const DenseMatrix& omega) {
    if (b_prime.cols != omega.rows) {
        throw ShapeError("covariance_from_omega: B' has rank " + std::to_string(b_prime.cols) +
                         " but omega has " + std::to_string(omega.rows) + " rows");
    }
    const std::size_t n = omega.cols;

    const DenseMatrix lift = kron(DenseMatrix::identity(n), b_prime);  // mn x rn

    // diag(vec(omega)^2)
    const std::vector<double> om = vec_colmajor(omega);
    DenseMatrix diag(om.size(), om.size());
    for (std::size_t i = 0; i < om.size(); ++i) diag.at(i, i) = om[i] * om[i];

    return matmul(matmul(lift, diag), transpose(lift));
}

FullCovariance full_posterior(const DenseMatrix& w0, const BayesianAdapter& bayes) {
    FullCovariance out;
    out.mu = vec_colmajor(add(w0, matmul(bayes.b_prime, bayes.m_mean)));
    out.sigma = covariance_from_omega(bayes.b_prime, implied_omega(bayes));
    return out;
}

DenseMatrix projection_matrix(std::size_t m, std::size_t n, std::size_t r) {
    if (r > m) throw ShapeError("projection_matrix: r > m");
    DenseMatrix block(m, m);
    for (std::size_t i = 0; i < r; ++i) block.at(i, i) = 1.0;
    return kron(DenseMatrix::identity(n), block);
}

DenseMatrix rotate_to_adapted_basis(const DenseMatrix& sigma, const DenseMatrix& u) {
    const std::size_t m = u.rows;
    if (sigma.rows != sigma.cols || sigma.rows % m != 0) {
        throw ShapeError("rotate_to_adapted_basis: covariance is not a multiple of m");
    }
    const std::size_t n = sigma.rows / m;
    const DenseMatrix t = complete_orthonormal_basis(u);
    const DenseMatrix q = kron(DenseMatrix::identity(n), t);
    return matmul(matmul(transpose(q), sigma), q);
}

DenseMatrix restrict_to_support(const DenseMatrix& sigma_rotated, std::size_t m, std::size_t n,
                                std::size_t r) {
    if (sigma_rotated.rows != m * n || sigma_rotated.cols != m * n) {
        throw ShapeError("restrict_to_support: expected an mn x mn matrix");
    }
    std::vector<std::size_t> keep;
    keep.reserve(n * r);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t i = 0; i < r; ++i) keep.push_back(j * m + i);
    }
    DenseMatrix out(keep.size(), keep.size());
    for (std::size_t a = 0; a < keep.size(); ++a) {
        for (std::size_t b = 0; b < keep.size(); ++b) {
            out.at(a, b) = sigma_rotated.at(keep[a], keep[b]);
        }
    }
    return out;
}

namespace {

// Lower Cholesky factor; throws NumericError if the matrix is not strictly
// positive definite.
DenseMatrix cholesky(const DenseMatrix& a, const char* what) {
    if (a.rows != a.cols) throw ShapeError(std::string(what) + ": matrix must be square");
    const std::size_t n = a.rows;
    DenseMatrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a.at(i, j);
            for (std::size_t k = 0; k < j; ++k) acc -= l.at(i, k) * l.at(j, k);
            if (i == j) {
                if (!(acc > 0.0)) {
                    throw NumericError(std::string(what) +
                                       ": covariance is singular or indefinite (pivot " +
                                       std::to_string(acc) + ")");
                }
                l.at(i, j) = std::sqrt(acc);
            } else {
                l.at(i, j) = acc / l.at(j, j);
            }
        }
    }
    return l;
}

// Solves L y = b in place (forward substitution).
std::vector<double> forward_solve(const DenseMatrix& l, std::vector<double> b) {
    for (std::size_t i = 0; i < b.size(); ++i) {
        double acc = b[i];
        for (std::size_t k = 0; k < i; ++k) acc -= l.at(i, k) * b[k];
        b[i] = acc / l.at(i, i);
    }
    return b;
}

double log_det_from_cholesky(const DenseMatrix& l) {
    double acc = 0.0;
    for (std::size_t i = 0; i < l.rows; ++i) acc += std::log(l.at(i, i));
    return 2.0 * acc;
}

}  // namespace

double gaussian_kl_general(std::span<const double> mu_q, const DenseMatrix& sigma_q_mat,
                           std::span<const double> mu_p, const DenseMatrix& sigma_p_mat) {
    const std::size_t dim = mu_q.size();
    if (mu_p.size() != dim || sigma_q_mat.rows != dim || sigma_q_mat.cols != dim ||
        sigma_p_mat.rows != dim || sigma_p_mat.cols != dim) {
        throw ShapeError("gaussian_kl_general: dimension mismatch");
    }
    if (dim == 0) throw ShapeError("gaussian_kl_general: empty distribution");

    const DenseMatrix lq = cholesky(sigma_q_mat, "gaussian_kl_general (posterior)");
    const DenseMatrix lp = cholesky(sigma_p_mat, "gaussian_kl_general (prior)");

    // tr(Sigma_p^{-1} Sigma_q) = sum of squares of L_p^{-1} L_q.
    double trace = 0.0;
    for (std::size_t col = 0; col < dim; ++col) {
        std::vector<double> v(dim);
        for (std::size_t i = 0; i < dim; ++i) v[i] = lq.at(i, col);
        const std::vector<double> w = forward_solve(lp, std::move(v));
        for (double x : w) trace += x * x;
    }

    // Mahalanobis term (mu_q - mu_p)^T Sigma_p^{-1} (mu_q - mu_p).
    std::vector<double> diff(dim);
    for (std::size_t i = 0; i < dim; ++i) diff[i] = mu_q[i] - mu_p[i];
    const std::vector<double> y = forward_solve(lp, std::move(diff));
    double maha = 0.0;
    for (double x : y) maha += x * x;

    const double log_det_q = log_det_from_cholesky(lq);
    const double log_det_p = log_det_from_cholesky(lp);

    return 0.5 * (log_det_p - log_det_q - static_cast<double>(dim) + trace + maha);
}

double kl_lowrank_closed_form(const KlParams& params) {
    if (!(params.sigma_p > 0.0)) {
        throw NumericError("kl_lowrank_closed_form: sigma_p must be positive");
    }
    if (!(params.sigma_q >= 0.0)) {
        throw NumericError("kl_lowrank_closed_form: sigma_q must be >= 0");
    }
    if (params.n == 0 || params.r == 0) {
        throw ShapeError("kl_lowrank_closed_form: n and r must be positive");
    }
    if (params.sigma_q == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    const double sq2 = params.sigma_q * params.sigma_q;
    const double sp2 = params.sigma_p * params.sigma_p;
    const double nr = static_cast<double>(params.n) * static_cast<double>(params.r);
    return 0.5 * nr * (std::log(sp2) - 1.0 - std::log(sq2) + sq2 / sp2);
}

std::vector<SweepRow> vi_equivalence_sweep(const std::function<double(double)>& loss,
                                           std::span<const double> lambda_grid,
                                           const KlParams& base,
                                           std::span<const double> sigma_grid) {
    if (sigma_grid.size() < 2) {
        throw ValidationError("vi_equivalence_sweep: sigma_grid needs at least two points");
    }
    for (std::size_t i = 1; i < sigma_grid.size(); ++i) {
        if (!(sigma_grid[i] > sigma_grid[i - 1])) {
            throw ValidationError("vi_equivalence_sweep: sigma_grid must be strictly ascending");
        }
    }
    if (!(sigma_grid.front() >= 0.0)) {
        throw ValidationError("vi_equivalence_sweep: sigma_grid must be non-negative");
    }

    std::vector<double> losses(sigma_grid.size());
    std::vector<double> kls(sigma_grid.size());
    for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
        losses[i] = loss(sigma_grid[i]);
        KlParams p = base;
        p.sigma_q = sigma_grid[i];
        kls[i] = kl_lowrank_closed_form(p);
    }

    std::vector<SweepRow> rows;
    rows.reserve(lambda_grid.size());
    for (double lambda : lambda_grid) {
        if (!(lambda >= 0.0)) {
            throw ValidationError("vi_equivalence_sweep: lambda must be >= 0");
        }
        // Dense scan of the regularized objective. lambda = 0 means the KL
        // term is absent, so sigma = 0 (KL = +inf) stays a legal grid point.
        std::size_t arg = 0;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
            const double objective = lambda == 0.0 ? losses[i] : losses[i] + lambda * kls[i];
            if (objective < best) {  // strict: ties keep the smallest sigma
                best = objective;
                arg = i;
            }
        }

        SweepRow row;
        row.lambda = lambda;
        row.argmin_lagrangian = sigma_grid[arg];
        row.epsilon_tilde = losses[arg];

        // Largest sigma whose loss stays within the budget.
        std::size_t best_c = arg;
        for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
            if (losses[i] <= row.epsilon_tilde) best_c = i;
        }
        row.argmax_constrained = sigma_grid[best_c];
        rows.push_back(row);
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Self-verification battery
// ---------------------------------------------------------------------------

namespace {

std::string format_scientific(double x) {
    std::ostringstream out;
    out.precision(3);
    out << std::scientific << x;
    return out.str();
}

LoraAdapter random_adapter(std::uint64_t seed, std::size_t m, std::size_t n, std::size_t r) {
    LoraAdapter adapter;
    adapter.w0 = DenseMatrix(m, n);
    adapter.b = DenseMatrix(m, r);
    adapter.a = DenseMatrix(r, n);
    const std::uint64_t w0s = rng::derive_stream(seed, {0});
    const std::uint64_t bs = rng::derive_stream(seed, {1});
    const std::uint64_t as = rng::derive_stream(seed, {2});
    for (std::size_t i = 0; i < adapter.w0.data.size(); ++i) {
        adapter.w0.data[i] = rng::normal_at(w0s, i);
    }
    for (std::size_t i = 0; i < adapter.b.data.size(); ++i) {
        adapter.b.data[i] = rng::normal_at(bs, i);
    }
    for (std::size_t i = 0; i < adapter.a.data.size(); ++i) {
        adapter.a.data[i] = rng::normal_at(as, i);
    }
    return adapter;
}

CheckResult check_covariance_identity(const VerificationOptions& opts) {
    CheckResult result{"covariance-identity", true, ""};
    double worst = 0.0;
    int failures = 0;

    int case_index = 0;
    for (std::uint64_t seed = 1; seed <= 12; ++seed) {
        const std::size_t m = 2 + seed % 5;           // 2..6
        const std::size_t r = 1 + seed % std::min<std::size_t>(m, 3);
        const std::size_t n = 1 + (seed * 7) % 4;     // 1..4
        const LoraAdapter adapter = random_adapter(seed, m, n, r);
        for (double sigma : {0.1, 1.0, 3.0}) {
            const BayesianAdapter bayes = bayesianize(adapter, sigma);
            DenseMatrix omega = implied_omega(bayes);
            if (opts.inject_fault && case_index == 0) {
                omega.at(0, 0) *= 2.0;  // magnitude fault; sign flips are
                                        // invisible to a covariance
            }
            const DenseMatrix sigma_full = covariance_from_omega(bayes.b_prime, omega);

            // Orthonormalize the scaled columns of B' to recover u.
            DenseMatrix u = bayes.b_prime;
            for (std::size_t j = 0; j < u.cols; ++j) {
                for (std::size_t i = 0; i < u.rows; ++i) u.at(i, j) /= bayes.d[j];
            }
            const DenseMatrix rotated = rotate_to_adapted_basis(sigma_full, u);
            const DenseMatrix expected =
                scale(projection_matrix(m, n, r), sigma * sigma);
            const double err = max_abs_diff(rotated, expected);
            worst = std::max(worst, err);
            if (err > 1e-9) ++failures;
            ++case_index;
        }
    }

    result.pass = failures == 0;
    result.detail = "max_abs_err=" + format_scientific(worst) + " over 36 cases" +
                    (failures > 0 ? ", failures=" + std::to_string(failures) : "");
    return result;
}

CheckResult check_projector_properties() {
    CheckResult result{"projector-properties", true, ""};
    double worst = 0.0;
    const std::vector<std::array<std::size_t, 3>> shapes = {
        {4, 3, 2}, {6, 2, 3}, {3, 4, 1}, {5, 1, 5}};
    for (const auto& [m, n, r] : shapes) {
        const DenseMatrix p = projection_matrix(m, n, r);
        worst = std::max(worst, max_abs_diff(matmul(p, p), p));          // idempotent
        worst = std::max(worst, max_abs_diff(p, transpose(p)));          // symmetric
        double tr = 0.0;
        for (std::size_t i = 0; i < p.rows; ++i) tr += p.at(i, i);
        worst = std::max(worst, std::fabs(tr - static_cast<double>(n * r)));  // rank
    }
    result.pass = worst <= 1e-12;
    result.detail = "max_err=" + format_scientific(worst);
    return result;
}

CheckResult check_kl_agreement() {
    CheckResult result{"kl-route-agreement", true, ""};
    double worst_rel = 0.0;
    for (std::uint64_t seed = 100; seed < 140; ++seed) {
        const std::uint64_t s = rng::derive_stream(seed, {17});
        const std::size_t r = 1 + rng::word_at(s, 0) % 3;
        const std::size_t m = r + rng::word_at(s, 1) % 3;
        const std::size_t n = 1 + rng::word_at(s, 2) % 3;
        const double sigma_q = 0.05 + 1.5 * rng::uniform01_at(s, 3);
        const double sigma_p = 0.5 + 2.0 * rng::uniform01_at(s, 4);

        const LoraAdapter adapter = random_adapter(seed, m, n, r);
        const BayesianAdapter bayes = bayesianize(adapter, sigma_q);

        DenseMatrix u = bayes.b_prime;
        for (std::size_t j = 0; j < u.cols; ++j) {
            for (std::size_t i = 0; i < u.rows; ++i) u.at(i, j) /= bayes.d[j];
        }

        const DenseMatrix sigma_full = covariance_from_omega(bayes.b_prime, implied_omega(bayes));
        const DenseMatrix prior_full =
            scale(DenseMatrix::identity(m * n), sigma_p * sigma_p);

        const DenseMatrix sq =
            restrict_to_support(rotate_to_adapted_basis(sigma_full, u), m, n, r);
        const DenseMatrix sp =
            restrict_to_support(rotate_to_adapted_basis(prior_full, u), m, n, r);

        const std::vector<double> mu(n * r, 0.0);
        const double general = gaussian_kl_general(mu, sq, mu, sp);
        const double closed = kl_lowrank_closed_form(KlParams{sigma_q, sigma_p, n, r, 1.0});
        const double rel =
            std::fabs(general - closed) / std::max(std::fabs(closed), 1e-300);
        worst_rel = std::max(worst_rel, rel);
    }
    result.pass = worst_rel <= 1e-8;
    result.detail = "max_rel_err=" + format_scientific(worst_rel) + " over 40 tuples";
    return result;
}

CheckResult check_sweep_equivalence() {
    CheckResult result{"regularized-constrained-sweep", true, ""};
    std::vector<double> sigma_grid(2000);
    for (std::size_t i = 0; i < sigma_grid.size(); ++i) {
        sigma_grid[i] = 1e-4 + (0.9999 - 1e-4) * static_cast<double>(i) /
                                   static_cast<double>(sigma_grid.size() - 1);
    }
    const double lambdas[] = {0.1, 1.0, 10.0};
    const double step = sigma_grid[1] - sigma_grid[0];

    double worst_gap = 0.0;
    for (double c : {0.5, 2.0}) {
        const auto rows = vi_equivalence_sweep(
            [c](double s) { return c * s * s; }, lambdas,
            KlParams{0.0, 1.0, 1, 1, 1.0}, sigma_grid);
        for (const SweepRow& row : rows) {
            worst_gap = std::max(worst_gap,
                                 std::fabs(row.argmin_lagrangian - row.argmax_constrained));
        }
    }
    result.pass = worst_gap <= step + 1e-15;
    result.detail = "max_gap=" + format_scientific(worst_gap) + ", grid_step=" +
                    format_scientific(step);
    return result;
}

}  // namespace

std::vector<CheckResult> run_verification(const VerificationOptions& opts) {
    std::vector<CheckResult> results;
    results.push_back(check_covariance_identity(opts));
    results.push_back(check_projector_properties());
    results.push_back(check_kl_agreement());
    results.push_back(check_sweep_equivalence());
    return results;
}

}  // namespace tfb
