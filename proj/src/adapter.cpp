#include "tfb/adapter.hpp"

#include <cmath>
#include <string>

#include "tfb/errors.hpp"
#include "tfb/rng.hpp"

namespace tfb {

const char* family_name(PosteriorFamily f) {
    switch (f) {
        case PosteriorFamily::LowRankIsotropic: return "low_rank_isotropic";
        case PosteriorFamily::FullRankIsotropic: return "full_rank_isotropic";
        case PosteriorFamily::ConstantStd: return "constant_std";
    }
    throw ValidationError("family_name: unknown family");
}

PosteriorFamily family_from_name(const std::string& name) {
    if (name == "low_rank_isotropic") return PosteriorFamily::LowRankIsotropic;
    if (name == "full_rank_isotropic") return PosteriorFamily::FullRankIsotropic;
    if (name == "constant_std") return PosteriorFamily::ConstantStd;
    throw ValidationError("family_from_name: unknown posterior family '" + name + "'");
}

void LoraAdapter::validate() const {
    if (b.rows == 0 || b.cols == 0 || a.rows == 0 || a.cols == 0) {
        throw ShapeError("LoraAdapter: empty factor");
    }
    if (b.cols != a.rows) {
        throw ShapeError("LoraAdapter: B is " + std::to_string(b.rows) + "x" +
                         std::to_string(b.cols) + " but A is " + std::to_string(a.rows) + "x" +
                         std::to_string(a.cols));
    }
    if (w0.rows != b.rows || w0.cols != a.cols) {
        throw ShapeError("LoraAdapter: W0 is " + std::to_string(w0.rows) + "x" +
                         std::to_string(w0.cols) + ", expected " + std::to_string(b.rows) + "x" +
                         std::to_string(a.cols));
    }
    if (b.cols > b.rows) {
        throw ShapeError("LoraAdapter: rank " + std::to_string(b.cols) +
                         " exceeds output dimension " + std::to_string(b.rows));
    }
}

BayesianAdapter bayesianize(const LoraAdapter& adapter, double sigma_q) {
    adapter.validate();
    ensure_finite(adapter.b, "bayesianize: B");
    ensure_finite(adapter.a, "bayesianize: A");
    if (!(sigma_q >= 0.0) || !std::isfinite(sigma_q)) {
        throw NumericError("bayesianize: sigma_q must be finite and >= 0, got " +
                           std::to_string(sigma_q));
    }

    SvdResult svd = compact_svd(adapter.b);

    // b_prime = u diag(d)
    DenseMatrix b_prime = svd.u;
    for (std::size_t j = 0; j < svd.d.size(); ++j) {
        for (std::size_t i = 0; i < b_prime.rows; ++i) b_prime.at(i, j) *= svd.d[j];
    }

    BayesianAdapter bayes;
    bayes.b_prime = std::move(b_prime);
    bayes.m_mean = matmul(transpose(svd.v), adapter.a);
    bayes.d = std::move(svd.d);
    bayes.sigma_q = sigma_q;
    return bayes;
}

BayesianAdapter with_sigma(BayesianAdapter bayes, double sigma_q) {
    if (!(sigma_q >= 0.0) || !std::isfinite(sigma_q)) {
        throw NumericError("with_sigma: sigma_q must be finite and >= 0");
    }
    bayes.sigma_q = sigma_q;
    return bayes;
}

DenseMatrix sample_noise(const BayesianAdapter& bayes, PosteriorFamily family,
                         std::uint64_t rng_stream) {
    const std::size_t n = bayes.n();
    switch (family) {
        case PosteriorFamily::LowRankIsotropic: {
            DenseMatrix e(bayes.r(), n);
            for (std::size_t i = 0; i < e.rows; ++i) {
                const double std_i = bayes.row_std(i);
                for (std::size_t j = 0; j < n; ++j) {
                    e.at(i, j) = std_i * rng::normal_at(rng_stream, i * n + j);
                }
            }
            return e;
        }
        case PosteriorFamily::ConstantStd: {
            DenseMatrix e(bayes.r(), n);
            for (std::size_t i = 0; i < e.rows; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    e.at(i, j) = bayes.sigma_q * rng::normal_at(rng_stream, i * n + j);
                }
            }
            return e;
        }
        case PosteriorFamily::FullRankIsotropic: {
            DenseMatrix g(bayes.m(), n);
            for (std::size_t i = 0; i < g.rows; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    g.at(i, j) = bayes.sigma_q * rng::normal_at(rng_stream, i * n + j);
                }
            }
            return g;
        }
    }
    throw ValidationError("sample_noise: unknown family");
}

DenseMatrix noise_delta(const BayesianAdapter& bayes, PosteriorFamily family,
                        std::uint64_t rng_stream) {
    DenseMatrix noise = sample_noise(bayes, family, rng_stream);
    if (family == PosteriorFamily::FullRankIsotropic) return noise;
    return matmul(bayes.b_prime, noise);
}

DenseMatrix realize_weight(const DenseMatrix& w0, const BayesianAdapter& bayes,
                           PosteriorFamily family, std::uint64_t rng_stream) {
    if (w0.rows != bayes.m() || w0.cols != bayes.n()) {
        throw ShapeError("realize_weight: W0 is " + std::to_string(w0.rows) + "x" +
                         std::to_string(w0.cols) + ", posterior expects " +
                         std::to_string(bayes.m()) + "x" + std::to_string(bayes.n()));
    }
    if (family == PosteriorFamily::FullRankIsotropic) {
        const DenseMatrix g = sample_noise(bayes, family, rng_stream);
        return add(add(w0, matmul(bayes.b_prime, bayes.m_mean)), g);
    }
    const DenseMatrix e = sample_noise(bayes, family, rng_stream);
    return add(w0, matmul(bayes.b_prime, add(bayes.m_mean, e)));
}

}  // namespace tfb
