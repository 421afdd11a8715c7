#include "tfb/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tfb/errors.hpp"

namespace tfb {

namespace {

std::string shape_str(const DenseMatrix& a) {
    return std::to_string(a.rows) + "x" + std::to_string(a.cols);
}

}  // namespace

DenseMatrix DenseMatrix::identity(std::size_t n) {
    DenseMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = 1.0;
    return m;
}

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    if (a.cols != b.rows) {
        throw ShapeError("matmul: inner dimensions disagree (" + shape_str(a) + " * " +
                         shape_str(b) + ")");
    }
    DenseMatrix out(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a.at(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) {
                out.at(i, j) += aik * b.at(k, j);
            }
        }
    }
    return out;
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix out(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("add: shape mismatch (" + shape_str(a) + " vs " + shape_str(b) + ")");
    }
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += b.data[i];
    return out;
}

DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("subtract: shape mismatch (" + shape_str(a) + " vs " + shape_str(b) +
                         ")");
    }
    DenseMatrix out = a;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= b.data[i];
    return out;
}

DenseMatrix scale(const DenseMatrix& a, double s) {
    DenseMatrix out = a;
    for (double& x : out.data) x *= s;
    return out;
}

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x) {
    if (a.cols != x.size()) {
        throw ShapeError("matvec: matrix " + shape_str(a) + " with vector of length " +
                         std::to_string(x.size()));
    }
    std::vector<double> out(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) acc += a.at(i, j) * x[j];
        out[i] = acc;
    }
    return out;
}

std::vector<double> vec_colmajor(const DenseMatrix& a) {
    std::vector<double> out(a.rows * a.cols);
    for (std::size_t j = 0; j < a.cols; ++j)
        for (std::size_t i = 0; i < a.rows; ++i) out[j * a.rows + i] = a.at(i, j);
    return out;
}

double max_abs(const DenseMatrix& a) {
    double m = 0.0;
    for (double x : a.data) m = std::max(m, std::fabs(x));
    return m;
}

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    if (!a.same_shape(b)) {
        throw ShapeError("max_abs_diff: shape mismatch (" + shape_str(a) + " vs " +
                         shape_str(b) + ")");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        m = std::max(m, std::fabs(a.data[i] - b.data[i]));
    }
    return m;
}

void ensure_finite(const DenseMatrix& a, const std::string& what) {
    for (double x : a.data) {
        if (!std::isfinite(x)) {
            throw NumericError(what + ": non-finite entry");
        }
    }
}

namespace {

// Cyclic Jacobi diagonalization of a symmetric matrix. Returns eigenvalues in
// `diag`, accumulates rotations into `vecs` (columns are eigenvectors).
void jacobi_eigen_symmetric(DenseMatrix g, std::vector<double>& diag, DenseMatrix& vecs) {
    const std::size_t n = g.rows;
    vecs = DenseMatrix::identity(n);
    if (n == 1) {
        diag = {g.at(0, 0)};
        return;
    }

    double scale_ref = 0.0;
    for (std::size_t i = 0; i < n; ++i) scale_ref = std::max(scale_ref, std::fabs(g.at(i, i)));

    const int max_sweeps = 64;
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) off = std::max(off, std::fabs(g.at(p, q)));
        if (off <= 1e-15 * std::max(scale_ref, 1e-300)) break;

        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = g.at(p, q);
                if (apq == 0.0) continue;
                const double app = g.at(p, p);
                const double aqq = g.at(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;

                for (std::size_t k = 0; k < n; ++k) {
                    const double gkp = g.at(k, p);
                    const double gkq = g.at(k, q);
                    g.at(k, p) = c * gkp - s * gkq;
                    g.at(k, q) = s * gkp + c * gkq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double gpk = g.at(p, k);
                    const double gqk = g.at(q, k);
                    g.at(p, k) = c * gpk - s * gqk;
                    g.at(q, k) = s * gpk + c * gqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = vecs.at(k, p);
                    const double vkq = vecs.at(k, q);
                    vecs.at(k, p) = c * vkp - s * vkq;
                    vecs.at(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    diag.resize(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = g.at(i, i);
}

}  // namespace

SvdResult compact_svd(const DenseMatrix& b) {
    const std::size_t m = b.rows;
    const std::size_t r = b.cols;
    if (r == 0 || m < r) {
        throw ShapeError("compact_svd: need a tall matrix with m >= r >= 1, got " +
                         std::to_string(m) + "x" + std::to_string(r));
    }
    ensure_finite(b, "compact_svd");

    const DenseMatrix gram = matmul(transpose(b), b);
    std::vector<double> eigvals;
    DenseMatrix v;
    jacobi_eigen_symmetric(gram, eigvals, v);

    // Sort eigenpairs by eigenvalue, descending; stable on ties for
    // determinism.
    std::vector<std::size_t> order(r);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t i, std::size_t j) { return eigvals[i] > eigvals[j]; });

    std::vector<double> d(r);
    DenseMatrix v_sorted(r, r);
    for (std::size_t j = 0; j < r; ++j) {
        d[j] = std::sqrt(std::max(eigvals[order[j]], 0.0));
        for (std::size_t i = 0; i < r; ++i) v_sorted.at(i, j) = v.at(i, order[j]);
    }

    const double rank_tol = 1e-8 * d[0];
    if (!(d[r - 1] > rank_tol)) {
        throw RankDeficiencyError(
            "compact_svd: smallest singular value " + std::to_string(d[r - 1]) +
            " is at or below tolerance " + std::to_string(rank_tol) +
            "; the input must have full column rank");
    }

    // Sign convention: the largest-magnitude entry of each v column is
    // positive, ties broken by the lowest row index.
    for (std::size_t j = 0; j < r; ++j) {
        std::size_t arg = 0;
        double best = -1.0;
        for (std::size_t i = 0; i < r; ++i) {
            const double mag = std::fabs(v_sorted.at(i, j));
            if (mag > best) {
                best = mag;
                arg = i;
            }
        }
        if (v_sorted.at(arg, j) < 0.0) {
            for (std::size_t i = 0; i < r; ++i) v_sorted.at(i, j) = -v_sorted.at(i, j);
        }
    }

    // u = B v diag(1/d)
    DenseMatrix u = matmul(b, v_sorted);
    for (std::size_t j = 0; j < r; ++j) {
        const double inv = 1.0 / d[j];
        for (std::size_t i = 0; i < m; ++i) u.at(i, j) *= inv;
    }

    return SvdResult{std::move(u), std::move(d), std::move(v_sorted)};
}

DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b) {
    constexpr std::size_t kCap = 4096;
    const std::size_t rows = a.rows * b.rows;
    const std::size_t cols = a.cols * b.cols;
    if (rows > kCap || cols > kCap) {
        throw SizeCapError("kron: result " + std::to_string(rows) + "x" + std::to_string(cols) +
                           " exceeds the " + std::to_string(kCap) + " cap");
    }
    DenseMatrix out(rows, cols);
    for (std::size_t i = 0; i < a.rows; ++i) {
        for (std::size_t j = 0; j < a.cols; ++j) {
            const double aij = a.at(i, j);
            if (aij == 0.0) continue;
            for (std::size_t k = 0; k < b.rows; ++k) {
                for (std::size_t l = 0; l < b.cols; ++l) {
                    out.at(i * b.rows + k, j * b.cols + l) = aij * b.at(k, l);
                }
            }
        }
    }
    return out;
}

DenseMatrix invert(const DenseMatrix& a) {
    if (a.rows != a.cols) {
        throw ShapeError("invert: matrix must be square, got " + shape_str(a));
    }
    const std::size_t n = a.rows;
    DenseMatrix work = a;
    DenseMatrix inv = DenseMatrix::identity(n);

    for (std::size_t col = 0; col < n; ++col) {
        std::size_t pivot = col;
        double best = std::fabs(work.at(col, col));
        for (std::size_t i = col + 1; i < n; ++i) {
            const double mag = std::fabs(work.at(i, col));
            if (mag > best) {
                best = mag;
                pivot = i;
            }
        }
        if (best == 0.0) {
            throw NumericError("invert: singular matrix (zero pivot at column " +
                               std::to_string(col) + ")");
        }
        if (pivot != col) {
            for (std::size_t j = 0; j < n; ++j) {
                std::swap(work.at(col, j), work.at(pivot, j));
                std::swap(inv.at(col, j), inv.at(pivot, j));
            }
        }
        const double p = work.at(col, col);
        for (std::size_t j = 0; j < n; ++j) {
            work.at(col, j) /= p;
            inv.at(col, j) /= p;
        }
        for (std::size_t i = 0; i < n; ++i) {
            if (i == col) continue;
            const double f = work.at(i, col);
            if (f == 0.0) continue;
            for (std::size_t j = 0; j < n; ++j) {
                work.at(i, j) -= f * work.at(col, j);
                inv.at(i, j) -= f * inv.at(col, j);
            }
        }
    }
    return inv;
}

DenseMatrix complete_orthonormal_basis(const DenseMatrix& u) {
    const std::size_t m = u.rows;
    const std::size_t r = u.cols;
    if (m < r) throw ShapeError("complete_orthonormal_basis: m < r");

    DenseMatrix t(m, m);
    for (std::size_t j = 0; j < r; ++j)
        for (std::size_t i = 0; i < m; ++i) t.at(i, j) = u.at(i, j);

    std::size_t filled = r;
    for (std::size_t cand = 0; cand < m && filled < m; ++cand) {
        std::vector<double> v(m, 0.0);
        v[cand] = 1.0;
        // Two Gram-Schmidt passes against everything accepted so far.
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t j = 0; j < filled; ++j) {
                double dot = 0.0;
                for (std::size_t i = 0; i < m; ++i) dot += t.at(i, j) * v[i];
                for (std::size_t i = 0; i < m; ++i) v[i] -= dot * t.at(i, j);
            }
        }
        double norm = 0.0;
        for (double x : v) norm += x * x;
        norm = std::sqrt(norm);
        if (norm > 1e-8) {
            for (std::size_t i = 0; i < m; ++i) t.at(i, filled) = v[i] / norm;
            ++filled;
        }
    }
    if (filled != m) {
        throw NumericError("complete_orthonormal_basis: failed to complete the basis");
    }
    return t;
}

}  // namespace tfb
