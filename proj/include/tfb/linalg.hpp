#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace tfb {

/**
 * Row-major dense matrix of doubles. Everything in this toolkit is desk
 * scale, so the operations below are plain loops with explicit shape checks;
 * there is deliberately no BLAS, expression templates, or allocator cleverness
 * to reason about when an oracle disagrees with the implementation.
 */
struct DenseMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;  // rows * cols, row-major

    DenseMatrix() = default;
    DenseMatrix(std::size_t r, std::size_t c, double fill = 0.0)
        : rows(r), cols(c), data(r * c, fill) {}

    static DenseMatrix identity(std::size_t n);

    double& at(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    bool same_shape(const DenseMatrix& other) const {
        return rows == other.rows && cols == other.cols;
    }
};

// Thin SVD of a tall matrix B (m x r, m >= r, full column rank):
// B = u * diag(d) * v^T with u m x r column-orthonormal, d descending
// positive, v r x r orthogonal.
struct SvdResult {
    DenseMatrix u;
    std::vector<double> d;
    DenseMatrix v;
};

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix transpose(const DenseMatrix& a);
DenseMatrix add(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix subtract(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix scale(const DenseMatrix& a, double s);

std::vector<double> matvec(const DenseMatrix& a, std::span<const double> x);

// Column-stacking vectorization: vec(X)[j*rows + i] = X(i, j). This is the
// convention every covariance oracle in the toolkit is written against.
std::vector<double> vec_colmajor(const DenseMatrix& a);

double max_abs(const DenseMatrix& a);
double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b);

// Throws NumericError naming `what` if any entry is NaN or infinite.
void ensure_finite(const DenseMatrix& a, const std::string& what);

/**
 * Compact SVD via a cyclic Jacobi eigendecomposition of the Gram matrix
 * B^T B, then u = B v diag(1/d). Deterministic: eigenvalues are sorted
 * descending and each (u, v) column pair is sign-fixed so that the
 * largest-magnitude entry of the v column is positive (ties broken by the
 * lowest row index).
 *
 * Throws ShapeError if m < r, RankDeficiencyError if the smallest singular
 * value is <= 1e-8 * d_max (full column rank is a hard precondition of the
 * regrouping this feeds).
 */
SvdResult compact_svd(const DenseMatrix& b);

// Kronecker product. Either result dimension above 4096 throws SizeCapError;
// the brute-force covariance oracles are the only consumers and they are
// meant to stay desk scale.
DenseMatrix kron(const DenseMatrix& a, const DenseMatrix& b);

// Gauss-Jordan inverse with partial pivoting. Square input; throws
// NumericError on a vanishing pivot.
DenseMatrix invert(const DenseMatrix& a);

// Completes column-orthonormal u (m x r) to an m x m orthonormal basis whose
// first r columns are u, by Gram-Schmidt over the canonical basis vectors
// (deterministic candidate order, re-orthogonalized once).
DenseMatrix complete_orthonormal_basis(const DenseMatrix& u);

}  // namespace tfb
