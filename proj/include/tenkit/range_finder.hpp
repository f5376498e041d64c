#pragma once

#include "tenkit/random.hpp"
#include "tenkit/tensor.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

namespace tenkit {

/// Relative threshold below which directions are treated as numerically
/// rank-deficient and dropped.
inline constexpr double kRankDeficiencyTol = 1e-12;

/// Orthonormal basis of range(Z) via column-pivoted QR. Numerically
/// rank-deficient directions (|R_ii| < 1e-12 * |R_00|) are dropped, so the
/// returned column count is the effective rank.
inline Matrix orthonormal_basis(const Matrix& z) {
    detail::require(z.rows() >= 1, "orthonormal_basis: empty input");
    if (z.cols() == 0) return Matrix(z.rows(), 0);
    Eigen::ColPivHouseholderQR<Matrix> qr(z);
    const Matrix& r = qr.matrixR();
    const Index kmax = std::min(z.rows(), z.cols());
    const double top = std::abs(r(0, 0));
    Index rank = 0;
    while (rank < kmax && std::abs(r(rank, rank)) > kRankDeficiencyTol * top) ++rank;
    Matrix q = qr.householderQ() * Matrix::Identity(z.rows(), rank);
    return q;
}

/// Randomized range finder: orthonormal basis of range(M * Omega) with Omega
/// an i.i.d. Gaussian test matrix of r_tilde columns drawn from `seed`.
inline Matrix range_finder(const Matrix& m, Index r_tilde, const SeedSpec& seed) {
    detail::require(r_tilde >= 1, "range_finder: r_tilde must be positive");
    const Matrix omega = gaussian_matrix(m.cols(), r_tilde, seed);
    return orthonormal_basis(m * omega);
}

struct GramOrthoResult {
    std::vector<Matrix> blocks;  // U_s = Z_s * U * Sigma^{-1/2}
    Vector spectrum;             // kept eigenvalues, descending
};

/// Orthonormalizes a block-row partitioned matrix through the Gram
/// eigendecomposition sum_s Z_s^T Z_s = U Sigma U^T; the vertically stacked
/// output blocks have orthonormal columns. Eigenvalues below 1e-12 of the
/// largest are treated as zero and their columns dropped.
inline GramOrthoResult gram_orthonormalize(const std::vector<Matrix>& z_blocks) {
    detail::require(!z_blocks.empty(), "gram_orthonormalize: no blocks");
    const Index r = z_blocks.front().cols();
    for (const Matrix& z : z_blocks)
        detail::require(z.cols() == r, "gram_orthonormalize: column-count mismatch");

    Matrix gram = Matrix::Zero(r, r);
    for (const Matrix& z : z_blocks) gram.noalias() += z.transpose() * z;

    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    detail::require(eig.info() == Eigen::Success, "gram_orthonormalize: eigensolver failed");
    const Vector& evals = eig.eigenvalues();  // ascending
    const double top = evals.size() > 0 ? evals(evals.size() - 1) : 0.0;
    detail::require(top > 0.0, "gram_orthonormalize: all blocks are zero");

    Index kept = 0;
    for (Index i = evals.size() - 1; i >= 0; --i) {
        if (evals(i) > kRankDeficiencyTol * top) ++kept;
        else break;
    }

    Matrix transform(r, kept);
    Vector spectrum(kept);
    for (Index j = 0; j < kept; ++j) {
        const Index src = evals.size() - 1 - j;  // descending order
        spectrum(j) = evals(src);
        transform.col(j) = eig.eigenvectors().col(src) / std::sqrt(evals(src));
    }

    GramOrthoResult out;
    out.spectrum = std::move(spectrum);
    out.blocks.reserve(z_blocks.size());
    for (const Matrix& z : z_blocks) out.blocks.emplace_back(z * transform);
    return out;
}

/// Gram-path transform T with stacked-Z * T orthonormal; exposed for the
/// distributed protocol where blocks live on different workers.
inline std::pair<Matrix, Vector> gram_ortho_transform(const Matrix& gram_sum) {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram_sum);
    detail::require(eig.info() == Eigen::Success, "gram_ortho_transform: eigensolver failed");
    const Vector& evals = eig.eigenvalues();
    const double top = evals.size() > 0 ? evals(evals.size() - 1) : 0.0;
    detail::require(top > 0.0, "gram_ortho_transform: zero Gram matrix");
    Index kept = 0;
    for (Index i = evals.size() - 1; i >= 0; --i) {
        if (evals(i) > kRankDeficiencyTol * top) ++kept;
        else break;
    }
    Matrix transform(gram_sum.rows(), kept);
    Vector spectrum(kept);
    for (Index j = 0; j < kept; ++j) {
        const Index src = evals.size() - 1 - j;
        spectrum(j) = evals(src);
        transform.col(j) = eig.eigenvectors().col(src) / std::sqrt(evals(src));
    }
    return {std::move(transform), std::move(spectrum)};
}

}  // namespace tenkit
