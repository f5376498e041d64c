#pragma once

#include "tenkit/range_finder.hpp"
#include "tenkit/random.hpp"
#include "tenkit/tensor.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

namespace tenkit {

/// Core tensor plus one factor matrix per mode; factors produced by this
/// module have orthonormal columns.
struct TuckerModel {
    DenseTensor core;
    std::vector<Matrix> factors;

    Index order() const { return core.order(); }

    void validate() const {
        detail::require(static_cast<Index>(factors.size()) == core.order(),
                        "tucker model: one factor per mode required");
        for (Index n = 0; n < core.order(); ++n)
            detail::require(factors[static_cast<std::size_t>(n)].cols() == core.dim(n),
                            "tucker model: factor columns must match core shape");
    }

    std::vector<Index> full_shape() const {
        std::vector<Index> s(factors.size());
        for (std::size_t n = 0; n < factors.size(); ++n) s[n] = factors[n].rows();
        return s;
    }
};

namespace detail {

/// Flips each column so its largest-magnitude entry is positive; keeps factor
/// signs stable across eigensolver implementations.
inline void fix_column_signs(Matrix& u) {
    for (Index j = 0; j < u.cols(); ++j) {
        Index imax = 0;
        u.col(j).cwiseAbs().maxCoeff(&imax);
        if (u(imax, j) < 0) u.col(j) = -u.col(j);
    }
}

// Stream tags shared with the distributed executor so both derive identical
// test matrices from one SeedSpec.
inline SeedSpec alg2_omega_seed(const SeedSpec& seed, Index mode) {
    return seed.derived(0x0A2u, static_cast<std::uint64_t>(mode));
}
inline SeedSpec alg3_init_seed(const SeedSpec& seed, Index mode) {
    return seed.derived(0x0A3u, static_cast<std::uint64_t>(mode));
}
inline SeedSpec alg3_omega_seed(const SeedSpec& seed, Index pass, Index mode) {
    return seed.derived(0x0B3u + static_cast<std::uint64_t>(pass),
                        static_cast<std::uint64_t>(mode));
}

}  // namespace detail

/// G x_1 U^(1) ... x_N U^(N).
inline DenseTensor reconstruct(const TuckerModel& model) {
    model.validate();
    return ttm_all(model.core, model.factors);
}

/// Tucker decomposition with factor n the top-R_n left singular vectors of the
/// mode-n unfolding. The left basis is computed from the I_n x I_n Gram of the
/// unfolding when the unfolding is wide, avoiding the huge right factor.
inline TuckerModel hosvd(const DenseTensor& y, const std::vector<Index>& ranks) {
    detail::require(static_cast<Index>(ranks.size()) == y.order(),
                    "hosvd: one rank per mode required");
    for (Index n = 0; n < y.order(); ++n)
        detail::require(ranks[static_cast<std::size_t>(n)] >= 1 &&
                            ranks[static_cast<std::size_t>(n)] <= y.dim(n),
                        "hosvd: rank out of range");

    TuckerModel model;
    model.factors.resize(static_cast<std::size_t>(y.order()));
    for (Index n = 0; n < y.order(); ++n) {
        const Index rn = ranks[static_cast<std::size_t>(n)];
        const Index width = y.size() / y.dim(n);
        Matrix u;
        if (width > y.dim(n)) {
            Matrix gram = unfold_gram(y, n);
            Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
            detail::require(eig.info() == Eigen::Success, "hosvd: eigensolver failed");
            u.resize(y.dim(n), rn);
            for (Index j = 0; j < rn; ++j)
                u.col(j) = eig.eigenvectors().col(gram.rows() - 1 - j);
        } else {
            Eigen::BDCSVD<Matrix> svd(unfold(y, n), Eigen::ComputeThinU);
            u = svd.matrixU().leftCols(rn);
        }
        detail::fix_column_signs(u);
        model.factors[static_cast<std::size_t>(n)] = std::move(u);
    }
    model.core = ttm_all(y, model.factors, -1, /*transpose=*/true);
    return model;
}

/// Randomized Tucker decomposition: one pass over the modes, shrinking the
/// working tensor in place, so later modes see a partially compressed tensor.
/// Factor n spans the range of unfold(Y_current, n) * Omega with Omega drawn
/// from a per-mode stream of `seed`; oversampled width R_n + p is kept (no
/// truncation back to R_n), shrinking only when rank deficiency is detected.
inline TuckerModel rand_tucker(const DenseTensor& y, const std::vector<Index>& ranks,
                               Index oversample, const SeedSpec& seed) {
    detail::require(static_cast<Index>(ranks.size()) == y.order(),
                    "rand_tucker: one rank per mode required");
    detail::require(oversample >= 0, "rand_tucker: oversampling must be nonnegative");

    TuckerModel model;
    model.factors.resize(static_cast<std::size_t>(y.order()));
    DenseTensor cur = y;
    for (Index n = 0; n < y.order(); ++n) {
        const Index r_tilde =
            std::min(ranks[static_cast<std::size_t>(n)] + oversample, cur.dim(n));
        const Index width = cur.size() / cur.dim(n);
        const Matrix omega =
            gaussian_matrix(width, r_tilde, detail::alg2_omega_seed(seed, n));
        Matrix u = orthonormal_basis(unfold_times(cur, n, omega));
        detail::fix_column_signs(u);
        cur = ttm(cur, u.transpose(), n);
        model.factors[static_cast<std::size_t>(n)] = std::move(u);
    }
    model.core = std::move(cur);
    return model;
}

/// Randomized Tucker with two alternating passes: factors start as Gaussian
/// matrices; each visit projects the full tensor with all other current
/// factors before range finding, which restores near-HOSVD quality on noisy
/// data. The core is formed from the original tensor at the end.
inline TuckerModel rand_tucker_2i(const DenseTensor& y, const std::vector<Index>& ranks,
                                  Index oversample, const SeedSpec& seed) {
    detail::require(static_cast<Index>(ranks.size()) == y.order(),
                    "rand_tucker_2i: one rank per mode required");
    detail::require(oversample >= 0, "rand_tucker_2i: oversampling must be nonnegative");

    const Index order = y.order();
    std::vector<Matrix> factors(static_cast<std::size_t>(order));
    for (Index n = 0; n < order; ++n) {
        const Index r_tilde =
            std::min(ranks[static_cast<std::size_t>(n)] + oversample, y.dim(n));
        factors[static_cast<std::size_t>(n)] =
            gaussian_matrix(y.dim(n), r_tilde, detail::alg3_init_seed(seed, n));
    }

    for (Index pass = 0; pass < 2; ++pass) {
        for (Index n = 0; n < order; ++n) {
            const DenseTensor x = ttm_all(y, factors, n, /*transpose=*/true);
            const Index r_tilde =
                std::min(ranks[static_cast<std::size_t>(n)] + oversample, y.dim(n));
            const Index width = x.size() / x.dim(n);
            const Matrix omega =
                gaussian_matrix(width, r_tilde, detail::alg3_omega_seed(seed, pass, n));
            Matrix u = orthonormal_basis(unfold_times(x, n, omega));
            detail::fix_column_signs(u);
            factors[static_cast<std::size_t>(n)] = std::move(u);
        }
    }

    TuckerModel model;
    model.core = ttm_all(y, factors, -1, /*transpose=*/true);
    model.factors = std::move(factors);
    return model;
}

}  // namespace tenkit
