#pragma once

#include "tenkit/random.hpp"
#include "tenkit/tensor.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <vector>

namespace tenkit {

/// N factor matrices with a common column count R. Scale convention: after
/// finalization all columns except the last factor's have unit l2 norm, with
/// the weights absorbed into the last factor.
struct CpModel {
    std::vector<Matrix> factors;

    Index order() const { return static_cast<Index>(factors.size()); }
    Index rank() const { return factors.empty() ? 0 : factors.front().cols(); }

    void validate() const {
        detail::require(!factors.empty(), "cp model: no factors");
        const Index r = factors.front().cols();
        detail::require(r >= 1, "cp model: rank must be positive");
        for (const Matrix& a : factors)
            detail::require(a.cols() == r, "cp model: factor rank mismatch");
    }

    std::vector<Index> shape() const {
        std::vector<Index> s(factors.size());
        for (std::size_t n = 0; n < factors.size(); ++n) s[n] = factors[n].rows();
        return s;
    }
};

struct StopRule {
    int max_iters  = 1000;
    double fit_tol = 1e-6;
};

struct CpResult {
    CpModel model;
    std::vector<double> fit_trace;  // fit against the input tensor, one per sweep
    int iterations = 0;
};

namespace detail {

/// Factors in the Khatri-Rao order that makes unfold(reconstruct, n) equal
/// A^(n) * B^T: descending mode index N-1, ..., n+1, n-1, ..., 0.
inline std::vector<Matrix> b_factors(const std::vector<Matrix>& factors, Index skip) {
    std::vector<Matrix> out;
    out.reserve(factors.size() - 1);
    for (Index p = static_cast<Index>(factors.size()) - 1; p >= 0; --p)
        if (p != skip) out.push_back(factors[static_cast<std::size_t>(p)]);
    return out;
}

/// Solves X * BtB = YB for X. Falls back to a ridge-regularized solve
/// (1e-12 * trace) when the normal matrix is numerically singular.
inline Matrix solve_normal(const Matrix& yb, const Matrix& btb) {
    Matrix x = btb.ldlt().solve(yb.transpose()).transpose();
    if (x.allFinite()) return x;
    const double ridge = 1e-12 * btb.trace() + 1e-300;
    Matrix reg = btb;
    reg.diagonal().array() += ridge;
    return reg.ldlt().solve(yb.transpose()).transpose();
}

/// Residual norm squared from the Gram identity
/// ||Y - [[A]]||^2 = ||Y||^2 - 2 tr(A^T YB) + tr((A^T A)(B^T B)),
/// using the last updated mode's YB/BtB.
inline double residual_sq(double y_sq, const Matrix& a, const Matrix& yb, const Matrix& btb) {
    const double inner = (a.array() * yb.array()).sum();
    const double model_sq = (btb.array() * (a.transpose() * a).array()).sum();
    return std::max(0.0, y_sq - 2.0 * inner + model_sq);
}

/// One HALS pass over the columns of A given Q = YB and T = BtB; updates A in
/// place. Columns with a degenerate diagonal entry are skipped for the sweep.
/// With project=true each updated column is clamped at zero.
inline void hals_sweep(Matrix& a, const Matrix& q, const Matrix& t, bool project) {
    for (Index r = 0; r < a.cols(); ++r) {
        const double trr = t(r, r);
        if (trr < 1e-15) continue;
        Vector col = a.col(r) + (q.col(r) - a * t.col(r)) / trr;
        if (project) col = col.cwiseMax(0.0);
        a.col(r) = col;
    }
}

/// Normalizes columns of all but the last factor to unit l2 norm, absorbing
/// the scales into the last factor.
inline void absorb_scales(CpModel& model) {
    if (model.factors.size() < 2) return;
    Matrix& last = model.factors.back();
    for (std::size_t n = 0; n + 1 < model.factors.size(); ++n) {
        Matrix& a = model.factors[n];
        for (Index r = 0; r < a.cols(); ++r) {
            const double norm = a.col(r).norm();
            if (norm > 0.0) {
                a.col(r) /= norm;
                last.col(r) *= norm;
            }
        }
    }
}

inline SeedSpec cp_init_seed(const SeedSpec& seed, Index mode) {
    return seed.derived(0x0C9u, static_cast<std::uint64_t>(mode));
}

}  // namespace detail

/// Sum of R rank-one outer products.
inline DenseTensor cp_reconstruct(const CpModel& model) {
    model.validate();
    if (model.order() == 1) {
        DenseTensor t({model.factors.front().rows()});
        Eigen::Map<Vector>(t.data(), t.dim(0)) = model.factors.front().rowwise().sum();
        return t;
    }
    const Matrix b = khatri_rao(detail::b_factors(model.factors, 0));
    const Matrix m0 = model.factors.front() * b.transpose();
    return fold(m0, 0, model.shape());
}

/// Gradient building blocks for mode n:
/// YB = unfold(Y, n) * B^(n) and BtB = Hadamard of the other factor Grams.
/// The gradient of the least-squares objective is A^(n) * BtB - YB.
inline std::pair<Matrix, Matrix> gradient_terms(const DenseTensor& y,
                                                const std::vector<Matrix>& factors,
                                                Index mode) {
    detail::require(static_cast<Index>(factors.size()) == y.order(),
                    "gradient_terms: one factor per mode required");
    for (Index n = 0; n < y.order(); ++n)
        detail::require(factors[static_cast<std::size_t>(n)].rows() == y.dim(n),
                        "gradient_terms: factor rows must match tensor dims");
    const Matrix b = khatri_rao(detail::b_factors(factors, mode));
    Matrix yb = unfold_times(y, mode, b);
    Matrix btb = gram_hadamard(factors, mode);
    return {std::move(yb), std::move(btb)};
}

namespace detail {

template <typename UpdateFn>
CpResult cp_iterate(const DenseTensor& y, const StopRule& stop,
                    std::vector<Matrix> factors, UpdateFn&& update) {
    const Index order = y.order();
    const double y_sq = squared_norm(y);
    const double y_norm = std::sqrt(y_sq);
    require(y_norm > 0.0, "cp: input tensor has zero norm");

    CpResult result;
    result.model.factors = std::move(factors);
    double prev_fit = -std::numeric_limits<double>::infinity();

    for (int it = 0; it < stop.max_iters; ++it) {
        double res_sq = 0.0;
        for (Index n = 0; n < order; ++n) {
            const Matrix b = khatri_rao(b_factors(result.model.factors, n));
            const Matrix yb = unfold_times(y, n, b);
            const Matrix btb = gram_hadamard(result.model.factors, n);
            Matrix& a = result.model.factors[static_cast<std::size_t>(n)];
            update(a, yb, btb);
            if (n == order - 1) res_sq = residual_sq(y_sq, a, yb, btb);
        }
        const double fit = 1.0 - std::sqrt(res_sq) / y_norm;
        result.fit_trace.push_back(fit);
        result.iterations = it + 1;
        if (std::abs(fit - prev_fit) < stop.fit_tol) break;
        prev_fit = fit;
    }
    absorb_scales(result.model);
    return result;
}

}  // namespace detail

/// CP decomposition by alternating least squares, A^(n) <- YB * (BtB)^-1.
inline CpResult cp_als(const DenseTensor& y, Index rank, const StopRule& stop,
                       const SeedSpec& seed) {
    detail::require(rank >= 1, "cp_als: rank must be positive");
    std::vector<Matrix> init(static_cast<std::size_t>(y.order()));
    for (Index n = 0; n < y.order(); ++n)
        init[static_cast<std::size_t>(n)] =
            gaussian_matrix(y.dim(n), rank, detail::cp_init_seed(seed, n));
    return detail::cp_iterate(y, stop, std::move(init),
                              [](Matrix& a, const Matrix& yb, const Matrix& btb) {
                                  a = detail::solve_normal(yb, btb);
                              });
}

/// Nonnegative CP by multiplicative updates. Requires an entrywise
/// nonnegative tensor; factors stay nonnegative throughout.
inline CpResult cp_mu(const DenseTensor& y, Index rank, const StopRule& stop,
                      const SeedSpec& seed) {
    detail::require(rank >= 1, "cp_mu: rank must be positive");
    detail::require(y.array().minCoeff() >= 0.0, "cp_mu: input tensor has negative entries");
    std::vector<Matrix> init(static_cast<std::size_t>(y.order()));
    for (Index n = 0; n < y.order(); ++n)
        init[static_cast<std::size_t>(n)] =
            nonneg_gaussian_matrix(y.dim(n), rank, detail::cp_init_seed(seed, n));
    constexpr double eps = 1e-16;
    return detail::cp_iterate(y, stop, std::move(init),
                              [&](Matrix& a, const Matrix& yb, const Matrix& btb) {
                                  const Matrix denom = (a * btb).cwiseMax(eps);
                                  a.array() *= yb.array() / denom.array();
                              });
}

/// Nonnegative CP by hierarchical ALS: exact per-column least-squares steps
/// with a clamp at zero (set project=false for the unconstrained column
/// updates).
inline CpResult cp_hals(const DenseTensor& y, Index rank, const StopRule& stop,
                        const SeedSpec& seed, bool project = true) {
    detail::require(rank >= 1, "cp_hals: rank must be positive");
    std::vector<Matrix> init(static_cast<std::size_t>(y.order()));
    for (Index n = 0; n < y.order(); ++n)
        init[static_cast<std::size_t>(n)] =
            nonneg_gaussian_matrix(y.dim(n), rank, detail::cp_init_seed(seed, n));
    return detail::cp_iterate(y, stop, std::move(init),
                              [project](Matrix& a, const Matrix& yb, const Matrix& btb) {
                                  detail::hals_sweep(a, yb, btb, project);
                              });
}

}  // namespace tenkit
