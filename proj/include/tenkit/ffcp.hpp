#pragma once

#include "tenkit/cp.hpp"
#include "tenkit/tucker.hpp"

#include <chrono>
#include <cmath>
#include <vector>

namespace tenkit {

enum class ConstraintKind { none, nonneg_mu, nonneg_hals, sparse };

struct ConstraintSpec {
    ConstraintKind kind = ConstraintKind::none;
    double sparsity_c   = 0.0;  // soft-threshold level for kind == sparse
};

/// Elementwise shrinkage: x-c above c, 0 on [-c, c], x+c below -c.
inline Matrix soft_threshold(const Matrix& a, double c) {
    detail::require(c >= 0.0, "soft_threshold: threshold must be nonnegative");
    return a.unaryExpr([c](double x) {
        if (x > c) return x - c;
        if (x < -c) return x + c;
        return 0.0;
    });
}

namespace detail {

/// H = unfold(G, n) * khatri_rao_{p != n}(V^(p)), computed column by column as
/// h_r = G x_{p != n} v_r^(p)T so the Khatri-Rao matrix is never materialized.
inline Matrix ffcp_h(const DenseTensor& core, const std::vector<Matrix>& v, Index mode) {
    const Index rank = v[static_cast<std::size_t>(mode == 0 ? 1 : 0)].cols();
    Matrix h(core.dim(mode), rank);
    for (Index r = 0; r < rank; ++r) {
        DenseTensor cur = core;
        // contract trailing modes first so intermediate order never grows
        for (Index p = core.order() - 1; p >= 0; --p) {
            if (p == mode) continue;
            const Matrix vr = v[static_cast<std::size_t>(p)].col(r).transpose();
            cur = ttm(cur, vr, p);
        }
        h.col(r) = Eigen::Map<const Vector>(cur.data(), cur.size());
    }
    return h;
}

inline SeedSpec ffcp_init_seed(const SeedSpec& seed, Index mode) {
    return seed.derived(0x0FCu, static_cast<std::uint64_t>(mode));
}

}  // namespace detail

/// Compressed-space estimate of unfold(Y, n) * B^(n): projects the CP factors
/// through the Tucker factors (V^(p) = U^(p)T A^(p)) and expands U^(n) * H.
inline Matrix ffcp_yb(const TuckerModel& model, const std::vector<Matrix>& factors,
                      Index mode) {
    model.validate();
    detail::require(static_cast<Index>(factors.size()) == model.order(),
                    "ffcp_yb: one factor per mode required");
    std::vector<Matrix> v(factors.size());
    for (Index p = 0; p < model.order(); ++p) {
        detail::require(factors[static_cast<std::size_t>(p)].rows() ==
                            model.factors[static_cast<std::size_t>(p)].rows(),
                        "ffcp_yb: factor rows must match model dims");
        v[static_cast<std::size_t>(p)] =
            model.factors[static_cast<std::size_t>(p)].transpose() *
            factors[static_cast<std::size_t>(p)];
    }
    const Matrix h = detail::ffcp_h(model.core, v, mode);
    return model.factors[static_cast<std::size_t>(mode)] * h;
}

struct FfcpSweepRecord {
    int iteration;
    double fit;                        // fit in compressed space
    std::vector<double> mode_seconds;  // per-mode update time
};

struct FfcpResult {
    CpModel model;
    std::vector<double> fit_trace;
    std::vector<FfcpSweepRecord> trace;
    int iterations = 0;
};

/// CP decomposition of a tensor held in Tucker-compressed form. Per sweep and
/// mode, the gradient terms are formed through the core (cost independent of
/// the full tensor size), and A^(n) is updated by least squares,
/// numerator-projected multiplicative updates, HALS, or least squares followed
/// by soft thresholding. Fit for the stopping rule is evaluated in compressed
/// space via Gram identities, never reconstructing the full tensor.
inline FfcpResult ffcp(const TuckerModel& model, Index rank, const ConstraintSpec& constraint,
                       const StopRule& stop, const SeedSpec& seed) {
    model.validate();
    detail::require(model.order() >= 2, "ffcp: tensor order must be at least 2");
    detail::require(rank >= 1, "ffcp: rank must be positive");
    detail::require(constraint.sparsity_c >= 0.0, "ffcp: sparsity level must be nonnegative");
    const Index order = model.order();
    const bool nonneg = constraint.kind == ConstraintKind::nonneg_mu ||
                        constraint.kind == ConstraintKind::nonneg_hals;

    FfcpResult result;
    result.model.factors.resize(static_cast<std::size_t>(order));
    std::vector<Matrix> v(static_cast<std::size_t>(order));
    std::vector<Matrix> grams(static_cast<std::size_t>(order));
    for (Index n = 0; n < order; ++n) {
        const Index rows = model.factors[static_cast<std::size_t>(n)].rows();
        Matrix a = nonneg ? nonneg_gaussian_matrix(rows, rank, detail::ffcp_init_seed(seed, n))
                          : gaussian_matrix(rows, rank, detail::ffcp_init_seed(seed, n));
        v[static_cast<std::size_t>(n)] =
            model.factors[static_cast<std::size_t>(n)].transpose() * a;
        grams[static_cast<std::size_t>(n)] = a.transpose() * a;
        result.model.factors[static_cast<std::size_t>(n)] = std::move(a);
    }

    // ||Y_T||^2 = <G, G x_n (U^T U)>; reduces to ||G||^2 for orthonormal U.
    double yt_sq;
    {
        std::vector<Matrix> uu(static_cast<std::size_t>(order));
        for (Index n = 0; n < order; ++n) {
            const Matrix& u = model.factors[static_cast<std::size_t>(n)];
            uu[static_cast<std::size_t>(n)] = u.transpose() * u;
        }
        const DenseTensor guu = ttm_all(model.core, uu);
        yt_sq = std::max(
            0.0, (model.core.array() * guu.array()).sum());
    }
    const double yt_norm = std::sqrt(yt_sq);
    detail::require(yt_norm > 0.0, "ffcp: compressed tensor has zero norm");

    constexpr double eps = 1e-16;
    double prev_fit = -std::numeric_limits<double>::infinity();
    using clock = std::chrono::steady_clock;

    for (int it = 0; it < stop.max_iters; ++it) {
        FfcpSweepRecord rec;
        rec.iteration = it + 1;
        rec.mode_seconds.resize(static_cast<std::size_t>(order));
        double res_sq = 0.0;

        for (Index n = 0; n < order; ++n) {
            const auto t0 = clock::now();
            const Matrix h = detail::ffcp_h(model.core, v, n);
            const Matrix& u = model.factors[static_cast<std::size_t>(n)];
            const Matrix q = u * h;  // YB estimate
            Matrix t = Matrix::Ones(rank, rank);
            for (Index p = 0; p < order; ++p)
                if (p != n) t.array() *= grams[static_cast<std::size_t>(p)].array();

            Matrix& a = result.model.factors[static_cast<std::size_t>(n)];
            switch (constraint.kind) {
                case ConstraintKind::none:
                    a = detail::solve_normal(q, t);
                    break;
                case ConstraintKind::nonneg_mu: {
                    const Matrix denom = (a * t).cwiseMax(eps);
                    a.array() *= q.cwiseMax(0.0).array() / denom.array();
                    break;
                }
                case ConstraintKind::nonneg_hals:
                    detail::hals_sweep(a, q, t, /*project=*/true);
                    break;
                case ConstraintKind::sparse:
                    a = soft_threshold(detail::solve_normal(q, t), constraint.sparsity_c);
                    break;
            }
            grams[static_cast<std::size_t>(n)] = a.transpose() * a;
            v[static_cast<std::size_t>(n)] = u.transpose() * a;
            rec.mode_seconds[static_cast<std::size_t>(n)] =
                std::chrono::duration<double>(clock::now() - t0).count();

            if (n == order - 1) {
                // <Y_T, [[A]]> = sum_r h_r . v_r^(n) with the refreshed V^(n)
                const double inner =
                    (h.array() * v[static_cast<std::size_t>(n)].array()).sum();
                const double model_sq =
                    (t.array() * grams[static_cast<std::size_t>(n)].array()).sum();
                res_sq = std::max(0.0, yt_sq - 2.0 * inner + model_sq);
            }
        }

        const double fit = 1.0 - std::sqrt(res_sq) / yt_norm;
        rec.fit = fit;
        result.fit_trace.push_back(fit);
        result.trace.push_back(std::move(rec));
        result.iterations = it + 1;
        if (std::abs(fit - prev_fit) < stop.fit_tol) break;
        prev_fit = fit;
    }
    detail::absorb_scales(result.model);
    return result;
}

/// Baseline two-stage route: CP-ALS on the core tensor alone, then expansion
/// of the small factors through the Tucker factors, A^(n) = U^(n) V^(n).
inline CpResult tucker_cp(const TuckerModel& model, Index rank, const StopRule& stop,
                          const SeedSpec& seed) {
    model.validate();
    CpResult core_cp = cp_als(model.core, rank, stop, seed);
    CpResult result;
    result.fit_trace = core_cp.fit_trace;
    result.iterations = core_cp.iterations;
    result.model.factors.resize(core_cp.model.factors.size());
    for (Index n = 0; n < model.order(); ++n)
        result.model.factors[static_cast<std::size_t>(n)] =
            model.factors[static_cast<std::size_t>(n)] *
            core_cp.model.factors[static_cast<std::size_t>(n)];
    return result;
}

}  // namespace tenkit
