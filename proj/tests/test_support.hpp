#pragma once

#include "tenkit/cp.hpp"
#include "tenkit/random.hpp"
#include "tenkit/tensor.hpp"
#include "tenkit/tucker.hpp"

#include <vector>

namespace tenkit::test {

/// Element-wise index-map oracle for the mode-n matricization: walks every
/// subscript tuple and places element (i_1..i_N) at row i_n, column
/// sum_{k != n} i_k * prod_{m<k, m != n} I_m. Independent of unfold().
inline Matrix oracle_unfold(const DenseTensor& t, Index mode) {
    const auto& shape = t.shape();
    const Index order = t.order();
    Index cols = 1;
    for (Index k = 0; k < order; ++k)
        if (k != mode) cols *= shape[static_cast<std::size_t>(k)];
    Matrix out(shape[static_cast<std::size_t>(mode)], cols);

    std::vector<Index> subs(static_cast<std::size_t>(order), 0);
    for (Index flat = 0; flat < t.size(); ++flat) {
        Index col = 0, stride = 1;
        for (Index k = 0; k < order; ++k) {
            if (k == mode) continue;
            col += subs[static_cast<std::size_t>(k)] * stride;
            stride *= shape[static_cast<std::size_t>(k)];
        }
        out(subs[static_cast<std::size_t>(mode)], col) = t[flat];
        for (Index k = 0; k < order; ++k) {
            if (++subs[static_cast<std::size_t>(k)] < shape[static_cast<std::size_t>(k)]) break;
            subs[static_cast<std::size_t>(k)] = 0;
        }
    }
    return out;
}

inline DenseTensor random_tensor(const std::vector<Index>& shape, std::uint64_t seed) {
    return gaussian_tensor(shape, SeedSpec{seed, 0});
}

/// Exact low-multilinear-rank tensor (Gaussian core and factors).
inline DenseTensor low_mlrank_tensor(const std::vector<Index>& dims,
                                     const std::vector<Index>& ranks, std::uint64_t seed) {
    TuckerModel m;
    m.core = gaussian_tensor(ranks, SeedSpec{seed, 1});
    m.factors.resize(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n)
        m.factors[n] = gaussian_matrix(dims[n], ranks[n],
                                       SeedSpec{seed, 2 + static_cast<std::uint64_t>(n)});
    return reconstruct(m);
}

/// Exact CP tensor with Gaussian factors.
inline CpModel random_cp_model(const std::vector<Index>& dims, Index rank, std::uint64_t seed) {
    CpModel m;
    m.factors.resize(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n)
        m.factors[n] = gaussian_matrix(dims[n], rank,
                                       SeedSpec{seed, 10 + static_cast<std::uint64_t>(n)});
    return m;
}

inline double max_abs_diff(const Matrix& a, const Matrix& b) {
    return (a - b).cwiseAbs().maxCoeff();
}

inline double rel_err(const Matrix& a, const Matrix& b) {
    return (a - b).norm() / std::max(1e-300, b.norm());
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases, computed from the projection residual so tiny angles
/// keep full precision: sin(theta_max) = ||(I - Qa Qa^T) Qb||_2.
inline double max_principal_angle(const Matrix& qa, const Matrix& qb) {
    const Matrix resid = qb - qa * (qa.transpose() * qb);
    Eigen::BDCSVD<Matrix> svd(resid);
    const double s = svd.singularValues().size() > 0 ? svd.singularValues()(0) : 0.0;
    return std::asin(std::min(1.0, s));
}

}  // namespace tenkit::test
