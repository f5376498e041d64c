#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tenkit {

using Index  = Eigen::Index;
using Matrix = Eigen::MatrixXd;  // column-major
using Vector = Eigen::VectorXd;

namespace detail {

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument("tenkit: " + msg);
}

inline Index shape_product(const std::vector<Index>& shape) {
    return std::accumulate(shape.begin(), shape.end(), Index{1},
                           [](Index a, Index b) { return a * b; });
}

}  // namespace detail

/// Dense N-way array, column-major (first index varies fastest).
class DenseTensor {
public:
    DenseTensor() = default;

    explicit DenseTensor(std::vector<Index> shape)
        : shape_(std::move(shape)), data_(check_shape(shape_), 0.0) {}

    DenseTensor(std::vector<Index> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        detail::require(static_cast<Index>(data_.size()) == check_shape(shape_),
                        "tensor data length does not match shape");
    }

    static DenseTensor from_matrix(const Matrix& m) {
        DenseTensor t({m.rows(), m.cols()});
        Eigen::Map<Matrix>(t.data(), m.rows(), m.cols()) = m;
        return t;
    }

    Index order() const { return static_cast<Index>(shape_.size()); }
    const std::vector<Index>& shape() const { return shape_; }
    Index dim(Index mode) const { return shape_.at(static_cast<std::size_t>(mode)); }
    Index size() const { return static_cast<Index>(data_.size()); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& storage() { return data_; }
    const std::vector<double>& storage() const { return data_; }

    double operator[](Index i) const { return data_[static_cast<std::size_t>(i)]; }
    double& operator[](Index i) { return data_[static_cast<std::size_t>(i)]; }

    /// Element access by subscript, e.g. t.at({i, j, k}).
    double at(const std::vector<Index>& subs) const { return data_[flat_index(subs)]; }
    double& at(const std::vector<Index>& subs) { return data_[flat_index(subs)]; }

    bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

    Eigen::Map<const Eigen::ArrayXd> array() const {
        return {data_.data(), static_cast<Index>(data_.size())};
    }
    Eigen::Map<Eigen::ArrayXd> array() {
        return {data_.data(), static_cast<Index>(data_.size())};
    }

private:
    static Index check_shape(const std::vector<Index>& shape) {
        detail::require(!shape.empty(), "tensor order must be at least 1");
        for (Index d : shape) detail::require(d >= 1, "tensor dimensions must be positive");
        return detail::shape_product(shape);
    }

    std::size_t flat_index(const std::vector<Index>& subs) const {
        detail::require(subs.size() == shape_.size(), "subscript order mismatch");
        Index flat = 0, stride = 1;
        for (std::size_t k = 0; k < shape_.size(); ++k) {
            detail::require(subs[k] >= 0 && subs[k] < shape_[k], "subscript out of range");
            flat += subs[k] * stride;
            stride *= shape_[k];
        }
        return static_cast<std::size_t>(flat);
    }

    std::vector<Index> shape_;
    std::vector<double> data_;
};

namespace detail {

/// Dimensions of the (P, I_n, Q) slab view used by the mode-n kernels:
/// P = product of modes before n, Q = product of modes after n.
struct SlabDims {
    Index before;  // P
    Index mode;    // I_n
    Index after;   // Q
};

inline SlabDims slab_dims(const std::vector<Index>& shape, Index mode) {
    require(mode >= 0 && mode < static_cast<Index>(shape.size()), "mode index out of range");
    SlabDims d{1, shape[static_cast<std::size_t>(mode)], 1};
    for (Index k = 0; k < mode; ++k) d.before *= shape[static_cast<std::size_t>(k)];
    for (Index k = mode + 1; k < static_cast<Index>(shape.size()); ++k)
        d.after *= shape[static_cast<std::size_t>(k)];
    return d;
}

}  // namespace detail

/// Mode-n matricization. Row = i_n; column = remaining subscripts packed in
/// ascending mode order with the lowest mode varying fastest, i.e. element
/// (i_1..i_N) lands in column sum_{k != n} i_k * prod_{m<k, m != n} I_m.
inline Matrix unfold(const DenseTensor& t, Index mode) {
    const auto d = detail::slab_dims(t.shape(), mode);
    Matrix out(d.mode, d.before * d.after);
    const double* src = t.data();
    for (Index q = 0; q < d.after; ++q) {
        // slab q is a contiguous (P x I_n) column-major block
        Eigen::Map<const Matrix> slab(src + q * d.before * d.mode, d.before, d.mode);
        out.middleCols(q * d.before, d.before) = slab.transpose();
    }
    return out;
}

/// Inverse of unfold: fold(unfold(T, n), n, T.shape()) == T exactly.
inline DenseTensor fold(const Matrix& m, Index mode, const std::vector<Index>& shape) {
    const auto d = detail::slab_dims(shape, mode);
    detail::require(m.rows() == d.mode && m.cols() == d.before * d.after,
                    "matrix dimensions inconsistent with target shape");
    DenseTensor t(shape);
    double* dst = t.data();
    for (Index q = 0; q < d.after; ++q) {
        Eigen::Map<Matrix> slab(dst + q * d.before * d.mode, d.before, d.mode);
        slab = m.middleCols(q * d.before, d.before).transpose();
    }
    return t;
}

/// Mode-n tensor-matrix product: replaces I_n by M.rows();
/// unfold(result, n) == M * unfold(T, n).
inline DenseTensor ttm(const DenseTensor& t, const Matrix& m, Index mode) {
    const auto d = detail::slab_dims(t.shape(), mode);
    detail::require(m.cols() == d.mode, "ttm: matrix columns must match mode dimension");
    std::vector<Index> out_shape = t.shape();
    out_shape[static_cast<std::size_t>(mode)] = m.rows();
    DenseTensor out(out_shape);

    if (mode == 0) {
        Eigen::Map<const Matrix> src(t.data(), d.mode, d.after);
        Eigen::Map<Matrix> dst(out.data(), m.rows(), d.after);
        dst.noalias() = m * src;
        return out;
    }
    if (d.after == 1) {
        Eigen::Map<const Matrix> src(t.data(), d.before, d.mode);
        Eigen::Map<Matrix> dst(out.data(), d.before, m.rows());
        dst.noalias() = src * m.transpose();
        return out;
    }
    for (Index q = 0; q < d.after; ++q) {
        Eigen::Map<const Matrix> src(t.data() + q * d.before * d.mode, d.before, d.mode);
        Eigen::Map<Matrix> dst(out.data() + q * d.before * m.rows(), d.before, m.rows());
        dst.noalias() = src * m.transpose();
    }
    return out;
}

/// Applies one matrix per mode (skipping `skip` if >= 0) in ascending mode
/// order. With transpose=true each factor is applied transposed, which is the
/// usual projection onto factor subspaces.
inline DenseTensor ttm_all(const DenseTensor& t, const std::vector<Matrix>& ms,
                           Index skip = -1, bool transpose = false) {
    detail::require(static_cast<Index>(ms.size()) == t.order(),
                    "ttm_all: one matrix per mode required");
    DenseTensor cur = t;
    for (Index n = 0; n < t.order(); ++n) {
        if (n == skip) continue;
        const Matrix& m = ms[static_cast<std::size_t>(n)];
        cur = transpose ? ttm(cur, m.transpose(), n) : ttm(cur, m, n);
    }
    return cur;
}

/// unfold(T, n) * B without materializing the unfolding.
inline Matrix unfold_times(const DenseTensor& t, Index mode, const Matrix& b) {
    const auto d = detail::slab_dims(t.shape(), mode);
    detail::require(b.rows() == d.before * d.after,
                    "unfold_times: B rows must match unfolding width");
    if (mode == 0) {
        Eigen::Map<const Matrix> src(t.data(), d.mode, d.after);
        return src * b;
    }
    Matrix z = Matrix::Zero(d.mode, b.cols());
    for (Index q = 0; q < d.after; ++q) {
        Eigen::Map<const Matrix> slab(t.data() + q * d.before * d.mode, d.before, d.mode);
        z.noalias() += slab.transpose() * b.middleRows(q * d.before, d.before);
    }
    return z;
}

/// unfold(T, n) * unfold(T, n)^T without materializing the unfolding.
inline Matrix unfold_gram(const DenseTensor& t, Index mode) {
    const auto d = detail::slab_dims(t.shape(), mode);
    Matrix g = Matrix::Zero(d.mode, d.mode);
    if (mode == 0) {
        Eigen::Map<const Matrix> src(t.data(), d.mode, d.after);
        g.selfadjointView<Eigen::Lower>().rankUpdate(src);
    } else {
        for (Index q = 0; q < d.after; ++q) {
            Eigen::Map<const Matrix> slab(t.data() + q * d.before * d.mode, d.before, d.mode);
            g.selfadjointView<Eigen::Lower>().rankUpdate(slab.transpose());
        }
    }
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    return g;
}

/// Kronecker product, (A.rows*B.rows) x (A.cols*B.cols), B index fastest.
inline Matrix kron(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Index j = 0; j < a.cols(); ++j)
        for (Index i = 0; i < a.rows(); ++i)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

/// Column-wise Kronecker product in list order: column r of the result is
/// kron(ms[0].col(r), ..., ms.back().col(r)), so later list entries vary
/// fastest.
inline Matrix khatri_rao(const std::vector<Matrix>& ms) {
    detail::require(!ms.empty(), "khatri_rao: empty factor list");
    const Index r = ms.front().cols();
    for (const Matrix& m : ms)
        detail::require(m.cols() == r, "khatri_rao: column-count mismatch");
    Matrix acc = ms.front();
    for (std::size_t p = 1; p < ms.size(); ++p) {
        const Matrix& next = ms[p];
        Matrix out(acc.rows() * next.rows(), r);
        for (Index c = 0; c < r; ++c)
            out.col(c).reshaped(next.rows(), acc.rows()).noalias() =
                next.col(c) * acc.col(c).transpose();
        acc = std::move(out);
    }
    return acc;
}

/// Hadamard product of the factor Grams A^(p)^T A^(p) over all p != skip.
/// Equals B^T B for the matching Khatri-Rao matrix B.
inline Matrix gram_hadamard(const std::vector<Matrix>& factors, Index skip) {
    detail::require(!factors.empty(), "gram_hadamard: empty factor list");
    const Index r = factors.front().cols();
    for (const Matrix& m : factors)
        detail::require(m.cols() == r, "gram_hadamard: column-count mismatch");
    Matrix out = Matrix::Ones(r, r);
    for (Index p = 0; p < static_cast<Index>(factors.size()); ++p) {
        if (p == skip) continue;
        const Matrix& a = factors[static_cast<std::size_t>(p)];
        out.array() *= (a.transpose() * a).array();
    }
    return out;
}

inline double frobenius_norm(const DenseTensor& t) {
    return Eigen::Map<const Vector>(t.data(), t.size()).norm();
}

inline double squared_norm(const DenseTensor& t) {
    return Eigen::Map<const Vector>(t.data(), t.size()).squaredNorm();
}

/// Fit = 1 - ||Y - Yhat||_F / ||Y||_F. Undefined (throws) for ||Y||_F = 0.
inline double fit(const DenseTensor& y, const DenseTensor& yhat) {
    detail::require(y.same_shape(yhat), "fit: shape mismatch");
    const double ny = frobenius_norm(y);
    detail::require(ny > 0.0, "fit: reference tensor has zero norm");
    const double res = (Eigen::Map<const Vector>(y.data(), y.size()) -
                        Eigen::Map<const Vector>(yhat.data(), yhat.size()))
                           .norm();
    return 1.0 - res / ny;
}

}  // namespace tenkit
