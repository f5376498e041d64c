#pragma once

#include "tenkit/tensor.hpp"

#include <cmath>
#include <cstdint>

namespace tenkit {

namespace detail {

inline std::uint64_t mix64(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_combine(std::uint64_t a, std::uint64_t b) {
    return mix64(a ^ (mix64(b) + 0x9E3779B97F4A7C15ull + (a << 6) + (a >> 2)));
}

}  // namespace detail

/// Identifies one reproducible random stream. Identical (root, stream) pairs
/// produce identical draws regardless of host, thread count, or the order in
/// which sub-blocks are requested.
struct SeedSpec {
    std::uint64_t root   = 0;
    std::uint64_t stream = 0;

    SeedSpec with_stream(std::uint64_t s) const { return {root, s}; }

    /// Child stream obtained by hashing a tag into this stream.
    SeedSpec derived(std::uint64_t tag) const {
        return {root, detail::hash_combine(stream, tag)};
    }
    SeedSpec derived(std::uint64_t tag_a, std::uint64_t tag_b) const {
        return derived(tag_a).derived(tag_b);
    }

    std::uint64_t key() const { return detail::hash_combine(detail::mix64(root), stream); }
};

namespace detail {

inline std::uint64_t counter_bits(std::uint64_t key, std::uint64_t index) {
    // splitmix64 evaluated at an arbitrary counter position
    return mix64(key + index * 0x9E3779B97F4A7C15ull);
}

// uniform in (0, 1]
inline double counter_unit(std::uint64_t key, std::uint64_t index) {
    return static_cast<double>((counter_bits(key, index) >> 11) + 1) * 0x1.0p-53;
}

}  // namespace detail

/// Standard normal value at a fixed counter position of the stream. Entries
/// are pure functions of (seed, index), so any sub-block of a conceptual
/// larger draw can be regenerated independently.
inline double normal_at(const SeedSpec& seed, std::uint64_t index) {
    const std::uint64_t key = seed.key();
    const std::uint64_t pair = index >> 1;
    const double u1 = detail::counter_unit(key, 2 * pair);
    const double u2 = detail::counter_unit(key, 2 * pair + 1);
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925287 * u2;
    return (index & 1u) ? r * std::sin(angle) : r * std::cos(angle);
}

/// Uniform (0,1] value at a fixed counter position.
inline double uniform_at(const SeedSpec& seed, std::uint64_t index) {
    return detail::counter_unit(seed.key(), index);
}

/// Exponential value with the given mean at a fixed counter position.
inline double exponential_at(const SeedSpec& seed, std::uint64_t index, double mean) {
    return -mean * std::log(detail::counter_unit(seed.key(), index));
}

/// i.i.d. standard normal matrix, entries laid out column-major in counter
/// order; deterministic in SeedSpec.
inline Matrix gaussian_matrix(Index rows, Index cols, const SeedSpec& seed) {
    detail::require(rows >= 1 && cols >= 1, "gaussian_matrix: dimensions must be positive");
    Matrix m(rows, cols);
    const std::uint64_t key = seed.key();
    double* p = m.data();
    const std::uint64_t n = static_cast<std::uint64_t>(rows) * static_cast<std::uint64_t>(cols);
    for (std::uint64_t i = 0; i < n; i += 2) {
        const double u1 = detail::counter_unit(key, i);
        const double u2 = detail::counter_unit(key, i + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925287 * u2;
        p[i] = r * std::cos(angle);
        if (i + 1 < n) p[i + 1] = r * std::sin(angle);
    }
    return m;
}

/// Rows `row_ids` of the conceptual (total_rows x cols) Gaussian matrix drawn
/// from `seed`; equals gaussian_matrix(total_rows, cols, seed) restricted to
/// those rows.
inline Matrix gaussian_rows(Index total_rows, Index cols, const SeedSpec& seed,
                            const std::vector<Index>& row_ids) {
    Matrix m(static_cast<Index>(row_ids.size()), cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < m.rows(); ++i) {
            const std::uint64_t idx =
                static_cast<std::uint64_t>(j) * static_cast<std::uint64_t>(total_rows) +
                static_cast<std::uint64_t>(row_ids[static_cast<std::size_t>(i)]);
            m(i, j) = normal_at(seed, idx);
        }
    return m;
}

/// Entrywise |N(0,1)| matrix, used for nonnegative initializations.
inline Matrix nonneg_gaussian_matrix(Index rows, Index cols, const SeedSpec& seed) {
    return gaussian_matrix(rows, cols, seed).cwiseAbs();
}

/// Gaussian tensor with the given shape.
inline DenseTensor gaussian_tensor(const std::vector<Index>& shape, const SeedSpec& seed) {
    DenseTensor t(shape);
    const std::uint64_t key = seed.key();
    double* p = t.data();
    const std::uint64_t n = static_cast<std::uint64_t>(t.size());
    for (std::uint64_t i = 0; i < n; i += 2) {
        const double u1 = detail::counter_unit(key, i);
        const double u2 = detail::counter_unit(key, i + 1);
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double angle = 6.283185307179586476925287 * u2;
        p[i] = r * std::cos(angle);
        if (i + 1 < n) p[i + 1] = r * std::sin(angle);
    }
    return t;
}

}  // namespace tenkit
