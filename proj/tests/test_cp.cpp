#include "test_support.hpp"

#include "tenkit/cp.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tenkit;
using namespace tenkit::test;

namespace {

// least-squares objective J = 1/2 ||Y - [[A]]||_F^2 evaluated densely
double objective(const DenseTensor& y, const CpModel& model) {
    DenseTensor yhat = cp_reconstruct(model);
    double sq = 0.0;
    for (Index i = 0; i < y.size(); ++i) sq += (y[i] - yhat[i]) * (y[i] - yhat[i]);
    return 0.5 * sq;
}

DenseTensor exact_rank1_nonneg(const std::vector<Index>& dims, std::uint64_t seed) {
    CpModel m;
    m.factors.resize(dims.size());
    for (std::size_t n = 0; n < dims.size(); ++n)
        m.factors[n] = nonneg_gaussian_matrix(dims[n], 1, SeedSpec{seed, n}).array() + 0.1;
    return cp_reconstruct(m);
}

DenseTensor clamp_y(DenseTensor t) {
    t.array() = t.array().max(0.0);
    return t;
}

}  // namespace

TEST_CASE("cp_reconstruct basics", "[cp]") {
    CpModel ones;
    ones.factors = {Matrix::Ones(2, 1), Matrix::Ones(3, 1), Matrix::Ones(2, 1)};
    DenseTensor t = cp_reconstruct(ones);
    REQUIRE(t.array().minCoeff() == 1.0);
    REQUIRE(t.array().maxCoeff() == 1.0);

    CpModel two;
    two.factors = {gaussian_matrix(4, 2, SeedSpec{40, 0}), gaussian_matrix(3, 2, SeedSpec{40, 1})};
    REQUIRE(rel_err(unfold(cp_reconstruct(two), 0), two.factors[0] * two.factors[1].transpose()) <
            1e-13);

    CpModel zero;
    zero.factors = {Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
    REQUIRE(frobenius_norm(cp_reconstruct(zero)) == 0.0);
}

TEST_CASE("unfolding identity locks the Khatri-Rao order convention", "[cp]") {
    CpModel m = random_cp_model({4, 3, 5, 2}, 3, 41);
    DenseTensor y = cp_reconstruct(m);
    for (Index n = 0; n < 4; ++n) {
        Matrix b = khatri_rao(detail::b_factors(m.factors, n));
        REQUIRE(rel_err(unfold(y, n), m.factors[static_cast<std::size_t>(n)] * b.transpose()) <
                1e-12);
    }
}

TEST_CASE("gradient vanishes at an exact fit", "[cp]") {
    CpModel m = random_cp_model({5, 4, 3}, 2, 42);
    DenseTensor y = cp_reconstruct(m);
    for (Index n = 0; n < 3; ++n) {
        auto [yb, btb] = gradient_terms(y, m.factors, n);
        Matrix grad = m.factors[static_cast<std::size_t>(n)] * btb - yb;
        REQUIRE(grad.cwiseAbs().maxCoeff() < 1e-10 * yb.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("gradient_terms matches the explicit Khatri-Rao construction", "[cp]") {
    DenseTensor y = random_tensor({4, 3, 2}, 43);
    auto factors = random_cp_model({4, 3, 2}, 2, 44).factors;
    for (Index n = 0; n < 3; ++n) {
        auto [yb, btb] = gradient_terms(y, factors, n);
        Matrix b = khatri_rao(detail::b_factors(factors, n));
        REQUIRE(rel_err(yb, unfold(y, n) * b) < 1e-12);
        REQUIRE(rel_err(btb, b.transpose() * b) < 1e-12);
    }
}

TEST_CASE("gradient_terms agrees with central finite differences", "[cp]") {
    DenseTensor y = random_tensor({4, 3, 3}, 45);
    auto factors = random_cp_model({4, 3, 3}, 2, 46).factors;
    const Index mode = 1;
    auto [yb, btb] = gradient_terms(y, factors, mode);
    Matrix grad = factors[mode] * btb - yb;

    Matrix direction = gaussian_matrix(3, 2, SeedSpec{47, 0});
    direction /= direction.norm();
    const double analytic = (grad.array() * direction.array()).sum();

    const double h = 1e-6;
    CpModel plus, minus;
    plus.factors = factors;
    minus.factors = factors;
    plus.factors[mode] += h * direction;
    minus.factors[mode] -= h * direction;
    const double numeric = (objective(y, plus) - objective(y, minus)) / (2 * h);

    REQUIRE(std::abs(analytic - numeric) < 1e-5 * std::max(1.0, std::abs(analytic)));
}

TEST_CASE("cp_als recovers an exact rank-1 tensor", "[cp]") {
    CpModel truth;
    truth.factors = {gaussian_matrix(6, 1, SeedSpec{48, 0}), gaussian_matrix(5, 1, SeedSpec{48, 1}),
                     gaussian_matrix(4, 1, SeedSpec{48, 2})};
    DenseTensor y = cp_reconstruct(truth);
    CpResult res = cp_als(y, 1, {50, 1e-12}, SeedSpec{49, 0});
    REQUIRE(res.fit_trace.back() > 1.0 - 1e-8);
    REQUIRE(res.iterations <= 50);
}

TEST_CASE("cp_als is deterministic under a fixed seed", "[cp]") {
    DenseTensor y = random_tensor({6, 6, 6}, 50);
    CpResult a = cp_als(y, 3, {20, 0.0}, SeedSpec{51, 0});
    CpResult b = cp_als(y, 3, {20, 0.0}, SeedSpec{51, 0});
    for (std::size_t n = 0; n < 3; ++n) REQUIRE(a.model.factors[n] == b.model.factors[n]);
}

TEST_CASE("cp_als fit trace is non-decreasing on a well-conditioned instance", "[cp]") {
    DenseTensor y = cp_reconstruct(random_cp_model({8, 7, 6}, 3, 52));
    CpResult res = cp_als(y, 3, {40, 0.0}, SeedSpec{53, 0});
    for (std::size_t i = 1; i < res.fit_trace.size(); ++i)
        REQUIRE(res.fit_trace[i] >= res.fit_trace[i - 1] - 1e-9);
}

TEST_CASE("cp_als scale convention: unit columns except the last factor", "[cp]") {
    DenseTensor y = random_tensor({5, 5, 5}, 54);
    CpResult res = cp_als(y, 2, {10, 0.0}, SeedSpec{55, 0});
    for (std::size_t n = 0; n + 1 < 3; ++n)
        for (Index r = 0; r < 2; ++r)
            REQUIRE(res.model.factors[n].col(r).norm() == Catch::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("cp_mu rejects negative tensors", "[cp]") {
    DenseTensor y({2, 2}, {1.0, -0.5, 2.0, 3.0});
    REQUIRE_THROWS_AS(cp_mu(y, 1, {10, 0.0}, SeedSpec{56, 0}), std::invalid_argument);
}

TEST_CASE("cp_mu recovers an exact nonnegative rank-1 tensor", "[cp]") {
    DenseTensor y = exact_rank1_nonneg({6, 5, 4}, 57);
    CpResult res = cp_mu(y, 1, {300, 1e-12}, SeedSpec{58, 0});
    REQUIRE(res.fit_trace.back() > 1.0 - 1e-4);
}

TEST_CASE("cp_mu objective is non-increasing sweep by sweep", "[cp]") {
    DenseTensor y = clamp_y(random_tensor({8, 7, 6}, 59));
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 12; ++k) {
        CpResult res = cp_mu(y, 3, {k, 0.0}, SeedSpec{60, 0});
        const double j = objective(y, res.model);
        REQUIRE(j <= prev + 1e-9 * std::max(1.0, prev));
        prev = j;
    }
}

TEST_CASE("cp_mu drives factor rows of a zero slice to zero", "[cp]") {
    DenseTensor y = exact_rank1_nonneg({5, 4, 3}, 61);
    // zero out the slice i_1 = 2
    for (Index j = 0; j < y.size() / y.dim(0); ++j) y[2 + j * y.dim(0)] = 0.0;
    CpResult res = cp_mu(y, 2, {50, 0.0}, SeedSpec{62, 0});
    REQUIRE(res.model.factors[0].row(2).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cp_mu and cp_hals keep factors nonnegative after every sweep", "[cp]") {
    DenseTensor y = exact_rank1_nonneg({6, 6, 6}, 63);
    for (int k : {1, 2, 3, 5, 8}) {
        CpResult mu = cp_mu(y, 2, {k, 0.0}, SeedSpec{64, 0});
        CpResult hals = cp_hals(y, 2, {k, 0.0}, SeedSpec{64, 1});
        for (const Matrix& a : mu.model.factors) REQUIRE(a.minCoeff() >= 0.0);
        for (const Matrix& a : hals.model.factors) REQUIRE(a.minCoeff() >= 0.0);
    }
}

TEST_CASE("cp_hals recovers an exact nonnegative rank-1 tensor", "[cp]") {
    DenseTensor y = exact_rank1_nonneg({6, 5, 4}, 65);
    CpResult res = cp_hals(y, 1, {100, 1e-12}, SeedSpec{66, 0});
    REQUIRE(res.fit_trace.back() > 1.0 - 1e-6);
}

TEST_CASE("cp_hals without projection solves the unconstrained problem", "[cp]") {
    DenseTensor y = cp_reconstruct(random_cp_model({7, 6, 5}, 2, 67));
    CpResult res = cp_hals(y, 2, {200, 1e-13}, SeedSpec{68, 0}, /*project=*/false);
    REQUIRE(res.fit_trace.back() > 1.0 - 1e-6);
}
