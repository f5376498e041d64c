#include "test_support.hpp"

#include "tenkit/tensor.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tenkit;
using namespace tenkit::test;

TEST_CASE("unfold matches the worked 2x2x2 example", "[tensor]") {
    DenseTensor t({2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});

    Matrix m0 = unfold(t, 0);
    Matrix e0(2, 4);
    e0 << 1, 3, 5, 7, 2, 4, 6, 8;
    REQUIRE(max_abs_diff(m0, e0) == 0.0);

    Matrix m1 = unfold(t, 1);
    Matrix e1(2, 4);
    e1 << 1, 2, 5, 6, 3, 4, 7, 8;
    REQUIRE(max_abs_diff(m1, e1) == 0.0);
}

TEST_CASE("unfold of an order-1 tensor is a column", "[tensor]") {
    DenseTensor t({3}, {4, 5, 6});
    Matrix m = unfold(t, 0);
    REQUIRE(m.rows() == 3);
    REQUIRE(m.cols() == 1);
    REQUIRE(m(1, 0) == 5.0);
}

TEST_CASE("unfold agrees with the index-map oracle", "[tensor]") {
    const std::vector<std::vector<Index>> shapes = {{4}, {3, 5}, {3, 4, 2}, {2, 3, 2, 4},
                                                    {2, 2, 3, 2, 2}};
    for (std::uint64_t s = 0; s < shapes.size(); ++s) {
        DenseTensor t = random_tensor(shapes[s], 100 + s);
        for (Index n = 0; n < t.order(); ++n)
            REQUIRE(max_abs_diff(unfold(t, n), oracle_unfold(t, n)) == 0.0);
    }
}

TEST_CASE("fold inverts unfold bit-exactly", "[tensor]") {
    const std::vector<std::vector<Index>> shapes = {{3, 4, 5}, {2, 3, 2, 4}, {2, 2, 3, 2, 2}};
    for (std::uint64_t s = 0; s < shapes.size(); ++s) {
        DenseTensor t = random_tensor(shapes[s], 200 + s);
        for (Index n = 0; n < t.order(); ++n) {
            DenseTensor back = fold(unfold(t, n), n, t.shape());
            REQUIRE(back.storage() == t.storage());
        }
    }
}

TEST_CASE("fold of a matrix with its own shape is the matrix", "[tensor]") {
    Matrix m(2, 3);
    m << 1, 2, 3, 4, 5, 6;
    DenseTensor t = fold(m, 0, {2, 3});
    REQUIRE(t.at({0, 1}) == 2.0);
    REQUIRE(t.at({1, 2}) == 6.0);
}

TEST_CASE("ttm with identity is the identity", "[tensor]") {
    DenseTensor t = random_tensor({3, 4, 2}, 7);
    for (Index n = 0; n < 3; ++n) {
        DenseTensor r = ttm(t, Matrix::Identity(t.dim(n), t.dim(n)), n);
        REQUIRE(max_abs_diff(unfold(r, 0), unfold(t, 0)) == 0.0);
    }
}

TEST_CASE("ttm satisfies the unfold-product identity", "[tensor]") {
    DenseTensor t = random_tensor({3, 4, 2}, 8);
    for (Index n = 0; n < 3; ++n) {
        Matrix m = gaussian_matrix(5, t.dim(n), SeedSpec{9, static_cast<std::uint64_t>(n)});
        DenseTensor r = ttm(t, m, n);
        REQUIRE(rel_err(unfold(r, n), m * unfold(t, n)) < 1e-12);
    }
}

TEST_CASE("ttm hand example: ones contraction", "[tensor]") {
    DenseTensor t({2, 2}, {1, 1, 1, 1});
    Matrix ones = Matrix::Ones(1, 2);
    DenseTensor r = ttm(t, ones, 0);
    REQUIRE(r.shape() == std::vector<Index>{1, 2});
    REQUIRE(r[0] == 2.0);
    REQUIRE(r[1] == 2.0);
}

TEST_CASE("unfold_times and unfold_gram avoid materialization but agree", "[tensor]") {
    DenseTensor t = random_tensor({4, 3, 5}, 11);
    for (Index n = 0; n < 3; ++n) {
        Matrix b = gaussian_matrix(t.size() / t.dim(n), 6, SeedSpec{12, static_cast<std::uint64_t>(n)});
        REQUIRE(rel_err(unfold_times(t, n, b), unfold(t, n) * b) < 1e-13);
        Matrix u = unfold(t, n);
        REQUIRE(rel_err(unfold_gram(t, n), u * u.transpose()) < 1e-13);
    }
}

TEST_CASE("kron basics", "[tensor]") {
    REQUIRE(max_abs_diff(kron(Matrix::Identity(2, 2), Matrix::Identity(2, 2)),
                         Matrix::Identity(4, 4)) == 0.0);

    Matrix a(1, 2), b(1, 2), e(1, 4);
    a << 1, 2;
    b << 3, 4;
    e << 3, 4, 6, 8;
    REQUIRE(max_abs_diff(kron(a, b), e) == 0.0);

    Matrix c = gaussian_matrix(3, 2, SeedSpec{13, 0});
    Matrix two(1, 1);
    two << 2;
    REQUIRE(max_abs_diff(kron(c, two), 2 * c) == 0.0);
}

TEST_CASE("khatri_rao basics and per-column oracle", "[tensor]") {
    Matrix a = gaussian_matrix(3, 2, SeedSpec{14, 0});
    REQUIRE(max_abs_diff(khatri_rao({a}), a) == 0.0);

    Matrix x(2, 1), y(2, 1);
    x << 1, 2;
    y << 3, 4;
    Matrix kr = khatri_rao({x, y});
    REQUIRE(kr.rows() == 4);
    REQUIRE(kr(0, 0) == 3.0);
    REQUIRE(kr(1, 0) == 4.0);
    REQUIRE(kr(2, 0) == 6.0);
    REQUIRE(kr(3, 0) == 8.0);

    Matrix b = gaussian_matrix(4, 2, SeedSpec{14, 1});
    Matrix full = khatri_rao({a, b});
    for (Index r = 0; r < 2; ++r) {
        Matrix col = kron(a.col(r), b.col(r));
        REQUIRE(max_abs_diff(full.col(r), col) == 0.0);
    }

    Matrix bad = gaussian_matrix(4, 3, SeedSpec{14, 2});
    REQUIRE_THROWS_AS(khatri_rao({a, bad}), std::invalid_argument);
}

TEST_CASE("gram_hadamard equals the explicit Khatri-Rao Gram", "[tensor]") {
    std::vector<Matrix> factors = {gaussian_matrix(4, 3, SeedSpec{15, 0}),
                                   gaussian_matrix(5, 3, SeedSpec{15, 1}),
                                   gaussian_matrix(3, 3, SeedSpec{15, 2})};
    for (Index skip = 0; skip < 3; ++skip) {
        std::vector<Matrix> rest;
        for (Index p = 0; p < 3; ++p)
            if (p != skip) rest.push_back(factors[static_cast<std::size_t>(p)]);
        Matrix b = khatri_rao(rest);
        REQUIRE(rel_err(gram_hadamard(factors, skip), b.transpose() * b) < 1e-12);
    }
}

TEST_CASE("gram_hadamard of orthonormal factors is the identity", "[tensor]") {
    std::vector<Matrix> factors;
    for (std::uint64_t n = 0; n < 3; ++n) {
        Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(8, 3, SeedSpec{16, n}));
        factors.push_back(Matrix(qr.householderQ() * Matrix::Identity(8, 3)));
    }
    REQUIRE(max_abs_diff(gram_hadamard(factors, 2).topLeftCorner(3, 3).eval(),
                         Matrix::Identity(3, 3)) < 1e-12);
}

TEST_CASE("gram_hadamard with a single non-skipped factor", "[tensor]") {
    std::vector<Matrix> factors = {gaussian_matrix(4, 2, SeedSpec{17, 0}),
                                   gaussian_matrix(5, 2, SeedSpec{17, 1})};
    Matrix expected = factors[0].transpose() * factors[0];
    REQUIRE(rel_err(gram_hadamard(factors, 1), expected) < 1e-13);
}

TEST_CASE("fit basics", "[tensor]") {
    DenseTensor y = random_tensor({3, 3}, 18);
    REQUIRE(fit(y, y) == Catch::Approx(1.0));

    DenseTensor zero({3, 3});
    REQUIRE(fit(y, zero) == Catch::Approx(0.0));

    DenseTensor a({2}, {3, 4});
    DenseTensor b({2}, {3, 0});
    REQUIRE(fit(a, b) == Catch::Approx(0.2));

    REQUIRE_THROWS_AS(fit(zero, y), std::invalid_argument);
}

TEST_CASE("constructor invariants", "[tensor]") {
    REQUIRE_THROWS_AS(DenseTensor({2, 3}, {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(DenseTensor({0, 3}), std::invalid_argument);
    REQUIRE_THROWS_AS(DenseTensor(std::vector<Index>{}), std::invalid_argument);
    REQUIRE_THROWS_AS(unfold(DenseTensor({2, 2}), 2), std::invalid_argument);
}
