#include "test_support.hpp"

#include "tenkit/range_finder.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace tenkit;
using namespace tenkit::test;

TEST_CASE("orthonormal_basis of an orthonormal input keeps the range", "[range_finder]") {
    Eigen::HouseholderQR<Matrix> qr(gaussian_matrix(12, 4, SeedSpec{1, 0}));
    Matrix z = qr.householderQ() * Matrix::Identity(12, 4);
    Matrix q = orthonormal_basis(z);
    REQUIRE(q.cols() == 4);
    REQUIRE(max_abs_diff(q.transpose() * q, Matrix::Identity(4, 4)) < 1e-12);
    REQUIRE((z * z.transpose() - q * q.transpose()).norm() < 1e-10);
}

TEST_CASE("orthonormal_basis drops deficient columns", "[range_finder]") {
    Matrix z = Matrix::Zero(5, 2);
    z(0, 0) = 1.0;
    z(0, 1) = 2.0;  // second column is a multiple of the first
    Matrix q = orthonormal_basis(z);
    REQUIRE(q.cols() == 1);
    REQUIRE(std::abs(std::abs(q(0, 0)) - 1.0) < 1e-14);

    Matrix zero = Matrix::Zero(6, 3);
    REQUIRE(orthonormal_basis(zero).cols() == 0);
}

TEST_CASE("orthonormal_basis projection residual vanishes", "[range_finder]") {
    Matrix z = gaussian_matrix(50, 5, SeedSpec{2, 0});
    Matrix q = orthonormal_basis(z);
    REQUIRE((z - q * (q.transpose() * z)).norm() < 1e-10);
}

TEST_CASE("range_finder captures an exact-rank matrix", "[range_finder]") {
    const Index rank = 6;
    Matrix m = gaussian_matrix(40, rank, SeedSpec{3, 0}) *
               gaussian_matrix(rank, 60, SeedSpec{3, 1});
    Matrix q = range_finder(m, rank + 10, SeedSpec{3, 2});
    REQUIRE((m - q * (q.transpose() * m)).norm() / m.norm() < 1e-10);
}

TEST_CASE("range_finder of the zero matrix has effective rank 0", "[range_finder]") {
    Matrix q = range_finder(Matrix::Zero(10, 8), 3, SeedSpec{4, 0});
    REQUIRE(q.cols() == 0);
}

TEST_CASE("range_finder residual is within 2x of truncated SVD", "[range_finder]") {
    // noisy low-rank instance
    const Index rank = 4;
    Matrix m = gaussian_matrix(30, rank, SeedSpec{5, 0}) *
                   gaussian_matrix(rank, 25, SeedSpec{5, 1}) +
               0.01 * gaussian_matrix(30, 25, SeedSpec{5, 2});
    Eigen::BDCSVD<Matrix> svd(m, Eigen::ComputeThinU);
    Matrix u_r = svd.matrixU().leftCols(rank);
    const double svd_res = (m - u_r * (u_r.transpose() * m)).norm();

    // default oversampling p = 10
    Matrix q = range_finder(m, rank + 10, SeedSpec{5, 3});
    const double rrf_res = (m - q * (q.transpose() * m)).norm();
    REQUIRE(rrf_res < 2.0 * svd_res + 1e-12);
}

TEST_CASE("gram_orthonormalize stacks to an orthonormal basis", "[range_finder]") {
    Matrix z = gaussian_matrix(40, 5, SeedSpec{6, 0});
    auto single = gram_orthonormalize({z});
    REQUIRE(single.blocks.size() == 1);
    const Matrix& q = single.blocks[0];
    REQUIRE(max_abs_diff(q.transpose() * q, Matrix::Identity(5, 5)) < 1e-10);

    auto split = gram_orthonormalize({z.topRows(15), z.bottomRows(25)});
    Matrix stacked(40, split.blocks[0].cols());
    stacked << split.blocks[0], split.blocks[1];
    REQUIRE(max_abs_diff(stacked.transpose() * stacked,
                         Matrix::Identity(stacked.cols(), stacked.cols())) < 1e-10);

    // same range as the unsplit direct orthonormalization
    Matrix q_direct = orthonormal_basis(z);
    REQUIRE(max_principal_angle(q_direct, stacked) < 1e-8);
}

TEST_CASE("gram_orthonormalize rejects all-zero blocks", "[range_finder]") {
    std::vector<Matrix> zs = {Matrix::Zero(4, 2), Matrix::Zero(6, 2)};
    REQUIRE_THROWS_AS(gram_orthonormalize(zs), std::invalid_argument);
}

TEST_CASE("gram_orthonormalize drops deficient directions", "[range_finder]") {
    Matrix base = gaussian_matrix(20, 2, SeedSpec{7, 0});
    Matrix z(20, 3);
    z << base.col(0), base.col(1), base.col(0) + base.col(1);
    auto res = gram_orthonormalize({z});
    REQUIRE(res.blocks[0].cols() == 2);
    REQUIRE(res.spectrum.size() == 2);
}
