#include <doctest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "tsink/linalg.hpp"

using namespace tsink;

TEST_CASE("matmul variants agree with the triple loop") {
    std::mt19937_64 gen(11);
    for (auto [n, k, m] : {std::tuple{1, 1, 1}, {3, 5, 2}, {7, 4, 9}, {64, 48, 40}}) {
        const Matrix a = oracle::random_matrix(n, k, gen);
        const Matrix b = oracle::random_matrix(k, m, gen);
        const Matrix ref = oracle::triple_loop(a, b);
        CHECK(oracle::max_abs_diff(matmul(a, b), ref) < 1e-12);
        CHECK(oracle::max_abs_diff(matmul_nt(a, oracle::transpose(b)), ref) < 1e-12);
        CHECK(oracle::max_abs_diff(matmul_tn(oracle::transpose(a), b), ref) < 1e-12);
        CHECK(matmul(a, b) == serial::matmul(a, b));
    }
}

TEST_CASE("matmul rejects mismatched shapes") {
    CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
    CHECK_THROWS_AS(matmul_nt(Matrix(2, 3), Matrix(2, 4)), ShapeError);
    CHECK_THROWS_AS(Matrix(2, 2) += Matrix(2, 3), ShapeError);
}

TEST_CASE("matvec and matvec_t") {
    const Matrix a = Matrix::from_rows(2, 3, {1, 2, 3, 4, 5, 6});
    const Vector x{1, 0, -1};
    CHECK(matvec(a, x) == Vector{-2, -2});
    CHECK(matvec_t(a, Vector{1, 1}) == Vector{5, 7, 9});
}

TEST_CASE("softmax matches a long double reference") {
    std::mt19937_64 gen(3);
    std::uniform_real_distribution<double> u(-30, 30);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> s(1 + trial % 9);
        for (double& v : s) v = u(gen);
        const Vector got = softmax_row(s);
        const auto ref = oracle::softmax(s);
        double sum = 0.0;
        for (std::size_t k = 0; k < s.size(); ++k) {
            CHECK(got[k] == doctest::Approx(ref[k]).epsilon(1e-13));
            sum += got[k];
        }
        CHECK(std::abs(sum - 1.0) < 1e-14);
    }
}

TEST_CASE("softmax is stable for large scores and honours masked entries") {
    const Vector big = softmax_row(Vector{1000.0, 1000.0});
    CHECK(big[0] == doctest::Approx(0.5));
    const Vector masked = softmax_row(Vector{2.0, kNegLarge, 2.0});
    CHECK(masked[1] == 0.0);
    CHECK(masked[0] == doctest::Approx(0.5));
    CHECK_THROWS_AS(softmax_row(Vector{kNegLarge, kNegLarge}), EmptySupportError);
}

TEST_CASE("spectral norm agrees with a Jacobi SVD") {
    std::mt19937_64 gen(5);
    for (int trial = 0; trial < 40; ++trial) {
        const std::size_t r = 1 + trial % 7, c = 1 + (trial * 3) % 11;
        const Matrix m = oracle::random_matrix(r, c, gen);
        const double ref = oracle::singular_values(m).front();
        CHECK(spectral_norm(m) == doctest::Approx(ref).epsilon(1e-10));
    }
}

TEST_CASE("spectral norm edge cases") {
    CHECK(spectral_norm(Matrix(3, 4)) == 0.0);
    CHECK(spectral_norm(Matrix::identity(5)) == doctest::Approx(1.0));
    // The all-ones start is orthogonal to the top singular vector here.
    const Matrix m = Matrix::from_rows(2, 2, {1, -1, -1, 1});
    CHECK(spectral_norm(m) == doctest::Approx(2.0));
    const Matrix d = Matrix::from_rows(3, 3, {3, 0, 0, 0, -7, 0, 0, 0, 2});
    CHECK(spectral_norm(d) == doctest::Approx(7.0));
}

TEST_CASE("norms and helpers") {
    const Matrix m = Matrix::from_rows(2, 2, {3, 0, 0, 4});
    CHECK(frobenius_norm(m) == doctest::Approx(5.0));
    CHECK(matrix_norm(m, NormKind::Spectral) == doctest::Approx(4.0));
    CHECK(identity_norm(9, NormKind::Frobenius) == doctest::Approx(3.0));
    CHECK(identity_norm(9, NormKind::Spectral) == 1.0);
    CHECK(vec_norm2(Vector{1e200, 1e200}) == doctest::Approx(std::sqrt(2.0) * 1e200));
    CHECK(dot(Vector{1, 2}, Vector{3, 4}) == 11.0);
    CHECK(max_abs(Matrix::from_rows(1, 3, {1, -5, 2})) == 5.0);
    Matrix bad(1, 1);
    bad(0, 0) = std::nan("");
    CHECK_FALSE(all_finite(bad));
    CHECK(shape_str(Matrix(2, 3)) == "2x3");
}

TEST_CASE("outer product") {
    const Matrix o = outer(Vector{1, 2}, Vector{3, 4, 5});
    CHECK(o.rows() == 2);
    CHECK(o(1, 2) == 10.0);
}

TEST_CASE("no parallel region outside OpenMP constructs") { CHECK_FALSE(in_parallel_region()); }
