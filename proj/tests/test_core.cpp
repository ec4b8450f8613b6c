#include <doctest.h>

#include <cmath>
#include <set>

#include "caution/gaussian.hpp"
#include "caution/linalg.hpp"
#include "caution/random.hpp"
#include "caution/subspace.hpp"

using namespace caution;

namespace {

void check_vec(const Vector& got, const Vector& want, double tol = 1e-12) {
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
        CHECK(std::abs(got[i] - want[i]) <= tol);
    }
}

double max_abs_diff(const Vector& a, const Vector& b) {
    double worst = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    return worst;
}

Vector random_vector(std::size_t d, RngStream& rng) {
    Vector v(d);
    rng.fill_normal(v);
    return v;
}

}  // namespace

TEST_CASE("matrix basics") {
    const Matrix a{{1, 2}, {3, 4}, {5, 6}};
    CHECK(a.rows() == 3);
    CHECK(a.cols() == 2);
    CHECK(a(2, 1) == 6);
    CHECK(a.transposed()(1, 2) == 6);
    check_vec(matvec(a, Vector{1, 1}), {3, 7, 11});
    check_vec(matvec_transposed(a, Vector{1, 0, 1}), {6, 8});
    const Matrix p = matmul(a.transposed(), a);
    CHECK(p(0, 0) == 35);
    CHECK(p(0, 1) == 44);
    CHECK(p(1, 1) == 56);
    CHECK(frobenius_norm(Matrix{{3, 0}, {0, 4}}) == doctest::Approx(5.0));
    CHECK_THROWS_AS(matvec(a, Vector{1, 2, 3}), DimensionError);
    CHECK_THROWS_AS(matmul(a, a), DimensionError);
}

TEST_CASE("vector helpers") {
    const Vector x{1, 2, 2};
    CHECK(norm(x) == 3.0);
    CHECK(squared_norm(x) == 9.0);
    CHECK(dot(x, Vector{1, 0, -1}) == -1.0);
    Vector y{0, 0, 0};
    axpy(2.0, x, y);
    check_vec(y, {2, 4, 4});
    check_vec(subtract(y, x), x);
    CHECK_THROWS_AS(dot(x, Vector{1, 2}), DimensionError);
}

TEST_CASE("rng streams are deterministic and distinct") {
    RngStream a = derive_stream(42, 0);
    RngStream b = derive_stream(42, 0);
    for (int i = 0; i < 100; ++i) {
        REQUIRE(a.next_u64() == b.next_u64());
    }
    CHECK(derive_stream(42, 0).next_u64() != derive_stream(42, 1).next_u64());
    CHECK(derive_stream(42, 7).next_u64() != derive_stream(43, 7).next_u64());
    CHECK(derive_stream(42, 3).split(0).next_u64() != derive_stream(42, 3).split(1).next_u64());
}

TEST_CASE("rng uniform and normal moments") {
    RngStream rng(7, 0);
    const int n = 200000;
    double su = 0.0, sn = 0.0, sn2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform();
        REQUIRE(u >= 0.0);
        REQUIRE(u < 1.0);
        su += u;
        const double z = rng.normal();
        sn += z;
        sn2 += z * z;
    }
    CHECK(std::abs(su / n - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(sn / n) < 4.0 / std::sqrt(double(n)));
    CHECK(std::abs(sn2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
}

TEST_CASE("uniform_below stays in range and hits every value") {
    RngStream rng(3, 3);
    std::set<std::uint64_t> seen;
    for (int i = 0; i < 1000; ++i) {
        const auto v = rng.uniform_below(7);
        REQUIRE(v < 7);
        seen.insert(v);
    }
    CHECK(seen.size() == 7);
}

TEST_CASE("poisson mean") {
    RngStream rng(11, 0);
    for (double mu : {0.5, 8.0, 75.0}) {
        const int n = 100000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += double(rng.poisson(mu));
        CHECK(std::abs(s / n - mu) < 4.0 * std::sqrt(mu / n));
    }
}

TEST_CASE("shuffle_in_place is a seeded permutation") {
    std::vector<int> a{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    std::vector<int> b = a;
    RngStream r1(5, 5), r2(5, 5);
    shuffle_in_place(std::span<int>(a), r1);
    shuffle_in_place(std::span<int>(b), r2);
    CHECK(a == b);
    std::vector<int> sorted = a;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<int>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
}

TEST_CASE("orthonormalize examples") {
    SUBCASE("already orthonormal basis is unchanged") {
        const Subspace s = orthonormalize(Matrix{{1, 0}, {0, 1}, {0, 0}});
        check_vec(s.basis().column(0), {1, 0, 0});
        check_vec(s.basis().column(1), {0, 1, 0});
    }
    SUBCASE("(e1, e1 + e2) becomes (e1, e2) up to sign") {
        const Subspace s = orthonormalize(Matrix{{1, 1}, {0, 1}, {0, 0}});
        check_vec(s.basis().column(0), {1, 0, 0});
        const Vector c1 = s.basis().column(1);
        CHECK(std::abs(c1[1]) == doctest::Approx(1.0));
        CHECK(std::abs(c1[0]) < 1e-15);
    }
    SUBCASE("dependent columns name the offending column") {
        try {
            orthonormalize(Matrix{{1, 2}, {0, 0}, {0, 0}});
            FAIL("expected RankDeficiencyError");
        } catch (const RankDeficiencyError& e) {
            CHECK(e.column() == 1);
        }
    }
}

TEST_CASE("subspace construction checks orthonormality and k") {
    CHECK_THROWS(Subspace(Matrix{{1, 1}, {0, 1}, {0, 0}}));
    CHECK_THROWS(Subspace(Matrix(3, 0)));
    CHECK_THROWS(coordinate_subspace(3, 4));
}

TEST_CASE("coordinate projections") {
    const Subspace s = coordinate_subspace(3, 2);
    const Vector y{1, 2, 3};
    check_vec(s.project_v(y), {1, 2, 0});
    check_vec(s.project_perp(y), {0, 0, 3});
    check_vec(s.project_perp(Vector{4, -1, 0}), {0, 0, 0});
    CHECK_THROWS_AS(s.project_v(Vector{1, 2}), DimensionError);
}

TEST_CASE("projection invariants on random subspaces") {
    RngStream rng(2024, 1);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t d = 2 + rng.uniform_below(15);
        const std::size_t k = 1 + rng.uniform_below(d);
        const Subspace s = random_subspace(d, k, rng);
        const Matrix gram = matmul(s.basis().transposed(), s.basis());
        for (std::size_t i = 0; i < k; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                REQUIRE(std::abs(gram(i, j) - (i == j ? 1.0 : 0.0)) < 1e-10);
            }
        }
        const Vector y = random_vector(d, rng);
        const Vector z = random_vector(d, rng);
        const Vector pv = s.project_v(y);
        const Vector pp = s.project_perp(y);
        CHECK(max_abs_diff(add(pv, pp), y) < 1e-10);
        CHECK(max_abs_diff(s.project_v(pv), pv) < 1e-10);
        CHECK(max_abs_diff(s.project_perp(pp), pp) < 1e-10);
        CHECK(std::abs(squared_norm(pv) + squared_norm(pp) - squared_norm(y)) < 1e-10 * std::max(1.0, squared_norm(y)));
        CHECK(std::abs(dot(s.project_v(y), z) - dot(y, s.project_v(z))) < 1e-10);
        const Matrix c = s.complement_basis();
        CHECK(c.cols() == d - k);
        if (c.cols() > 0) {
            CHECK(norm(s.project_v(c.column(0))) < 1e-10);
        }
    }
}

TEST_CASE("sample_gaussian degenerate and identity") {
    RngStream rng(9, 0);
    const auto zero = sample_gaussian(CovarianceFactor(Matrix(3, 3, 0.0)), rng, 10);
    for (const Vector& v : zero) {
        CHECK(norm(v) == 0.0);
    }
    CHECK_THROWS(sample_gaussian(CovarianceFactor::identity(2), rng, 0));
}

TEST_CASE("sample_gaussian moments") {
    RngStream rng(10, 0);
    const std::size_t n = 1000000;
    SUBCASE("identity: mean within 0.005") {
        const CovarianceFactor cov = CovarianceFactor::identity(4);
        Vector mean(4, 0.0), y(4);
        for (std::size_t i = 0; i < n; ++i) {
            cov.sample_into(rng, y);
            axpy(1.0 / double(n), y, mean);
        }
        for (double m : mean) CHECK(std::abs(m) < 0.005);
    }
    SUBCASE("diag(4, 1): variances within 2%") {
        const CovarianceFactor cov = CovarianceFactor::diagonal(Vector{4, 1});
        double v0 = 0.0, v1 = 0.0;
        Vector y(2);
        for (std::size_t i = 0; i < n; ++i) {
            cov.sample_into(rng, y);
            v0 += y[0] * y[0];
            v1 += y[1] * y[1];
        }
        CHECK(std::abs(v0 / double(n) / 4.0 - 1.0) < 0.02);
        CHECK(std::abs(v1 / double(n) - 1.0) < 0.02);
    }
}

double covariance_error(std::size_t d, std::size_t n, RngStream& rng) {
    const CovarianceFactor cov = CovarianceFactor::identity(d);
    Matrix acc(d, d, 0.0);
    Vector y(d);
    for (std::size_t s = 0; s < n; ++s) {
        cov.sample_into(rng, y);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j) acc(i, j) += y[i] * y[j];
    }
    acc *= 1.0 / double(n);
    acc -= Matrix::identity(d);
    return frobenius_norm(acc);
}

TEST_CASE("empirical covariance converges for identity") {
    RngStream rng(12, 0);
    const std::size_t n = 100000;
    CHECK(covariance_error(4, n, rng) < 0.05);
    CHECK(covariance_error(8, n, rng) < 0.05);
    // At d = 16 the expected error sqrt((d^2 + d) / n) is already about 0.052.
    CHECK(covariance_error(16, n, rng) < 1.5 * std::sqrt((16.0 * 16.0 + 16.0) / double(n)));
}

TEST_CASE("covariance factor helpers") {
    const CovarianceFactor cov = CovarianceFactor::diagonal(Vector{4, 9});
    CHECK(cov.sqrt_norm(Vector{1, 0}) == doctest::Approx(2.0));
    CHECK(cov.sqrt_norm(Vector{0, 1}) == doctest::Approx(3.0));
    CHECK(cov.trace_with(coordinate_subspace(2, 1).perp_projector()) == doctest::Approx(9.0));
    CHECK(cov.covariance()(0, 0) == doctest::Approx(4.0));
    CHECK(CovarianceFactor::identity(3).is_identity());
    CHECK_THROWS(CovarianceFactor(Matrix(2, 3)));
}

TEST_CASE("sampling is reproducible from the same stream") {
    const CovarianceFactor cov = CovarianceFactor::diagonal(Vector{1, 2, 3});
    RngStream a(77, 4), b(77, 4);
    CHECK(sample_gaussian(cov, a, 50) == sample_gaussian(cov, b, 50));
}
