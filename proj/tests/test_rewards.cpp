#include <doctest.h>

#include <cmath>
#include <memory>

#include "caution/gaussian.hpp"
#include "caution/rewards.hpp"
#include "caution/subspace.hpp"

using namespace caution;

namespace {

std::shared_ptr<const Subspace> share(Subspace s) { return std::make_shared<const Subspace>(std::move(s)); }

}  // namespace

TEST_CASE("make_reward_pair without corruption is a perfect proxy") {
    auto s = share(coordinate_subspace(3, 2));
    const RewardPair p = make_reward_pair(s, Vector{1, 2}, Vector{0, 0, 0});
    CHECK(p.theta_hat() == p.theta_star());
    CHECK(p.corruption_norm() == 0.0);
}

TEST_CASE("make_reward_pair coordinate arithmetic") {
    auto s = share(coordinate_subspace(2, 1));
    const RewardPair p = make_reward_pair(s, Vector{1}, Vector{5, 3});
    CHECK(p.theta_star() == Vector{1, 0});
    CHECK(p.theta_hat() == Vector{1, 3});
    CHECK(p.eval_true(Vector{2, 1}) == 2.0);
    CHECK(p.eval_proxy(Vector{2, 1}) == 5.0);
    CHECK(p.eval_true(Vector{0, 0}) == 0.0);
    CHECK(p.eval_proxy(Vector{0, 0}) == 0.0);
    CHECK_THROWS_AS(p.eval_true(Vector{1, 2, 3}), DimensionError);
}

TEST_CASE("make_reward_pair rejects zero coordinates") {
    auto s = share(coordinate_subspace(3, 2));
    CHECK_THROWS_AS(make_reward_pair(s, Vector{0, 0}, Vector{1, 1, 1}), std::invalid_argument);
}

TEST_CASE("RewardPair validates its structure") {
    auto s = share(coordinate_subspace(3, 1));
    CHECK_THROWS(RewardPair(s, Vector{1, 1, 0}, Vector{1, 1, 0}));  // theta_star outside V
    CHECK_THROWS(RewardPair(s, Vector{1, 0, 0}, Vector{2, 0, 1}));  // disagrees on V
    CHECK_NOTHROW(RewardPair(s, Vector{1, 0, 0}, Vector{1, 0, 1}));
}

TEST_CASE("agreement on V and orthogonal proxy error on random inputs") {
    RngStream rng(31, 0);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t d = 3 + rng.uniform_below(10);
        const std::size_t k = 1 + rng.uniform_below(d - 1);
        auto s = share(random_subspace(d, k, rng));
        Vector coords(k), corruption(d);
        rng.fill_normal(coords);
        rng.fill_normal(corruption, 3.0);
        const RewardPair p = make_reward_pair(s, coords, corruption);
        CHECK(norm(subtract(s->project_v(p.theta_hat()), p.theta_star())) < 1e-10);
        for (int i = 0; i < 500; ++i) {
            Vector y(d);
            rng.fill_normal(y);
            const Vector yv = s->project_v(y);
            REQUIRE(std::abs(p.eval_true(yv) - p.eval_proxy(yv)) < 1e-9);
            const double gap = p.eval_proxy(y) - p.eval_true(y);
            REQUIRE(std::abs(gap - dot(s->project_perp(p.theta_hat()), s->project_perp(y))) < 1e-10);
        }
    }
}

TEST_CASE("corruption ratio parameterization") {
    auto s = share(coordinate_subspace(4, 2));
    const CovarianceFactor cov = CovarianceFactor::diagonal(Vector{4, 1, 9, 1});
    const RewardPair p = make_reward_pair_with_ratio(s, Vector{1, 0}, Vector{0, 0, 1, 1}, 0.7, cov);
    CHECK(corruption_ratio(p, cov) == doctest::Approx(0.7).epsilon(1e-12));
    const RewardPair clean = make_reward_pair_with_ratio(s, Vector{1, 0}, Vector{0, 0, 1, 1}, 0.0, cov);
    CHECK(clean.corruption_norm() == 0.0);
    CHECK_THROWS(make_reward_pair_with_ratio(s, Vector{1, 0}, Vector{1, 0, 0, 0}, 0.5, cov));
    CHECK_THROWS(make_reward_pair_with_ratio(s, Vector{1, 0}, Vector{0, 0, 1, 0}, -1.0, cov));
}

TEST_CASE("z-score normalizer examples") {
    const Vector values{1, 2, 3};
    const ZScoreNormalizer n = fit_normalizer(values);
    CHECK(normalize(n, 2.0) == doctest::Approx(0.0));
    CHECK(normalize(n, 3.0) == doctest::Approx(1.2247).epsilon(1e-4));
    CHECK(n.sample_count() == 3);
    CHECK_THROWS(fit_normalizer(Vector{5, 5, 5}));
    CHECK_THROWS(fit_normalizer(Vector{1}));
}

TEST_CASE("normalizer makes the fit sample unit variance") {
    RngStream rng(8, 8);
    Vector values(101);
    rng.fill_normal(values, 3.0);
    const ZScoreNormalizer n = fit_normalizer(values);
    double mean = 0.0, sq = 0.0;
    for (double v : values) {
        mean += n(v);
        sq += n(v) * n(v);
    }
    CHECK(std::abs(mean / 101.0) < 1e-12);
    CHECK(sq / 101.0 == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("normalizer is affine equivariant") {
    const Vector x{0.3, -1.2, 2.5, 0.9, 4.1};
    const double a = 2.5, b = -7.0;
    Vector y;
    for (double v : x) y.push_back(a * v + b);
    const ZScoreNormalizer nx = fit_normalizer(x);
    const ZScoreNormalizer ny = fit_normalizer(y);
    for (double v : {-3.0, 0.0, 1.7, 10.0}) {
        CHECK(ny(a * v + b) == doctest::Approx(nx(v)).epsilon(1e-12));
    }
}
