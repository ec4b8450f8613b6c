#include <doctest.h>

#include <cmath>
#include <vector>

#include "caution/theory.hpp"

using namespace caution;

TEST_CASE("expected maximum of standard normals") {
    CHECK(expected_max_std_normal(1) == 0.0);
    CHECK(expected_max_std_normal(2) == doctest::Approx(1.0 / std::sqrt(M_PI)).epsilon(1e-9));
    CHECK(std::abs(expected_max_std_normal(2) - 0.564190) < 1e-6);
    CHECK(std::abs(expected_max_std_normal(10) - 1.53875) < 1e-4);
    // Three points from standard tables.
    CHECK(std::abs(expected_max_std_normal(3) - 0.846284) < 1e-6);
    CHECK(std::abs(expected_max_std_normal(5) - 1.162964) < 1e-6);
    CHECK(std::abs(expected_max_std_normal(100) - 2.507594) < 1e-6);
}

TEST_CASE("M_N is increasing and inside the log envelopes") {
    double previous = expected_max_std_normal(1);
    for (std::size_t n = 2; n <= 4096; n = n < 64 ? n + 1 : n * 2) {
        const double m = expected_max_std_normal(n);
        CHECK(m > previous);
        CHECK(m <= std::sqrt(2.0 * std::log(double(n))));
        if (n >= 16) CHECK(m >= std::sqrt(2.0 * std::log(double(n))) - 1.0);
        previous = m;
    }
}

TEST_CASE("optimal value") {
    TheoryInputs in;
    in.n = 10;
    in.sigma_theta_star_norm = 0.0;
    CHECK(optimal_value(in) == 0.0);
    in.sigma_theta_star_norm = 1.0;
    CHECK(std::abs(optimal_value(in) - 1.53875) < 1e-4);
    const double one = optimal_value(in);
    in.sigma_theta_star_norm = 2.0;
    CHECK(optimal_value(in) == doctest::Approx(2.0 * one));
}

TEST_CASE("bon value and gap") {
    TheoryInputs in;
    in.n = 2;
    in.sigma_theta_star_norm = 1.0;
    in.sigma_perp_theta_hat_norm = 0.0;
    CHECK(bon_gap(in) == 0.0);
    CHECK(bon_value(in) == optimal_value(in));
    in.sigma_perp_theta_hat_norm = 1.0;
    CHECK(std::abs(bon_value(in) - 0.39894) < 1e-5);
    for (std::size_t n : {4, 16, 512}) {
        in.n = n;
        CHECK(bon_gap(in) / optimal_value(in) == doctest::Approx(1.0 - 1.0 / std::sqrt(2.0)).epsilon(1e-12));
    }
    in.sigma_theta_star_norm = 0.0;
    CHECK_THROWS(bon_value(in));
}

TEST_CASE("bon value is increasing in n and decreasing in rho") {
    TheoryInputs in;
    in.sigma_theta_star_norm = 1.0;
    in.sigma_perp_theta_hat_norm = 0.5;
    double previous = -1.0;
    for (std::size_t n = 1; n <= 512; n *= 2) {
        in.n = n;
        CHECK(bon_value(in) > previous);
        previous = bon_value(in);
    }
    in.n = 64;
    double last = bon_value(in);
    for (double r : {0.6, 1.0, 2.0, 5.0}) {
        in.sigma_perp_theta_hat_norm = r;
        CHECK(bon_value(in) < last);
        last = bon_value(in);
    }
}

TEST_CASE("pessimism regret bound") {
    TheoryInputs in;
    in.trace_sigma_perp = 8.0;
    in.lambda = 0.5;
    in.epsilon = 0.01;
    in.c = 0.5;
    CHECK(std::abs(pessimism_regret_bound(in) - 1.1384) < 1e-4);
    const double base = pessimism_regret_bound(in);
    in.lambda = 1.0;
    CHECK(pessimism_regret_bound(in) == doctest::Approx(2.0 * base));
    in.n = 512;
    CHECK(pessimism_regret_bound(in) == doctest::Approx(2.0 * base));
    in.lambda = 0.0;
    CHECK(pessimism_regret_bound(in) == 0.0);
    in.epsilon = -0.1;
    CHECK_THROWS(pessimism_regret_bound(in));
    in.epsilon = 0.0;
    in.c = 1.0;
    CHECK_THROWS(pessimism_regret_bound(in));
}

TEST_CASE("epsilon estimate") {
    const std::vector<double> alpha{1.0, 2.0, 0.0};
    const std::vector<double> perp{1.0, 1.5, 1.0};
    // Deviations: 0, 0.5 above, and (1 - c) * 1 - 0 = 0.9 below.
    CHECK(estimate_epsilon(alpha, perp, 0.1) == doctest::Approx(0.9));
    CHECK(estimate_epsilon(std::vector<double>{1.0}, std::vector<double>{1.0}, 0.1) == 0.0);
    CHECK_THROWS(estimate_epsilon(alpha, std::vector<double>{1.0}, 0.1));
}
