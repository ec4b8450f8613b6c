#include "caution/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "caution/tolerances.hpp"

namespace caution {

namespace {

double std_normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }

double std_normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

double simpson(double a, double fa, double b, double fb, double fm) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

template <typename F>
double adaptive_simpson(F&& f, double a, double b, double fa, double fm, double fb, double whole,
                        double tol, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = f(lm);
    const double frm = f(rm);
    const double left = simpson(a, fa, m, fm, flm);
    const double right = simpson(m, fm, b, fb, frm);
    const double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

void require_n(std::size_t n, const char* what) {
    if (n == 0) {
        throw std::invalid_argument(std::string(what) + ": n must be at least 1");
    }
}

}  // namespace

double expected_max_std_normal(std::size_t n) {
    require_n(n, "expected_max_std_normal");
    if (n == 1) {
        return 0.0;
    }
    const double count = static_cast<double>(n);
    auto integrand = [count](double z) {
        const double cdf = std_normal_cdf(z);
        if (cdf <= 0.0) {
            return 0.0;
        }
        return z * count * std_normal_pdf(z) * std::exp((count - 1.0) * std::log(cdf));
    };
    // The neglected upper tail is at most N * phi(L), the lower tail is smaller.
    // Start at L = 10 and widen until the tail is far below the quadrature tolerance.
    double half_width = 10.0;
    while (count * std_normal_pdf(half_width) > 1e-3 * kTolerances.quadrature_abs) {
        half_width += 1.0;
    }
    // Splitting the range keeps the narrow peak near sqrt(2 ln N) well resolved.
    constexpr int kPanels = 40;
    const double step = 2.0 * half_width / kPanels;
    double total = 0.0;
    for (int p = 0; p < kPanels; ++p) {
        const double a = -half_width + p * step;
        const double b = a + step;
        const double fa = integrand(a);
        const double fb = integrand(b);
        const double fm = integrand(0.5 * (a + b));
        const double whole = simpson(a, fa, b, fb, fm);
        total += adaptive_simpson(integrand, a, b, fa, fm, fb, whole,
                                  kTolerances.quadrature_abs / kPanels, 40);
    }
    return total;
}

double optimal_value(const TheoryInputs& in) {
    require_n(in.n, "optimal_value");
    return in.sigma_theta_star_norm * expected_max_std_normal(in.n);
}

double corruption_ratio(const TheoryInputs& in) {
    if (!(in.sigma_theta_star_norm > 0.0)) {
        throw std::invalid_argument("bon_value: ||Sigma^{1/2} theta_star|| must be positive");
    }
    return in.sigma_perp_theta_hat_norm / in.sigma_theta_star_norm;
}

double bon_value(const TheoryInputs& in) {
    const double rho = corruption_ratio(in);
    return optimal_value(in) / std::sqrt(1.0 + rho * rho);
}

double bon_gap(const TheoryInputs& in) {
    const double rho = corruption_ratio(in);
    return optimal_value(in) * (1.0 - 1.0 / std::sqrt(1.0 + rho * rho));
}

double pessimism_regret_bound(const TheoryInputs& in) {
    if (!(in.epsilon >= 0.0)) {
        throw std::invalid_argument("pessimism_regret_bound: epsilon must be non-negative");
    }
    if (!(in.c > 0.0 && in.c < 1.0)) {
        throw std::invalid_argument("pessimism_regret_bound: c must lie in (0, 1)");
    }
    if (!(in.trace_sigma_perp >= 0.0)) {
        throw std::invalid_argument("pessimism_regret_bound: trace must be non-negative");
    }
    return in.lambda * (std::sqrt(2.0 / std::numbers::pi * in.trace_sigma_perp) + 2.0 * in.epsilon);
}

double estimate_epsilon(std::span<const double> alphas, std::span<const double> perp_norms, double c) {
    if (alphas.size() != perp_norms.size()) {
        throw std::invalid_argument("estimate_epsilon: probe arrays differ in length");
    }
    if (!(c > 0.0 && c < 1.0)) {
        throw std::invalid_argument("estimate_epsilon: c must lie in (0, 1)");
    }
    double eps = 0.0;
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        eps = std::max({eps, alphas[i] - perp_norms[i], (1.0 - c) * perp_norms[i] - alphas[i]});
    }
    return eps;
}

}  // namespace caution
