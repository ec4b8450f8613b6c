#pragma once

#include <cstddef>
#include <span>

namespace caution {

// Closed-form values for the linear-Gaussian Best-of-N model. These are the
// ground truth the Monte-Carlo harness is judged against.
struct TheoryInputs {
    std::size_t n = 1;
    // ||Sigma^{1/2} theta_star||
    double sigma_theta_star_norm = 1.0;
    // ||Sigma^{1/2} proj_perp theta_hat||
    double sigma_perp_theta_hat_norm = 0.0;
    // trace(Sigma proj_perp)
    double trace_sigma_perp = 0.0;
    double lambda = 0.0;
    double epsilon = 0.0;
    double c = 0.5;
};

/// M_N = E[max of N iid standard normals], computed as
/// integral of z * N * phi(z) * Phi(z)^(N-1) by adaptive Simpson quadrature.
double expected_max_std_normal(std::size_t n);

double optimal_value(const TheoryInputs& in);
double corruption_ratio(const TheoryInputs& in);
double bon_value(const TheoryInputs& in);
double bon_gap(const TheoryInputs& in);

/// lambda * (sqrt(2/pi * trace(Sigma proj_perp)) + 2 epsilon). Independent of N.
double pessimism_regret_bound(const TheoryInputs& in);

/// Smallest epsilon >= 0 with (1-c)||p|| - eps <= alpha <= ||p|| + eps over the
/// probes, where perp_norms[i] = ||proj_perp y_i|| and alphas[i] = alpha(y_i).
double estimate_epsilon(std::span<const double> alphas, std::span<const double> perp_norms, double c);

}  // namespace caution
