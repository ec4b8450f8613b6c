#pragma once

#include <cstddef>
#include <memory>
#include <span>

#include "caution/gaussian.hpp"
#include "caution/subspace.hpp"

namespace caution {

/// Linear true reward r*(y) = <theta_star, y> with theta_star in V, and a proxy
/// r_hat(y) = <theta_hat, y> that agrees with it on V. All disagreement lives
/// in proj_perp(theta_hat).
class RewardPair {
public:
    RewardPair(std::shared_ptr<const Subspace> subspace, Vector theta_star, Vector theta_hat);

    const Vector& theta_star() const { return theta_star_; }
    const Vector& theta_hat() const { return theta_hat_; }
    const Subspace& subspace() const { return *subspace_; }
    std::shared_ptr<const Subspace> subspace_ptr() const { return subspace_; }

    /// proj_perp(theta_hat), the proxy's corruption.
    const Vector& corruption() const { return corruption_; }
    double corruption_norm() const;

    double eval_true(std::span<const double> y) const;
    double eval_proxy(std::span<const double> y) const;

private:
    std::shared_ptr<const Subspace> subspace_;
    Vector theta_star_;
    Vector theta_hat_;
    Vector corruption_;
};

/// theta_star = basis * coords, theta_hat = theta_star + proj_perp(perp_corruption).
RewardPair make_reward_pair(std::shared_ptr<const Subspace> s, std::span<const double> theta_star_coords,
                            std::span<const double> perp_corruption);

/// rho = ||Sigma^{1/2} proj_perp theta_hat|| / ||Sigma^{1/2} theta_star||.
double corruption_ratio(const RewardPair& pair, const CovarianceFactor& cov);

/// Rescales the corruption direction so that corruption_ratio(result, cov) == rho.
/// `direction` is projected onto V-perp first and must not vanish there unless rho == 0.
RewardPair make_reward_pair_with_ratio(std::shared_ptr<const Subspace> s,
                                       std::span<const double> theta_star_coords,
                                       std::span<const double> direction, double rho,
                                       const CovarianceFactor& cov);

class ZScoreNormalizer {
public:
    ZScoreNormalizer(double mean, double std, std::size_t sample_count);

    double mean() const { return mean_; }
    double std() const { return std_; }
    std::size_t sample_count() const { return sample_count_; }

    double operator()(double v) const { return (v - mean_) / std_; }

private:
    double mean_;
    double std_;
    std::size_t sample_count_;
};

// Population (divide-by-n) standard deviation.
ZScoreNormalizer fit_normalizer(std::span<const double> values);
double normalize(const ZScoreNormalizer& n, double v);

}  // namespace caution
