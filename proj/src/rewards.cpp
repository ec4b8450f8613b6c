#include "caution/rewards.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "caution/tolerances.hpp"

namespace caution {

RewardPair::RewardPair(std::shared_ptr<const Subspace> subspace, Vector theta_star, Vector theta_hat)
    : subspace_(std::move(subspace)),
      theta_star_(std::move(theta_star)),
      theta_hat_(std::move(theta_hat)) {
    if (!subspace_) {
        throw std::invalid_argument("RewardPair: subspace is required");
    }
    const std::size_t d = subspace_->ambient_dim();
    require_size(theta_star_, d, "RewardPair theta_star");
    require_size(theta_hat_, d, "RewardPair theta_hat");
    const double scale = std::max(1.0, norm(theta_star_));
    if (norm(subspace_->project_perp(theta_star_)) > kTolerances.reward_agreement * scale) {
        throw std::invalid_argument("RewardPair: theta_star must lie in V");
    }
    if (norm(subtract(subspace_->project_v(theta_hat_), theta_star_)) >
        kTolerances.reward_agreement * std::max(scale, norm(theta_hat_))) {
        throw std::invalid_argument("RewardPair: proj_V(theta_hat) must equal theta_star");
    }
    corruption_ = subspace_->project_perp(theta_hat_);
}

double RewardPair::corruption_norm() const { return norm(corruption_); }

double RewardPair::eval_true(std::span<const double> y) const {
    require_size(y, theta_star_.size(), "eval_true");
    return dot(theta_star_, y);
}

double RewardPair::eval_proxy(std::span<const double> y) const {
    require_size(y, theta_hat_.size(), "eval_proxy");
    return dot(theta_hat_, y);
}

RewardPair make_reward_pair(std::shared_ptr<const Subspace> s, std::span<const double> theta_star_coords,
                            std::span<const double> perp_corruption) {
    if (!s) {
        throw std::invalid_argument("make_reward_pair: subspace is required");
    }
    require_size(theta_star_coords, s->dim(), "make_reward_pair theta_star_coords");
    require_size(perp_corruption, s->ambient_dim(), "make_reward_pair perp_corruption");
    if (norm(theta_star_coords) == 0.0) {
        throw std::invalid_argument("make_reward_pair: theta_star coordinates are all zero "
                                    "(true reward would be degenerate)");
    }
    Vector theta_star = s->embed(theta_star_coords);
    Vector theta_hat = add(theta_star, s->project_perp(perp_corruption));
    return RewardPair(std::move(s), std::move(theta_star), std::move(theta_hat));
}

double corruption_ratio(const RewardPair& pair, const CovarianceFactor& cov) {
    const double signal = cov.sqrt_norm(pair.theta_star());
    if (signal == 0.0) {
        throw std::invalid_argument("corruption_ratio: ||Sigma^{1/2} theta_star|| is zero");
    }
    return cov.sqrt_norm(pair.corruption()) / signal;
}

RewardPair make_reward_pair_with_ratio(std::shared_ptr<const Subspace> s,
                                       std::span<const double> theta_star_coords,
                                       std::span<const double> direction, double rho,
                                       const CovarianceFactor& cov) {
    if (!(rho >= 0.0) || !std::isfinite(rho)) {
        throw std::invalid_argument("make_reward_pair_with_ratio: rho must be finite and >= 0");
    }
    const Vector zero(s->ambient_dim(), 0.0);
    const RewardPair clean = make_reward_pair(s, theta_star_coords, zero);
    if (rho == 0.0) {
        return clean;
    }
    const Vector perp = s->project_perp(direction);
    const double perp_scale = cov.sqrt_norm(perp);
    if (perp_scale == 0.0) {
        throw std::invalid_argument(
            "make_reward_pair_with_ratio: corruption direction has no weight on V-perp under Sigma");
    }
    const double target = rho * cov.sqrt_norm(clean.theta_star());
    return make_reward_pair(std::move(s), theta_star_coords, scaled(perp, target / perp_scale));
}

ZScoreNormalizer::ZScoreNormalizer(double mean, double std, std::size_t sample_count)
    : mean_(mean), std_(std), sample_count_(sample_count) {
    if (!(std > 0.0) || !std::isfinite(std) || !std::isfinite(mean)) {
        throw std::invalid_argument("ZScoreNormalizer: std must be positive and finite");
    }
}

ZScoreNormalizer fit_normalizer(std::span<const double> values) {
    if (values.size() < 2) {
        throw std::invalid_argument("fit_normalizer: need at least 2 values");
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double ss = 0.0;
    for (double v : values) {
        ss += (v - mean) * (v - mean);
    }
    const double std = std::sqrt(ss / static_cast<double>(values.size()));
    if (!(std > 0.0)) {
        throw std::invalid_argument("fit_normalizer: values have zero variance");
    }
    return ZScoreNormalizer(mean, std, values.size());
}

double normalize(const ZScoreNormalizer& n, double v) { return n(v); }

}  // namespace caution
