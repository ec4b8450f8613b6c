#pragma once

#include <cstddef>
#include <vector>

#include "caution/linalg.hpp"
#include "caution/random.hpp"

namespace caution {

// Centred Gaussian law N(0, A A^T) described by its factor A.
class CovarianceFactor {
public:
    explicit CovarianceFactor(Matrix factor);

    static CovarianceFactor identity(std::size_t d);
    static CovarianceFactor diagonal(std::span<const double> variances);

    std::size_t dim() const { return factor_.rows(); }
    const Matrix& factor() const { return factor_; }
    bool is_identity() const { return is_identity_; }

    Matrix covariance() const;
    // ||Sigma^{1/2} v|| computed as ||A^T v||.
    double sqrt_norm(std::span<const double> v) const;
    // trace(Sigma * p) for a symmetric matrix p.
    double trace_with(const Matrix& p) const;

    // out = A * z for z ~ N(0, I); out must have length dim().
    void sample_into(RngStream& rng, std::span<double> out) const;

private:
    Matrix factor_;
    bool is_identity_ = false;
};

std::vector<Vector> sample_gaussian(const CovarianceFactor& cov, RngStream& rng, std::size_t count);

}  // namespace caution
