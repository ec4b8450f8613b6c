#include "caution/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace caution {

CovarianceFactor::CovarianceFactor(Matrix factor) : factor_(std::move(factor)) {
    if (factor_.rows() == 0) {
        throw DimensionError("CovarianceFactor: dimension must be positive");
    }
    if (factor_.rows() != factor_.cols()) {
        throw DimensionError("CovarianceFactor: factor must be square");
    }
    is_identity_ = factor_ == Matrix::identity(factor_.rows());
}

CovarianceFactor CovarianceFactor::identity(std::size_t d) {
    return CovarianceFactor(Matrix::identity(d));
}

CovarianceFactor CovarianceFactor::diagonal(std::span<const double> variances) {
    Matrix a(variances.size(), variances.size());
    for (std::size_t i = 0; i < variances.size(); ++i) {
        if (!(variances[i] >= 0.0)) {
            throw std::invalid_argument("CovarianceFactor::diagonal: variances must be non-negative");
        }
        a(i, i) = std::sqrt(variances[i]);
    }
    return CovarianceFactor(std::move(a));
}

Matrix CovarianceFactor::covariance() const { return matmul(factor_, factor_.transposed()); }

double CovarianceFactor::sqrt_norm(std::span<const double> v) const {
    if (is_identity_) {
        require_size(v, dim(), "CovarianceFactor::sqrt_norm");
        return norm(v);
    }
    return norm(matvec_transposed(factor_, v));
}

double CovarianceFactor::trace_with(const Matrix& p) const {
    const Matrix prod = matmul(covariance(), p);
    double t = 0.0;
    for (std::size_t i = 0; i < prod.rows(); ++i) {
        t += prod(i, i);
    }
    return t;
}

void CovarianceFactor::sample_into(RngStream& rng, std::span<double> out) const {
    require_size(out, dim(), "CovarianceFactor::sample_into");
    if (is_identity_) {
        rng.fill_normal(out);
        return;
    }
    Vector z(dim());
    rng.fill_normal(z);
    for (std::size_t i = 0; i < dim(); ++i) {
        out[i] = dot(factor_.row(i), z);
    }
}

std::vector<Vector> sample_gaussian(const CovarianceFactor& cov, RngStream& rng, std::size_t count) {
    if (count == 0) {
        throw std::invalid_argument("sample_gaussian: count must be at least 1");
    }
    std::vector<Vector> out(count, Vector(cov.dim()));
    for (Vector& y : out) {
        cov.sample_into(rng, y);
    }
    return out;
}

}  // namespace caution
