#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "caution/linalg.hpp"
#include "caution/random.hpp"

namespace caution {

class RankDeficiencyError : public std::invalid_argument {
public:
    RankDeficiencyError(std::size_t column, const std::string& message)
        : std::invalid_argument(message), column_(column) {}
    std::size_t column() const { return column_; }

private:
    std::size_t column_;
};

/// A k-dimensional linear subspace V of R^d, stored as a d x k matrix with
/// orthonormal columns. Construct through orthonormalize() or the helpers
/// below; the constructor trusts its input only after checking it.
class Subspace {
public:
    explicit Subspace(Matrix orthonormal_basis);

    std::size_t ambient_dim() const { return basis_.rows(); }
    std::size_t dim() const { return basis_.cols(); }
    const Matrix& basis() const { return basis_; }

    /// Coordinates of y in the basis: basis^T y (length k).
    Vector coordinates(std::span<const double> y) const;
    /// basis * coords (length d).
    Vector embed(std::span<const double> coords) const;

    Vector project_v(std::span<const double> y) const;
    Vector project_perp(std::span<const double> y) const;
    /// Dense d x d projector onto V.
    Matrix projector() const;
    /// Dense d x d projector onto the orthogonal complement.
    Matrix perp_projector() const;

    /// Orthonormal basis of the orthogonal complement (d - k columns; empty when k == d).
    Matrix complement_basis() const;

private:
    Matrix basis_;
};

/// Modified Gram-Schmidt with one re-orthogonalization pass. Throws
/// RankDeficiencyError naming the first column whose residual vanishes.
Subspace orthonormalize(const Matrix& raw_basis);

/// span(e_1, ..., e_k) in R^d.
Subspace coordinate_subspace(std::size_t d, std::size_t k);

/// Uniformly random k-dimensional subspace (orthonormalized Gaussian columns).
Subspace random_subspace(std::size_t d, std::size_t k, RngStream& rng);

Vector project_v(const Subspace& s, std::span<const double> y);
Vector project_perp(const Subspace& s, std::span<const double> y);

}  // namespace caution
