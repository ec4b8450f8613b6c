#include "caution/subspace.hpp"

#include <cmath>
#include <string>

#include "caution/tolerances.hpp"

namespace caution {

namespace {

void check_orthonormal(const Matrix& basis) {
    if (basis.cols() == 0 || basis.cols() > basis.rows()) {
        throw DimensionError("Subspace: need 1 <= k <= d, got k=" + std::to_string(basis.cols()) +
                             ", d=" + std::to_string(basis.rows()));
    }
    const Matrix gram = matmul(basis.transposed(), basis);
    for (std::size_t i = 0; i < gram.rows(); ++i) {
        for (std::size_t j = 0; j < gram.cols(); ++j) {
            const double expected = i == j ? 1.0 : 0.0;
            if (std::abs(gram(i, j) - expected) > kTolerances.orthonormality) {
                throw std::invalid_argument("Subspace: basis columns are not orthonormal");
            }
        }
    }
}

}  // namespace

Subspace::Subspace(Matrix orthonormal_basis) : basis_(std::move(orthonormal_basis)) {
    check_orthonormal(basis_);
}

Vector Subspace::coordinates(std::span<const double> y) const {
    require_size(y, ambient_dim(), "Subspace::coordinates");
    return matvec_transposed(basis_, y);
}

Vector Subspace::embed(std::span<const double> coords) const {
    require_size(coords, dim(), "Subspace::embed");
    return matvec(basis_, coords);
}

Vector Subspace::project_v(std::span<const double> y) const { return embed(coordinates(y)); }

Vector Subspace::project_perp(std::span<const double> y) const {
    return subtract(y, project_v(y));
}

Matrix Subspace::projector() const { return matmul(basis_, basis_.transposed()); }

Matrix Subspace::perp_projector() const {
    return Matrix::identity(ambient_dim()) - projector();
}

Matrix Subspace::complement_basis() const {
    const std::size_t d = ambient_dim();
    const std::size_t k = dim();
    std::vector<Vector> found;
    found.reserve(d - k);
    // Sweep the standard basis, keeping the residuals with the largest norms.
    for (std::size_t i = 0; i < d && found.size() < d - k; ++i) {
        Vector e(d, 0.0);
        e[i] = 1.0;
        Vector r = project_perp(e);
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vector& q : found) {
                axpy(-dot(q, r), q, r);
            }
        }
        const double n = norm(r);
        if (n > 1e-6) {
            found.push_back(scaled(r, 1.0 / n));
        }
    }
    return Matrix::from_columns(found);
}

Subspace orthonormalize(const Matrix& raw_basis) {
    const std::size_t d = raw_basis.rows();
    const std::size_t k = raw_basis.cols();
    if (k == 0 || k > d) {
        throw DimensionError("orthonormalize: need 1 <= k <= d, got k=" + std::to_string(k) +
                             ", d=" + std::to_string(d));
    }
    std::vector<Vector> q;
    q.reserve(k);
    for (std::size_t c = 0; c < k; ++c) {
        Vector v = raw_basis.column(c);
        const double original = norm(v);
        for (int pass = 0; pass < 2; ++pass) {
            for (const Vector& prev : q) {
                axpy(-dot(prev, v), prev, v);
            }
        }
        const double residual = norm(v);
        if (original == 0.0 || residual <= kTolerances.rank * original) {
            throw RankDeficiencyError(c, "orthonormalize: column " + std::to_string(c) +
                                             " is linearly dependent on the preceding columns");
        }
        q.push_back(scaled(v, 1.0 / residual));
    }
    return Subspace(Matrix::from_columns(q));
}

Subspace coordinate_subspace(std::size_t d, std::size_t k) {
    Matrix basis(d, k);
    for (std::size_t i = 0; i < k && i < d; ++i) {
        basis(i, i) = 1.0;
    }
    return Subspace(std::move(basis));
}

Subspace random_subspace(std::size_t d, std::size_t k, RngStream& rng) {
    Matrix raw(d, k);
    rng.fill_normal(raw.flat());
    return orthonormalize(raw);
}

Vector project_v(const Subspace& s, std::span<const double> y) { return s.project_v(y); }

Vector project_perp(const Subspace& s, std::span<const double> y) { return s.project_perp(y); }

}  // namespace caution
