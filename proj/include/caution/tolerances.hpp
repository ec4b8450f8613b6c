#pragma once

namespace caution {

// Numeric tolerances shared by the library. Kept in one place so tests and
// runtime checks agree on what "exact" means.
struct Tolerances {
    double orthonormality = 1e-10;
    // Relative threshold on the residual column norm during Gram-Schmidt.
    double rank = 1e-10;
    // A vector y counts as lying in V when ||proj_perp(y)|| < subspace_membership.
    double subspace_membership = 1e-8;
    double reward_agreement = 1e-10;
    // Gradient-based RND training stops once the loss falls below this.
    double training_convergence = 1e-8;
    double quadrature_abs = 1e-10;
};

inline constexpr Tolerances kTolerances{};

}  // namespace caution
