#ifndef QEBA_DIRECTIONS_HPP
#define QEBA_DIRECTIONS_HPP

#include <Eigen/Core>

#include "qeba/rng.hpp"

namespace qeba {

/// Samples B unit-norm directions in R^n as columns of an n x B matrix.
/// Directions are standard Gaussian draws normalized to the unit sphere.
/// With orthogonalize set, the batch is additionally made pairwise
/// orthogonal (modified Gram-Schmidt with one re-orthogonalization
/// pass); this requires B <= n and throws InfeasibleError otherwise.
///
/// Deterministic given (seed state, n, B, orthogonalize).
Eigen::MatrixXd sample_unit_directions(Eigen::Index n, Eigen::Index B,
                                       RngStream& rng,
                                       bool orthogonalize = false);

}  // namespace qeba

#endif
