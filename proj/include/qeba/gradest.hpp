#ifndef QEBA_GRADEST_HPP
#define QEBA_GRADEST_HPP

#include <cstdint>

#include <Eigen/Core>

#include "qeba/image.hpp"
#include "qeba/rng.hpp"
#include "qeba/subspace.hpp"
#include "qeba/victim.hpp"

namespace qeba {

/// Monte Carlo gradient-direction estimate at a boundary point:
/// raw = (1/B) sum phi(clip(x + delta u_b)) u_b, direction = raw/||raw||.
///
/// degenerate is set when the batch carried no boundary information
/// (all decisions equal, or raw exactly zero) even after one retry with
/// fresh directions; direction is zero in the raw = 0 case.
/// queries_used is the number of oracle queries this estimate consumed:
/// B for a clean batch, 2B when the retry fired.
struct GradEstimate {
  Eigen::VectorXd direction;
  Eigen::VectorXd raw;
  Eigen::Index batch = 0;
  double delta = 0.0;
  std::uint64_t queries_used = 0;
  bool degenerate = false;
};

struct GradEstimateOptions {
  /// Orthogonalize the coefficient-space directions (the setting the
  /// cosine bounds assume). The attack path uses i.i.d. directions.
  bool orthogonalize = false;
  /// Subtract the batch-mean decision before weighting (the baseline
  /// attack's variance-reduction ablation; off per the plain average).
  bool control_variate = false;
};

/// Estimates the gradient direction of the oracle's score at x using B
/// probes of radius delta drawn from the basis subspace. Directions are
/// unit vectors in coefficient space pushed forward and re-normalized.
/// Every query point is clipped into [0,1]^m. Deterministic given the
/// rng state. Consumes exactly B queries (2B if the degenerate retry
/// fires); a budget running out mid-batch surfaces as QueryBudgetError.
GradEstimate estimate_gradient(const Image& x, const SubspaceBasis& basis,
                               Eigen::Index B, double delta,
                               HardLabelOracle& oracle, RngStream& rng,
                               const GradEstimateOptions& options = {});

/// Discretization-aware variant for oracles that round queries onto the
/// 8-bit grid: decisions are taken on the rounded query point and each
/// term is weighted by the effective perturbation
/// u'_b = (P_rd(clip(x + delta u_b)) - x) / delta. Terms whose
/// perturbation rounds away entirely contribute zero (and are counted).
GradEstimate estimate_gradient_discretized(
    const Image& x, const SubspaceBasis& basis, Eigen::Index B, double delta,
    HardLabelOracle& oracle, RngStream& rng,
    const GradEstimateOptions& options = {});

}  // namespace qeba

#endif
