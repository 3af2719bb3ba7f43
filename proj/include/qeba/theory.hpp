#ifndef QEBA_THEORY_HPP
#define QEBA_THEORY_HPP

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qeba/image.hpp"
#include "qeba/rng.hpp"
#include "qeba/subspace.hpp"
#include "qeba/victim.hpp"

namespace qeba {

/// Dimension coefficient of the expected-cosine limit:
/// c_n = 2 sqrt(n) / (Beta((n-1)/2, 1/2) * (n-1)), evaluated in the log
/// domain via lgamma. Strictly inside (2/pi, 1) and decreasing toward
/// sqrt(2/pi). Requires n >= 2.
double c_coefficient(Eigen::Index n);

/// Expected cosine similarity of the subspace gradient estimate in the
/// small-delta limit, c_n * sqrt(rho * B / n), where rho is the
/// fraction of the squared gradient norm captured by the subspace
/// (rho = 1: gradient fully inside; the captured norm fraction is
/// sqrt(rho)). Requires rho in [0,1].
double expected_cosine(Eigen::Index n, Eigen::Index B, double rho);

/// Multiplier of the lower cosine bound,
/// 2 (1 - w^2)^((n-1)/2) - 1 with w = L*delta / (2 ||grad||).
/// Equals 1 when delta = 0 or L = 0. Throws BoundVacuousError when
/// w >= 1 (the bound would say nothing).
double lower_bound_factor(Eigen::Index n, double delta, double lipschitz,
                          double grad_norm);

/// Density of one coordinate of a uniform point on the (n-1)-sphere:
/// p(x) = (1 - x^2)^((n-3)/2) / Beta((n-1)/2, 1/2) on (-1, 1).
double coordinate_density(double x, Eigen::Index n);

struct BoundReport {
  Eigen::Index n = 0;
  Eigen::Index batch = 0;
  double rho = 0.0;        // norm fraction ||proj grad|| / ||grad||
  double delta = 0.0;
  double lipschitz = 0.0;  // 0 when unknown/linear
  double grad_norm = 0.0;
  double c_n = 0.0;
  double lower = 0.0;      // -1 when the lower bound is vacuous
  double upper = 0.0;
  double measured = 0.0;   // mean cosine vs the analytic gradient
  double stderr_mean = 0.0;
  Eigen::Index trials = 0;
  // extras beyond the CSV schema: cosine vs the projected gradient,
  // to check measured ~= rho * measured_proj
  double measured_proj = 0.0;
  double stderr_proj = 0.0;
};

/// Whitebox Monte Carlo validation of the cosine bounds at a boundary
/// point (|S| < 1e-9 ||grad S|| required; ContractError otherwise).
/// Runs `trials` independent estimations with orthogonalized
/// directions by default, evaluating phi straight from the victim's
/// score — the one uncounted phi path in the project — and without box
/// clipping, matching the idealized setting the bounds assume.
BoundReport measure_cosine(const AnalyticVictim& victim,
                           const Image& boundary_point,
                           const SubspaceBasis& basis, Eigen::Index B,
                           double delta, Eigen::Index trials, RngStream& rng,
                           bool orthogonalize = true);

/// BoundReport CSV with '#'-prefixed metadata, columns
/// n,B,rho,delta,L,grad_norm,c_n,lower,upper,measured,stderr,trials.
void write_bound_reports_csv(const std::vector<BoundReport>& reports,
                             const std::filesystem::path& path,
                             const std::vector<std::string>& metadata = {});

/// Boundary-point construction for validation runs (analytic, not by
/// binary search, so the |S| ~ 0 precondition holds to rounding error).
/// Linear: solves <w, x0 + a*d> + b = 0 along a descent line from x0.
/// Quadratic: radial projection of x0 onto the sphere.
Image linear_boundary_point(const Eigen::VectorXd& w, double b,
                            ImageShape shape, RngStream& rng);
Image quadratic_boundary_point(const Image& center, double radius,
                               ImageShape shape, RngStream& rng);

}  // namespace qeba

#endif
