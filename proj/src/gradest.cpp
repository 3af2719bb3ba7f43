#include "qeba/gradest.hpp"

#include "qeba/directions.hpp"
#include "qeba/errors.hpp"

namespace qeba {

namespace {

struct BatchResult {
  Eigen::VectorXd raw;
  bool all_equal = false;
};

// One batch of B probes. probe_fn finalizes the clipped query point in
// place (e.g. rounds it) and returns the vector that multiplies phi_b
// in the average.
template <typename ProbeFn>
BatchResult run_batch(const Image& x, const SubspaceBasis& basis,
                      Eigen::Index B, double delta, HardLabelOracle& oracle,
                      RngStream& rng, const GradEstimateOptions& options,
                      ProbeFn&& probe_fn) {
  const Eigen::MatrixXd v =
      sample_unit_directions(basis.n(), B, rng, options.orthogonalize);
  Eigen::MatrixXd weights(x.size(), B);
  Eigen::VectorXd phis(B);
  Image query = x;
  for (Eigen::Index b = 0; b < B; ++b) {
    Eigen::VectorXd u = basis.forward(v.col(b));
    const double norm = u.norm();
    if (norm > 0.0) u /= norm;
    query.data = x.data + delta * u;
    clip01_inplace(query);
    weights.col(b) = probe_fn(u, query);
    phis[b] = static_cast<double>(oracle.phi(query));
  }
  BatchResult result;
  // a single-probe batch has no notion of disagreement
  result.all_equal = B >= 2 && (phis.array() == phis[0]).all();
  if (options.control_variate) phis.array() -= phis.mean();
  result.raw = (weights * phis) / static_cast<double>(B);
  return result;
}

template <typename ProbeFn>
GradEstimate estimate_impl(const Image& x, const SubspaceBasis& basis,
                           Eigen::Index B, double delta,
                           HardLabelOracle& oracle, RngStream& rng,
                           const GradEstimateOptions& options,
                           ProbeFn&& probe_fn) {
  if (B < 1) throw DomainError("estimate_gradient: B must be >= 1");
  if (delta <= 0.0) throw DomainError("estimate_gradient: delta must be > 0");
  if (x.size() != basis.m()) {
    throw DimensionError("estimate_gradient: image size " +
                         std::to_string(x.size()) + " != basis m = " +
                         std::to_string(basis.m()));
  }
  GradEstimate est;
  est.batch = B;
  est.delta = delta;
  auto batch = run_batch(x, basis, B, delta, oracle, rng, options, probe_fn);
  est.queries_used = B;
  const auto is_degenerate = [](const BatchResult& r) {
    return r.all_equal || r.raw.norm() == 0.0;
  };
  if (is_degenerate(batch) &&
      oracle.remaining() >= static_cast<std::uint64_t>(B)) {
    // one retry with fresh directions, then give up
    batch = run_batch(x, basis, B, delta, oracle, rng, options, probe_fn);
    est.queries_used += B;
  }
  est.raw = batch.raw;
  est.degenerate = is_degenerate(batch);
  const double norm = est.raw.norm();
  est.direction = norm > 0.0 ? Eigen::VectorXd(est.raw / norm)
                             : Eigen::VectorXd::Zero(est.raw.size());
  return est;
}

}  // namespace

GradEstimate estimate_gradient(const Image& x, const SubspaceBasis& basis,
                               Eigen::Index B, double delta,
                               HardLabelOracle& oracle, RngStream& rng,
                               const GradEstimateOptions& options) {
  return estimate_impl(
      x, basis, B, delta, oracle, rng, options,
      [](const Eigen::VectorXd& u, Image&) { return u; });
}

GradEstimate estimate_gradient_discretized(
    const Image& x, const SubspaceBasis& basis, Eigen::Index B, double delta,
    HardLabelOracle& oracle, RngStream& rng,
    const GradEstimateOptions& options) {
  return estimate_impl(
      x, basis, B, delta, oracle, rng, options,
      [&x, delta](const Eigen::VectorXd&, Image& query) {
        query = discretize(query);
        return Eigen::VectorXd((query.data - x.data) / delta);
      });
}

}  // namespace qeba
