#ifndef QEBA_ATTACK_HPP
#define QEBA_ATTACK_HPP

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qeba/gradest.hpp"
#include "qeba/image.hpp"
#include "qeba/subspace.hpp"
#include "qeba/victim.hpp"

namespace qeba {

struct AttackConfig {
  Image source;  // classified +1 (malicious)
  Image target;  // classified -1 (benign); the image to approach
  Eigen::Index batch = 100;          // oracle probes per gradient estimate
  std::uint64_t max_queries = 20000;
  double theta = 1e-3;               // binary-search bracket width on alpha
  std::uint64_t seed = 0;
  bool discretized = false;
  bool control_variate = false;
  bool orthogonalize_directions = false;
};

struct TraceRecord {
  std::int64_t iteration = 0;
  std::uint64_t cumulative_queries = 0;
  double mse = 0.0;
  double xi = 0.0;
  double delta = 0.0;
  double alpha = 0.0;
  int step_failures = 0;  // skipped gradient moves this iteration
};

struct AttackTrace {
  std::vector<TraceRecord> records;
  /// One iterate per record (in-memory only; all are adversarial).
  std::vector<Image> iterates;
  /// Images persisted to disk: iterations 1, 2, 4, 8, ... plus the
  /// final one.
  std::map<std::int64_t, Image> snapshots;
  Image final_image;
  bool converged = false;
};

/// Projects x_hat toward the target along the mixing segment
/// alpha*target + (1-alpha)*x_hat by binary search on alpha, returning
/// the adversarial endpoint of the final bracket (width <= theta).
/// Verifies phi(x_hat) = +1 and phi(target) = -1 first (2 queries,
/// ContractError on violation), then spends at most ceil(log2(1/theta))
/// bisection queries. alpha_out receives the returned mixing weight.
Image binary_search_projection(const Image& target, const Image& x_hat,
                               HardLabelOracle& oracle, double theta,
                               double* alpha_out = nullptr);

/// xi_t = dist / sqrt(t).
double step_size(std::int64_t t, double dist);

/// delta_t = dist / m; nullopt when dist = 0 (attack converged).
std::optional<double> probe_delta(double dist, Eigen::Index m);

/// Moves from a boundary point along the unit direction g with
/// geometric back-off: returns clip(x + xi/2^k * g) for the smallest
/// k >= 0 that is adversarial, k <= 20. nullopt when no halving
/// succeeds (step-failure; the caller skips the move). Requires
/// ||g|| = 1 within 1e-8.
std::optional<Image> gradient_step(const Image& x, const Eigen::VectorXd& g,
                                   double xi, HardLabelOracle& oracle);

/// Full attack loop: project the source to the boundary, then iterate
/// gradient estimation (probe radius delta_t), gradient step (xi_t with
/// back-off) and projection toward the target until the query budget
/// runs out or the iterate converges onto the target. Every recorded
/// iterate is adversarial; cumulative query counts equal the oracle
/// counter at recording time. Budget exhaustion truncates the trace;
/// identical config and oracle state reproduce the trace bit for bit.
AttackTrace run_attack(const AttackConfig& config, HardLabelOracle& oracle,
                       const SubspaceBasis& basis);

/// Trace CSV: '#'-prefixed metadata lines, then
/// iteration,cumulative_queries,mse,xi,delta,alpha,step_failures.
void write_trace_csv(const AttackTrace& trace,
                     const std::filesystem::path& path,
                     const std::vector<std::string>& metadata = {});

}  // namespace qeba

#endif
