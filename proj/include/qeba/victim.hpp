#ifndef QEBA_VICTIM_HPP
#define QEBA_VICTIM_HPP

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>

#include <Eigen/Core>

#include "qeba/image.hpp"

namespace qeba {

/// Whitebox victim with adversarial score S and analytic gradient,
/// used to build hard-label oracles and to validate the estimation
/// theory. grad_lipschitz is the Lipschitz constant of the gradient
/// where known (0 for linear, 2 for the quadratic victim).
struct AnalyticVictim {
  std::function<double(const Eigen::VectorXd&)> score;
  std::function<Eigen::VectorXd(const Eigen::VectorXd&)> grad;
  std::optional<double> grad_lipschitz;
  Eigen::Index dim = 0;

  /// Whitebox sign of S; +1 when S >= 0. Not query-counted — the
  /// counted path is HardLabelOracle::phi.
  int sign(const Eigen::VectorXd& x) const { return score(x) >= 0.0 ? 1 : -1; }
};

/// Decision-only oracle: exposes the sign of S, never the score.
/// Every decision increments the query counter by exactly one;
/// exceeding the optional budget throws QueryBudgetError carrying the
/// count. Safe for concurrent phi calls.
class HardLabelOracle {
 public:
  using DecisionFn = std::function<int(const Image&)>;

  HardLabelOracle(DecisionFn decide,
                  std::optional<std::uint64_t> budget = std::nullopt);

  static HardLabelOracle from_victim(
      const AnalyticVictim& victim,
      std::optional<std::uint64_t> budget = std::nullopt);

  /// Oracle that rounds the query onto the 8-bit pixel grid before
  /// deciding, modeling an API that only accepts 8-bit images.
  static HardLabelOracle from_victim_discretized(
      const AnalyticVictim& victim,
      std::optional<std::uint64_t> budget = std::nullopt);

  /// Decision in {-1, +1}. Caller clips x to [0,1]^m first.
  int phi(const Image& x);

  std::uint64_t query_count() const { return count_->load(); }
  std::optional<std::uint64_t> budget() const { return budget_; }

  /// Queries still allowed; max value when unbudgeted.
  std::uint64_t remaining() const;

  /// View of this oracle (sharing its counter) whose budget is capped
  /// at total_queries; the tighter of the two budgets wins.
  HardLabelOracle with_budget_cap(std::uint64_t total_queries) const;

 private:
  DecisionFn decide_;
  std::shared_ptr<std::atomic<std::uint64_t>> count_;
  std::optional<std::uint64_t> budget_;
};

/// S(x) = <w, x> + b, gradient w everywhere, gradient Lipschitz constant 0.
/// Throws DomainError for w = 0.
AnalyticVictim make_linear_victim(const Eigen::VectorXd& w, double b);

/// S(x) = r^2 - ||x - c||^2: the decision boundary is the sphere of the
/// given radius around the center, adversarial inside. Gradient
/// -2(x - c), gradient Lipschitz constant 2.
AnalyticVictim make_quadratic_victim(const Image& center, double radius);

/// Small fully-connected network loaded from a weights file (see the
/// format below). S = logit(mal_class) - max other logit; the max tie
/// is broken toward the lowest class index. Gradient by backprop.
AnalyticVictim make_mlp_victim(const std::filesystem::path& weights_file,
                               int mal_class = 0);

/// MLP weights file: text header
///   layers <L>
///   layer <in> <out> <tanh|relu|identity>   (L lines)
/// followed immediately by binary blocks per layer: out*in little-endian
/// float64 weights (row-major, one row per output unit), then out biases.
struct MlpLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd bias;
  enum class Activation { Tanh, Relu, Identity } activation;
};

struct MlpModel {
  std::vector<MlpLayer> layers;
  Eigen::Index input_dim() const { return layers.front().weights.cols(); }
  Eigen::Index output_dim() const { return layers.back().weights.rows(); }
};

MlpModel load_mlp(const std::filesystem::path& path);
void save_mlp(const MlpModel& model, const std::filesystem::path& path);

/// Projection onto the 8-bit pixel grid: each entry becomes k/255 with
/// k the nearest integer (half rounded away from zero). Idempotent;
/// within 1/510 of the identity in sup norm. Expects x in [0,1]^m.
Image discretize(const Image& x);
double discretize_value(double v);

}  // namespace qeba

#endif
