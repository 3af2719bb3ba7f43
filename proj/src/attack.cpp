#include "qeba/attack.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "qeba/errors.hpp"

namespace qeba {

namespace {

Image mix(const Image& target, const Image& x_hat, double alpha) {
  Image out = x_hat;
  out.data = alpha * target.data + (1.0 - alpha) * x_hat.data;
  return out;
}

struct ProjectionResult {
  Image point;
  double alpha = 0.0;
  bool budget_hit = false;  // search stopped early, bracket may exceed theta
};

// Bisection on the mixing weight. Endpoints are not re-queried: the
// caller guarantees phi(x_hat) = +1 and phi(target) = -1. Stops early
// when the oracle budget runs out, returning the best adversarial
// point found so far.
ProjectionResult project_inner(const Image& target, const Image& x_hat,
                               HardLabelOracle& oracle, double theta) {
  double lo = 0.0, hi = 1.0;
  ProjectionResult result;
  result.point = x_hat;
  while (hi - lo > theta) {
    if (oracle.remaining() < 1) {
      result.budget_hit = true;
      break;
    }
    const double mid = 0.5 * (lo + hi);
    Image candidate = mix(target, x_hat, mid);
    if (oracle.phi(candidate) == 1) {
      lo = mid;
      result.point = std::move(candidate);
    } else {
      hi = mid;
    }
  }
  result.alpha = lo;
  return result;
}

}  // namespace

Image binary_search_projection(const Image& target, const Image& x_hat,
                               HardLabelOracle& oracle, double theta,
                               double* alpha_out) {
  if (theta <= 0.0 || theta >= 1.0) {
    throw DomainError("binary_search_projection: theta must be in (0,1)");
  }
  if (oracle.phi(x_hat) != 1) {
    throw ContractError("binary_search_projection: x_hat is not adversarial");
  }
  if (oracle.phi(target) != -1) {
    throw ContractError("binary_search_projection: target is adversarial");
  }
  auto result = project_inner(target, x_hat, oracle, theta);
  if (alpha_out) *alpha_out = result.alpha;
  return result.point;
}

double step_size(std::int64_t t, double dist) {
  if (t < 1) throw DomainError("step_size: t must be >= 1");
  if (dist < 0.0) throw DomainError("step_size: dist must be >= 0");
  return dist / std::sqrt(static_cast<double>(t));
}

std::optional<double> probe_delta(double dist, Eigen::Index m) {
  if (dist < 0.0) throw DomainError("probe_delta: dist must be >= 0");
  if (m < 1) throw DomainError("probe_delta: m must be >= 1");
  if (dist == 0.0) return std::nullopt;
  return dist / static_cast<double>(m);
}

std::optional<Image> gradient_step(const Image& x, const Eigen::VectorXd& g,
                                   double xi, HardLabelOracle& oracle) {
  if (std::abs(g.norm() - 1.0) > 1e-8) {
    throw ContractError("gradient_step: direction must be unit length");
  }
  if (xi <= 0.0) throw DomainError("gradient_step: xi must be > 0");
  if (x.size() != g.size()) {
    throw DimensionError("gradient_step: direction length mismatch");
  }
  double step = xi;
  for (int k = 0; k <= 20; ++k, step *= 0.5) {
    if (oracle.remaining() < 1) return std::nullopt;
    Image candidate = x;
    candidate.data = x.data + step * g;
    clip01_inplace(candidate);
    if (oracle.phi(candidate) == 1) return candidate;
  }
  return std::nullopt;
}

AttackTrace run_attack(const AttackConfig& config, HardLabelOracle& oracle,
                       const SubspaceBasis& basis) {
  const Image& src = config.source;
  const Image& tgt = config.target;
  if (!(src.shape == tgt.shape)) {
    throw ConfigError("attack: source and target shapes differ");
  }
  if (src.size() != basis.m()) {
    throw ConfigError("attack: basis ambient dimension " +
                      std::to_string(basis.m()) + " != image size " +
                      std::to_string(src.size()));
  }
  if (config.batch < 1) throw ConfigError("attack: batch must be >= 1");

  // the attack's own budget covers everything from here on, including
  // the two verification queries; counts stay on the caller's oracle
  HardLabelOracle capped =
      oracle.with_budget_cap(oracle.query_count() + config.max_queries);

  // start-of-attack invariant, consuming 2 queries
  if (capped.phi(src) != 1) {
    throw ConfigError("attack: source is not classified adversarial");
  }
  if (capped.phi(tgt) != -1) {
    throw ConfigError("attack: target is classified adversarial");
  }

  RngStream rng = RngStream(config.seed).derive(0);
  GradEstimateOptions est_options;
  est_options.orthogonalize = config.orthogonalize_directions;
  est_options.control_variate = config.control_variate;

  AttackTrace trace;
  const auto record = [&](std::int64_t t, double xi, double delta,
                          double alpha, int fails, const Image& iterate) {
    TraceRecord rec;
    rec.iteration = t;
    rec.cumulative_queries = oracle.query_count();
    rec.mse = mse(iterate, tgt);
    rec.xi = xi;
    rec.delta = delta;
    rec.alpha = alpha;
    rec.step_failures = fails;
    trace.records.push_back(rec);
    trace.iterates.push_back(iterate);
  };
  const auto is_snapshot_iter = [](std::int64_t t) {
    return t > 0 && (t & (t - 1)) == 0;  // powers of two
  };

  // initialization: project the source onto the boundary
  auto projected = project_inner(tgt, src, capped, config.theta);
  Image x_adv = std::move(projected.point);
  record(0, 0.0, 0.0, projected.alpha, 0, x_adv);

  const Eigen::Index m = src.size();
  for (std::int64_t t = 1;; ++t) {
    const double dist = l2(x_adv, tgt);
    const auto delta_opt = probe_delta(dist, m);
    if (!delta_opt || dist < 1e-12) {
      trace.converged = true;
      break;
    }
    if (capped.remaining() < static_cast<std::uint64_t>(config.batch)) break;

    const double delta_t = *delta_opt;
    const double xi_t = step_size(t, dist);
    const GradEstimate est =
        config.discretized
            ? estimate_gradient_discretized(x_adv, basis, config.batch,
                                            delta_t, capped, rng, est_options)
            : estimate_gradient(x_adv, basis, config.batch, delta_t, capped,
                                rng, est_options);

    int fails = 0;
    Image x_hat = x_adv;
    if (est.degenerate) {
      fails = 1;
    } else {
      auto stepped = gradient_step(x_adv, est.direction, xi_t, capped);
      if (stepped) {
        x_hat = std::move(*stepped);
      } else {
        fails = 1;
      }
    }
    projected = project_inner(tgt, x_hat, capped, config.theta);
    x_adv = std::move(projected.point);
    record(t, xi_t, delta_t, projected.alpha, fails, x_adv);
    if (is_snapshot_iter(t)) trace.snapshots.emplace(t, x_adv);
    if (capped.remaining() == 0) break;
  }

  trace.final_image = x_adv;
  if (!trace.records.empty()) {
    trace.snapshots.insert_or_assign(trace.records.back().iteration,
                                     trace.final_image);
  }
  return trace;
}

void write_trace_csv(const AttackTrace& trace,
                     const std::filesystem::path& path,
                     const std::vector<std::string>& metadata) {
  std::ofstream os(path);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  for (const auto& line : metadata) os << "# " << line << "\n";
  os << "iteration,cumulative_queries,mse,xi,delta,alpha,step_failures\n";
  char buf[256];
  for (const auto& rec : trace.records) {
    std::snprintf(buf, sizeof buf, "%lld,%llu,%.12g,%.12g,%.12g,%.12g,%d\n",
                  static_cast<long long>(rec.iteration),
                  static_cast<unsigned long long>(rec.cumulative_queries),
                  rec.mse, rec.xi, rec.delta, rec.alpha, rec.step_failures);
    os << buf;
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

}  // namespace qeba
