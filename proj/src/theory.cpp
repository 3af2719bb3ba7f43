#include "qeba/theory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "qeba/directions.hpp"
#include "qeba/errors.hpp"

namespace qeba {

namespace {

// log Beta(a, b) via lgamma; the direct Gamma product overflows past
// a ~ 171.
double log_beta(double a, double b) {
  return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
}

}  // namespace

double c_coefficient(Eigen::Index n) {
  if (n < 2) throw DomainError("c_coefficient: n must be >= 2");
  const double nd = static_cast<double>(n);
  const double log_denom = log_beta((nd - 1.0) / 2.0, 0.5);
  return 2.0 * std::sqrt(nd) * std::exp(-log_denom) / (nd - 1.0);
}

double expected_cosine(Eigen::Index n, Eigen::Index B, double rho) {
  if (B < 1) throw DomainError("expected_cosine: B must be >= 1");
  if (rho < 0.0 || rho > 1.0) {
    throw DomainError("expected_cosine: rho must lie in [0,1]");
  }
  return c_coefficient(n) *
         std::sqrt(rho * static_cast<double>(B) / static_cast<double>(n));
}

double lower_bound_factor(Eigen::Index n, double delta, double lipschitz,
                          double grad_norm) {
  if (n < 2) throw DomainError("lower_bound_factor: n must be >= 2");
  if (delta < 0.0) throw DomainError("lower_bound_factor: delta must be >= 0");
  if (lipschitz < 0.0) {
    throw DomainError("lower_bound_factor: Lipschitz constant must be >= 0");
  }
  if (grad_norm <= 0.0) {
    throw DomainError("lower_bound_factor: grad_norm must be > 0");
  }
  const double w = lipschitz * delta / (2.0 * grad_norm);
  if (w >= 1.0) {
    throw BoundVacuousError("lower_bound_factor: L*delta/(2||grad||) = " +
                            std::to_string(w) +
                            " >= 1, bound is uninformative");
  }
  const double nd = static_cast<double>(n);
  // (1 - w^2)^((n-1)/2) in the log domain for stability at large n
  return 2.0 * std::exp(0.5 * (nd - 1.0) * std::log1p(-w * w)) - 1.0;
}

double coordinate_density(double x, Eigen::Index n) {
  if (n < 2) throw DomainError("coordinate_density: n must be >= 2");
  if (!(std::abs(x) < 1.0)) {
    throw DomainError("coordinate_density: |x| must be < 1");
  }
  const double nd = static_cast<double>(n);
  const double log_p = 0.5 * (nd - 3.0) * std::log1p(-x * x) -
                       log_beta((nd - 1.0) / 2.0, 0.5);
  return std::exp(log_p);
}

BoundReport measure_cosine(const AnalyticVictim& victim,
                           const Image& boundary_point,
                           const SubspaceBasis& basis, Eigen::Index B,
                           double delta, Eigen::Index trials, RngStream& rng,
                           bool orthogonalize) {
  if (trials < 2) throw DomainError("measure_cosine: need >= 2 trials");
  if (delta <= 0.0) throw DomainError("measure_cosine: delta must be > 0");
  const Eigen::VectorXd& x = boundary_point.data;
  if (x.size() != victim.dim || x.size() != basis.m()) {
    throw DimensionError("measure_cosine: dimension mismatch");
  }
  const Eigen::VectorXd grad = victim.grad(x);
  const double grad_norm = grad.norm();
  if (grad_norm == 0.0) {
    throw ContractError("measure_cosine: gradient vanishes at the point");
  }
  if (std::abs(victim.score(x)) >= 1e-9 * grad_norm) {
    throw ContractError("measure_cosine: point is not on the boundary "
                        "(|S| >= 1e-9 ||grad||)");
  }
  const Eigen::VectorXd proj = basis.forward(basis.adjoint(grad));
  const double proj_norm = proj.norm();

  double sum = 0.0, sum_sq = 0.0;
  double sum_p = 0.0, sum_p_sq = 0.0;
  for (Eigen::Index trial = 0; trial < trials; ++trial) {
    RngStream trial_rng = rng.derive(static_cast<std::uint64_t>(trial));
    const Eigen::MatrixXd v =
        sample_unit_directions(basis.n(), B, trial_rng, orthogonalize);
    Eigen::VectorXd raw = Eigen::VectorXd::Zero(x.size());
    for (Eigen::Index b = 0; b < B; ++b) {
      Eigen::VectorXd u = basis.forward(v.col(b));
      const double norm = u.norm();
      if (norm > 0.0) u /= norm;
      const double phi = victim.score(x + delta * u) >= 0.0 ? 1.0 : -1.0;
      raw += phi * u;
    }
    raw /= static_cast<double>(B);
    const double raw_norm = raw.norm();
    const double cos_grad =
        raw_norm > 0.0 ? raw.dot(grad) / (raw_norm * grad_norm) : 0.0;
    sum += cos_grad;
    sum_sq += cos_grad * cos_grad;
    if (proj_norm > 0.0) {
      const double cos_proj =
          raw_norm > 0.0 ? raw.dot(proj) / (raw_norm * proj_norm) : 0.0;
      sum_p += cos_proj;
      sum_p_sq += cos_proj * cos_proj;
    }
  }
  const double td = static_cast<double>(trials);
  const auto stderr_of = [td](double s, double s_sq) {
    const double mean = s / td;
    const double var = std::max(0.0, s_sq / td - mean * mean);
    return std::sqrt(var / (td - 1.0));
  };

  BoundReport report;
  report.n = basis.n();
  report.batch = B;
  report.rho = proj_norm / grad_norm;
  report.delta = delta;
  report.lipschitz = victim.grad_lipschitz.value_or(0.0);
  report.grad_norm = grad_norm;
  report.c_n = c_coefficient(basis.n());
  report.upper = report.c_n * report.rho *
                 std::sqrt(static_cast<double>(B) /
                           static_cast<double>(basis.n()));
  if (victim.grad_lipschitz && *victim.grad_lipschitz > 0.0) {
    try {
      report.lower = lower_bound_factor(basis.n(), delta,
                                        *victim.grad_lipschitz, grad_norm) *
                     report.upper;
    } catch (const BoundVacuousError&) {
      report.lower = -1.0;  // any cosine satisfies the vacuous bound
    }
  } else {
    report.lower = report.upper;  // L = 0: the sandwich is tight
  }
  report.measured = sum / td;
  report.stderr_mean = stderr_of(sum, sum_sq);
  report.trials = trials;
  report.measured_proj = sum_p / td;
  report.stderr_proj = stderr_of(sum_p, sum_p_sq);
  return report;
}

void write_bound_reports_csv(const std::vector<BoundReport>& reports,
                             const std::filesystem::path& path,
                             const std::vector<std::string>& metadata) {
  std::ofstream os(path);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  for (const auto& line : metadata) os << "# " << line << "\n";
  os << "n,B,rho,delta,L,grad_norm,c_n,lower,upper,measured,stderr,trials\n";
  char buf[512];
  for (const auto& r : reports) {
    std::snprintf(
        buf, sizeof buf,
        "%lld,%lld,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,"
        "%lld\n",
        static_cast<long long>(r.n), static_cast<long long>(r.batch), r.rho,
        r.delta, r.lipschitz, r.grad_norm, r.c_n, r.lower, r.upper, r.measured,
        r.stderr_mean, static_cast<long long>(r.trials));
    os << buf;
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

Image linear_boundary_point(const Eigen::VectorXd& w, double b,
                            ImageShape shape, RngStream& rng) {
  if (w.size() != shape.size()) {
    throw DimensionError("linear_boundary_point: w length != C*H*W");
  }
  const double wnorm2 = w.squaredNorm();
  if (wnorm2 == 0.0) throw DomainError("linear_boundary_point: w = 0");
  // random interior start, then exact step along w onto the hyperplane
  Eigen::VectorXd x0(w.size());
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    x0[i] = 0.4 + 0.2 * rng.uniform01();
  }
  const double a = -(w.dot(x0) + b) / wnorm2;
  return Image(shape, x0 + a * w);
}

Image quadratic_boundary_point(const Image& center, double radius,
                               ImageShape shape, RngStream& rng) {
  if (center.size() != shape.size()) {
    throw DimensionError("quadratic_boundary_point: center shape mismatch");
  }
  if (radius <= 0.0) {
    throw DomainError("quadratic_boundary_point: radius must be > 0");
  }
  Eigen::VectorXd dir = rng.gaussian_vector(center.size());
  const double norm = dir.norm();
  if (norm == 0.0) dir[0] = 1.0;
  else dir /= norm;
  return Image(shape, center.data + radius * dir);
}

}  // namespace qeba
