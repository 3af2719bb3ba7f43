#include "qeba/directions.hpp"

#include <string>

#include "qeba/errors.hpp"

namespace qeba {

Eigen::MatrixXd sample_unit_directions(Eigen::Index n, Eigen::Index B,
                                       RngStream& rng, bool orthogonalize) {
  if (n < 1) throw DomainError("sample_unit_directions: n must be >= 1");
  if (B < 1) throw DomainError("sample_unit_directions: B must be >= 1");
  if (orthogonalize && B > n) {
    throw InfeasibleError("sample_unit_directions: cannot orthogonalize " +
                          std::to_string(B) + " directions in dimension " +
                          std::to_string(n));
  }
  Eigen::MatrixXd U(n, B);
  for (Eigen::Index j = 0; j < B; ++j) {
    Eigen::VectorXd v = rng.gaussian_vector(n);
    if (orthogonalize) {
      // A draw can land (numerically) in the span of the previous
      // columns; redraw until it does not.
      while (true) {
        Eigen::VectorXd w = v;
        for (int pass = 0; pass < 2; ++pass) {
          for (Eigen::Index k = 0; k < j; ++k) {
            w -= U.col(k).dot(w) * U.col(k);
          }
        }
        if (w.norm() > 1e-12 * v.norm()) {
          v = w;
          break;
        }
        v = rng.gaussian_vector(n);
      }
    }
    const double norm = v.norm();
    if (norm == 0.0) {
      // all-zero Gaussian draw is impossible in practice; guard anyway
      U.col(j).setZero();
      U(0, j) = 1.0;
    } else {
      U.col(j) = v / norm;
    }
  }
  return U;
}

}  // namespace qeba
