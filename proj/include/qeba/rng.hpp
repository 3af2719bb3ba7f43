#ifndef QEBA_RNG_HPP
#define QEBA_RNG_HPP

#include <cstdint>
#include <random>

#include <Eigen/Core>

namespace qeba {

/// Deterministic random stream: the same seed yields the same sequence,
/// bit for bit, on every run of the same build. Gaussian variates are
/// produced by the Marsaglia polar method on top of uniform doubles so
/// the sequence does not depend on the standard library's distribution
/// implementations.
///
/// Streams are single-owner. Workers get independent substreams through
/// derive(), which mixes a fixed offset into the root seed.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  /// Independent substream at a fixed offset from this stream's seed.
  RngStream derive(std::uint64_t offset) const;

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next_u64();

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform01();

  /// Standard normal variate.
  double gaussian();

  Eigen::VectorXd gaussian_vector(Eigen::Index n);

 private:
  std::uint64_t seed_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qeba

#endif
