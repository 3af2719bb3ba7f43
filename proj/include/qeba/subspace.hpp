#ifndef QEBA_SUBSPACE_HPP
#define QEBA_SUBSPACE_HPP

#include <filesystem>
#include <memory>
#include <vector>

#include <Eigen/Core>

#include "qeba/gradient_store.hpp"
#include "qeba/image.hpp"
#include "qeba/rng.hpp"

namespace qeba {

/// Linear map from an n-dimensional coefficient space into the
/// m-dimensional image space, with its adjoint. Perturbation directions
/// are sampled in coefficient space and pushed forward.
///
/// Immutable after construction; forward/adjoint are safe to call
/// concurrently.
class SubspaceBasis {
 public:
  enum class Kind { Full, Spatial, Dct, Pca, Explicit };

  /// Identity map on R^m.
  static SubspaceBasis full(Eigen::Index m);

  /// Per-channel bilinear upsampling from (floor(H/r), floor(W/r)) to
  /// (H, W) with align-corners sample placement, so r = 1 is exactly
  /// the identity. The raw map is not orthonormal; with orthonormalize
  /// set, the materialized map is replaced by its thin-QR Q factor
  /// (returned as an Explicit basis). Low-resolution sides below 2
  /// throw DomainError.
  static SubspaceBasis spatial(ImageShape shape, int r,
                               bool orthonormalize = false);

  /// Per-channel inverse 2-D DCT of the lowest floor(N/r) x floor(N/r)
  /// frequency block, zero-padded. Orthonormal. Requires square images
  /// (H = W = N); throws DimensionError otherwise.
  static SubspaceBasis dct(ImageShape shape, int r);

  /// Basis from an explicit m x n column matrix.
  static SubspaceBasis explicit_matrix(Eigen::MatrixXd w, bool orthonormal,
                                       Kind kind = Kind::Explicit);

  /// Random orthonormal basis: thin-QR Q factor of an m x n Gaussian.
  static SubspaceBasis random_orthonormal(Eigen::Index m, Eigen::Index n,
                                          RngStream& rng);

  /// Orthonormal basis whose span contains g (first column g/||g||,
  /// remaining columns random orthonormal completions), so the captured
  /// gradient fraction is exactly 1.
  static SubspaceBasis span_containing(const Eigen::VectorXd& g,
                                       Eigen::Index n, RngStream& rng);

  Eigen::Index m() const;
  Eigen::Index n() const;
  bool orthonormal() const;
  Kind kind() const;

  Eigen::VectorXd forward(const Eigen::VectorXd& v) const;
  Eigen::VectorXd adjoint(const Eigen::VectorXd& x) const;

  /// Dense m x n matrix of the map (identity columns for Full, basis
  /// images for Spatial/Dct, stored columns for Pca/Explicit).
  Eigen::MatrixXd materialize() const;

  /// Image shape / reduction factor for Spatial and Dct kinds.
  ImageShape image_shape() const;
  int reduction_factor() const;

  struct Impl;  // opaque payload, defined in subspace.cpp

 private:
  explicit SubspaceBasis(std::shared_ptr<const Impl> impl);
  std::shared_ptr<const Impl> impl_;
};

/// Fraction of g's norm lying in span(W): ||forward(adjoint(g))|| / ||g||.
/// Requires an orthonormal basis (ContractError otherwise) and g != 0
/// (DomainError).
double rho(const SubspaceBasis& basis, const Eigen::VectorXd& g);

/// Basis cache file ("QEBA"): magic, version u32, m and n as u64, kind
/// tag u32, orthonormal u8; then kind parameters (C,H,W,r as u32) for
/// spatial/dct, or n*m little-endian float64 column-major for
/// pca/explicit. load(save(b)) reproduces the basis bit-identically.
void save_basis(const SubspaceBasis& basis, const std::filesystem::path& path);
SubspaceBasis load_basis(const std::filesystem::path& path);

/// Top-n principal directions of the gradients in the store (columns of
/// the returned basis), computed by randomized range finding: Gaussian
/// test matrix of width n + oversample, power_iters power iterations
/// with re-orthonormalization, then an SVD of the projected small
/// matrix. The store is only touched through streaming row sweeps.
/// Rows are not mean-centered: the gradients themselves are the
/// directions of interest. Column signs are fixed so the first nonzero
/// entry is positive. Throws InfeasibleError when n > min(K, m).
SubspaceBasis pca_basis(const GradientStore& store, Eigen::Index n,
                        Eigen::Index oversample, int power_iters,
                        RngStream& rng);

}  // namespace qeba

#endif
