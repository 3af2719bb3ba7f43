#ifndef QEBA_GRADIENT_STORE_HPP
#define QEBA_GRADIENT_STORE_HPP

#include <filesystem>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "qeba/image.hpp"
#include "qeba/victim.hpp"

namespace qeba {

/// On-disk, row-sharded matrix of reference gradients: one length-m
/// record per gradient, retrievable in insertion order. Readers stream
/// a bounded window of rows at a time; the full matrix is never
/// materialized by the store itself.
class GradientStore {
 public:
  /// Creates an empty store file (truncates any existing one).
  static GradientStore create(const std::filesystem::path& path,
                              Eigen::Index dim);
  static GradientStore open(const std::filesystem::path& path);

  void append(const Eigen::VectorXd& g);

  Eigen::Index rows() const { return rows_; }
  Eigen::Index dim() const { return dim_; }
  const std::filesystem::path& path() const { return path_; }

  /// Streams rows in insertion order as blocks of at most window rows
  /// (block rows are the store rows). fn(first_row_index, block).
  void sweep(Eigen::Index window,
             const std::function<void(Eigen::Index,
                                      const Eigen::MatrixXd&)>& fn) const;

  /// Single row by index (reads from disk).
  Eigen::VectorXd row(Eigen::Index k) const;

 private:
  GradientStore(std::filesystem::path path, Eigen::Index dim,
                Eigen::Index rows);
  std::filesystem::path path_;
  Eigen::Index dim_ = 0;
  Eigen::Index rows_ = 0;
};

/// Builds a store whose k-th row is the mean over the given victims of
/// grad S at probe k (the per-victim gradients averaged across
/// reference models). Throws DimensionError on mismatched dims and
/// DomainError when victims or probes are empty.
GradientStore build_gradient_store(const std::vector<AnalyticVictim>& victims,
                                   const std::vector<Image>& probes,
                                   const std::filesystem::path& path);

}  // namespace qeba

#endif
