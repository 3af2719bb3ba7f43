#ifndef QEBA_IMAGE_HPP
#define QEBA_IMAGE_HPP

#include <cstdint>
#include <filesystem>
#include <string>

#include <Eigen/Core>

#include "qeba/errors.hpp"

namespace qeba {

struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  Eigen::Index size() const {
    return static_cast<Eigen::Index>(channels) * height * width;
  }
  bool operator==(const ImageShape&) const = default;
};

/// Flat real image vector, row-major (channel, row, column), values
/// nominally in [0,1] after clipping.
struct Image {
  ImageShape shape;
  Eigen::VectorXd data;

  Image() = default;
  Image(ImageShape s, Eigen::VectorXd d);
  static Image zeros(ImageShape s);
  static Image constant(ImageShape s, double value);

  Eigen::Index size() const { return data.size(); }
  double& at(int c, int y, int x);
  double at(int c, int y, int x) const;
};

/// Mean squared error (1/m)·Σ(a_i−b_i)². Throws DimensionError on
/// mismatched shapes.
double mse(const Image& a, const Image& b);

double l2(const Eigen::VectorXd& v);
double l2(const Image& a, const Image& b);

/// Componentwise clamp into [0,1].
Image clip01(const Image& x);
void clip01_inplace(Image& x);

/// Raw float image file ("QIMG"): header magic, version, C/H/W as u32,
/// then m little-endian float64 values row-major.
void save_qimg(const Image& img, const std::filesystem::path& path);
Image load_qimg(const std::filesystem::path& path);

/// 8-bit-per-channel image file: binary PGM (P5) for 1 channel, binary
/// PPM (P6) for 3 channels. Values are mapped with the project-wide
/// rounding rule (round half away from zero on the 0..255 grid).
void save_8bit(const Image& img, const std::filesystem::path& path);
Image load_8bit(const std::filesystem::path& path);

}  // namespace qeba

#endif
