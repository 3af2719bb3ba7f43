#include "qeba/image.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts unsupported");

namespace qeba {

namespace {

void require_same_shape(const Image& a, const Image& b, const char* op) {
  if (!(a.shape == b.shape)) {
    throw DimensionError(std::string(op) + ": shape mismatch (" +
                         std::to_string(a.shape.channels) + "x" +
                         std::to_string(a.shape.height) + "x" +
                         std::to_string(a.shape.width) + " vs " +
                         std::to_string(b.shape.channels) + "x" +
                         std::to_string(b.shape.height) + "x" +
                         std::to_string(b.shape.width) + ")");
  }
}

constexpr std::uint32_t kQimgVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is, const std::filesystem::path& path) {
  std::uint32_t v = 0;
  const auto off = is.tellg();
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw ParseError(path.string() + ": truncated at byte offset " +
                     std::to_string(static_cast<long long>(off)));
  }
  return v;
}

}  // namespace

Image::Image(ImageShape s, Eigen::VectorXd d) : shape(s), data(std::move(d)) {
  if (data.size() != shape.size()) {
    throw DimensionError("Image: data length " + std::to_string(data.size()) +
                         " != C*H*W = " + std::to_string(shape.size()));
  }
}

Image Image::zeros(ImageShape s) {
  return Image(s, Eigen::VectorXd::Zero(s.size()));
}

Image Image::constant(ImageShape s, double value) {
  return Image(s, Eigen::VectorXd::Constant(s.size(), value));
}

double& Image::at(int c, int y, int x) {
  return data[(static_cast<Eigen::Index>(c) * shape.height + y) * shape.width + x];
}

double Image::at(int c, int y, int x) const {
  return data[(static_cast<Eigen::Index>(c) * shape.height + y) * shape.width + x];
}

double mse(const Image& a, const Image& b) {
  require_same_shape(a, b, "mse");
  return (a.data - b.data).squaredNorm() / static_cast<double>(a.size());
}

double l2(const Eigen::VectorXd& v) { return v.norm(); }

double l2(const Image& a, const Image& b) {
  require_same_shape(a, b, "l2");
  return (a.data - b.data).norm();
}

Image clip01(const Image& x) {
  Image out = x;
  clip01_inplace(out);
  return out;
}

void clip01_inplace(Image& x) {
  x.data = x.data.cwiseMax(0.0).cwiseMin(1.0);
}

void save_qimg(const Image& img, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  os.write("QIMG", 4);
  write_u32(os, kQimgVersion);
  write_u32(os, static_cast<std::uint32_t>(img.shape.channels));
  write_u32(os, static_cast<std::uint32_t>(img.shape.height));
  write_u32(os, static_cast<std::uint32_t>(img.shape.width));
  os.write(reinterpret_cast<const char*>(img.data.data()),
           static_cast<std::streamsize>(img.data.size() * sizeof(double)));
  if (!os) throw ParseError(path.string() + ": write failed");
}

Image load_qimg(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, "QIMG", 4) != 0) {
    throw ParseError(path.string() + ": bad magic (expected QIMG)");
  }
  const std::uint32_t version = read_u32(is, path);
  if (version != kQimgVersion) {
    throw ParseError(path.string() + ": unsupported version " +
                     std::to_string(version));
  }
  ImageShape shape;
  shape.channels = static_cast<int>(read_u32(is, path));
  shape.height = static_cast<int>(read_u32(is, path));
  shape.width = static_cast<int>(read_u32(is, path));
  if (shape.size() <= 0) {
    throw ParseError(path.string() + ": degenerate shape");
  }
  Eigen::VectorXd data(shape.size());
  const auto off = is.tellg();
  if (!is.read(reinterpret_cast<char*>(data.data()),
               static_cast<std::streamsize>(data.size() * sizeof(double)))) {
    throw ParseError(path.string() + ": truncated at byte offset " +
                     std::to_string(static_cast<long long>(off) +
                                    std::max<long long>(0, is.gcount())));
  }
  return Image(shape, std::move(data));
}

void save_8bit(const Image& img, const std::filesystem::path& path) {
  if (img.shape.channels != 1 && img.shape.channels != 3) {
    throw DimensionError("save_8bit: only 1- or 3-channel images supported");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  const bool color = img.shape.channels == 3;
  os << (color ? "P6" : "P5") << "\n"
     << img.shape.width << " " << img.shape.height << "\n255\n";
  std::vector<unsigned char> row(static_cast<size_t>(img.shape.width) *
                                 img.shape.channels);
  for (int y = 0; y < img.shape.height; ++y) {
    for (int x = 0; x < img.shape.width; ++x) {
      for (int c = 0; c < img.shape.channels; ++c) {
        const double v = std::min(1.0, std::max(0.0, img.at(c, y, x)));
        row[static_cast<size_t>(x) * img.shape.channels + c] =
            static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()),
             static_cast<std::streamsize>(row.size()));
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

Image load_8bit(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::string magic;
  is >> magic;
  int channels = 0;
  if (magic == "P5") channels = 1;
  else if (magic == "P6") channels = 3;
  else throw ParseError(path.string() + ": bad magic (expected P5 or P6)");
  int w = 0, h = 0, maxval = 0;
  is >> w >> h >> maxval;
  if (!is || w <= 0 || h <= 0) throw ParseError(path.string() + ": bad header");
  if (maxval != 255) {
    throw ParseError(path.string() + ": unsupported maxval " +
                     std::to_string(maxval));
  }
  is.get();  // single whitespace after maxval
  Image img = Image::zeros({channels, h, w});
  std::vector<unsigned char> row(static_cast<size_t>(w) * channels);
  for (int y = 0; y < h; ++y) {
    const auto off = is.tellg();
    if (!is.read(reinterpret_cast<char*>(row.data()),
                 static_cast<std::streamsize>(row.size()))) {
      throw ParseError(path.string() + ": truncated at byte offset " +
                       std::to_string(static_cast<long long>(off)));
    }
    for (int x = 0; x < w; ++x) {
      for (int c = 0; c < channels; ++c) {
        img.at(c, y, x) =
            row[static_cast<size_t>(x) * channels + c] / 255.0;
      }
    }
  }
  return img;
}

}  // namespace qeba
