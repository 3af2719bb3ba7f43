#include "qeba/subspace.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <Eigen/Dense>

#include "qeba/errors.hpp"

namespace qeba {

struct SubspaceBasis::Impl {
  Kind kind = Kind::Full;
  Eigen::Index m = 0;
  Eigen::Index n = 0;
  bool orthonormal = false;

  // spatial / dct parameters
  ImageShape shape;
  int r = 1;

  // spatial: align-corners bilinear tables per axis (low index pair and
  // weights for each high-resolution index)
  struct Axis {
    std::vector<Eigen::Index> i0, i1;
    std::vector<double> w0, w1;
    Eigen::Index low = 0;
  };
  Axis rows, cols;

  // dct: N x keep slice of the orthonormal DCT-II cosine matrix,
  // cosines(i, j) = N_j * cos((i + 1/2) j pi / N)
  Eigen::MatrixXd cosines;
  Eigen::Index keep = 0;

  // pca / explicit columns
  Eigen::MatrixXd w;
};

namespace {

SubspaceBasis::Impl::Axis make_axis(Eigen::Index high, Eigen::Index low) {
  SubspaceBasis::Impl::Axis axis;
  axis.low = low;
  axis.i0.resize(high);
  axis.i1.resize(high);
  axis.w0.resize(high);
  axis.w1.resize(high);
  for (Eigen::Index i = 0; i < high; ++i) {
    const double pos = (high == 1)
                           ? 0.0
                           : static_cast<double>(i) * (low - 1) / (high - 1);
    Eigen::Index lo = static_cast<Eigen::Index>(std::floor(pos));
    if (lo > low - 2) lo = low - 2;
    const double frac = pos - static_cast<double>(lo);
    axis.i0[i] = lo;
    axis.i1[i] = lo + 1;
    axis.w0[i] = 1.0 - frac;
    axis.w1[i] = frac;
  }
  return axis;
}

Eigen::MatrixXd thin_q(const Eigen::MatrixXd& a) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  return qr.householderQ() * Eigen::MatrixXd::Identity(a.rows(), a.cols());
}

void fix_column_signs(Eigen::MatrixXd& w) {
  for (Eigen::Index j = 0; j < w.cols(); ++j) {
    for (Eigen::Index i = 0; i < w.rows(); ++i) {
      if (w(i, j) != 0.0) {
        if (w(i, j) < 0.0) w.col(j) = -w.col(j);
        break;
      }
    }
  }
}

constexpr std::uint32_t kBasisVersion = 1;

std::uint32_t kind_tag(SubspaceBasis::Kind k) {
  switch (k) {
    case SubspaceBasis::Kind::Full: return 0;
    case SubspaceBasis::Kind::Spatial: return 1;
    case SubspaceBasis::Kind::Dct: return 2;
    case SubspaceBasis::Kind::Pca: return 3;
    case SubspaceBasis::Kind::Explicit: return 4;
  }
  return 4;
}

class FileReader {
 public:
  FileReader(std::ifstream& is, const std::filesystem::path& path)
      : is_(is), path_(path) {}

  template <typename T>
  T read(const char* what) {
    T v{};
    if (!is_.read(reinterpret_cast<char*>(&v), sizeof v)) {
      throw ParseError(path_.string() + ": truncated reading " + what +
                       " at byte offset " + std::to_string(offset_));
    }
    offset_ += sizeof v;
    return v;
  }

  void read_bytes(char* dst, std::size_t count, const char* what) {
    if (!is_.read(dst, static_cast<std::streamsize>(count))) {
      throw ParseError(path_.string() + ": truncated reading " + what +
                       " at byte offset " +
                       std::to_string(offset_ + std::max<std::streamsize>(
                                                    0, is_.gcount())));
    }
    offset_ += count;
  }

 private:
  std::ifstream& is_;
  const std::filesystem::path& path_;
  std::size_t offset_ = 0;
};

}  // namespace

SubspaceBasis::SubspaceBasis(std::shared_ptr<const Impl> impl)
    : impl_(std::move(impl)) {}

Eigen::Index SubspaceBasis::m() const { return impl_->m; }
Eigen::Index SubspaceBasis::n() const { return impl_->n; }
bool SubspaceBasis::orthonormal() const { return impl_->orthonormal; }
SubspaceBasis::Kind SubspaceBasis::kind() const { return impl_->kind; }
ImageShape SubspaceBasis::image_shape() const { return impl_->shape; }
int SubspaceBasis::reduction_factor() const { return impl_->r; }

SubspaceBasis SubspaceBasis::full(Eigen::Index m) {
  if (m < 1) throw DomainError("full basis: m must be >= 1");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::Full;
  impl->m = impl->n = m;
  impl->orthonormal = true;
  return SubspaceBasis(std::move(impl));
}

SubspaceBasis SubspaceBasis::spatial(ImageShape shape, int r,
                                     bool orthonormalize) {
  if (r < 1) throw DomainError("spatial basis: r must be >= 1");
  const Eigen::Index low_h = shape.height / r;
  const Eigen::Index low_w = shape.width / r;
  if (low_h < 2 || low_w < 2) {
    throw DomainError("spatial basis: low-resolution side " +
                      std::to_string(std::min(low_h, low_w)) +
                      " is degenerate (need >= 2)");
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::Spatial;
  impl->shape = shape;
  impl->r = r;
  impl->m = shape.size();
  impl->n = static_cast<Eigen::Index>(shape.channels) * low_h * low_w;
  impl->orthonormal = false;
  impl->rows = make_axis(shape.height, low_h);
  impl->cols = make_axis(shape.width, low_w);
  SubspaceBasis raw(std::move(impl));
  if (!orthonormalize) return raw;
  return explicit_matrix(thin_q(raw.materialize()), true);
}

SubspaceBasis SubspaceBasis::dct(ImageShape shape, int r) {
  if (r < 1) throw DomainError("dct basis: r must be >= 1");
  if (shape.height != shape.width) {
    throw DimensionError("dct basis: requires square images, got " +
                         std::to_string(shape.height) + "x" +
                         std::to_string(shape.width));
  }
  const Eigen::Index N = shape.height;
  const Eigen::Index keep = N / r;
  if (keep < 1) throw DomainError("dct basis: floor(N/r) must be >= 1");
  auto impl = std::make_shared<Impl>();
  impl->kind = Kind::Dct;
  impl->shape = shape;
  impl->r = r;
  impl->m = shape.size();
  impl->n = static_cast<Eigen::Index>(shape.channels) * keep * keep;
  impl->orthonormal = true;
  impl->keep = keep;
  impl->cosines.resize(N, keep);
  const double pi = std::acos(-1.0);
  for (Eigen::Index j = 0; j < keep; ++j) {
    const double norm = (j == 0) ? std::sqrt(1.0 / static_cast<double>(N))
                                 : std::sqrt(2.0 / static_cast<double>(N));
    for (Eigen::Index i = 0; i < N; ++i) {
      impl->cosines(i, j) =
          norm * std::cos((static_cast<double>(i) + 0.5) *
                          static_cast<double>(j) * pi / static_cast<double>(N));
    }
  }
  return SubspaceBasis(std::move(impl));
}

SubspaceBasis SubspaceBasis::explicit_matrix(Eigen::MatrixXd w,
                                             bool orthonormal, Kind kind) {
  if (w.cols() < 1 || w.rows() < w.cols()) {
    throw DimensionError("explicit basis: need m >= n >= 1, got " +
                         std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()));
  }
  auto impl = std::make_shared<Impl>();
  impl->kind = kind;
  impl->m = w.rows();
  impl->n = w.cols();
  impl->orthonormal = orthonormal;
  impl->w = std::move(w);
  return SubspaceBasis(std::move(impl));
}

SubspaceBasis SubspaceBasis::random_orthonormal(Eigen::Index m,
                                                Eigen::Index n,
                                                RngStream& rng) {
  if (n < 1 || n > m) throw DomainError("random_orthonormal: need 1 <= n <= m");
  Eigen::MatrixXd a(m, n);
  for (Eigen::Index j = 0; j < n; ++j) a.col(j) = rng.gaussian_vector(m);
  return explicit_matrix(thin_q(a), true);
}

SubspaceBasis SubspaceBasis::span_containing(const Eigen::VectorXd& g,
                                             Eigen::Index n, RngStream& rng) {
  const double gnorm = g.norm();
  if (gnorm == 0.0) throw DomainError("span_containing: g must be nonzero");
  if (n < 1 || n > g.size()) {
    throw DomainError("span_containing: need 1 <= n <= m");
  }
  Eigen::MatrixXd w(g.size(), n);
  w.col(0) = g / gnorm;
  for (Eigen::Index j = 1; j < n; ++j) {
    while (true) {
      Eigen::VectorXd v = rng.gaussian_vector(g.size());
      for (int pass = 0; pass < 2; ++pass) {
        for (Eigen::Index k = 0; k < j; ++k) {
          v -= w.col(k).dot(v) * w.col(k);
        }
      }
      const double norm = v.norm();
      if (norm > 1e-12) {
        w.col(j) = v / norm;
        break;
      }
    }
  }
  return explicit_matrix(std::move(w), true);
}

Eigen::VectorXd SubspaceBasis::forward(const Eigen::VectorXd& v) const {
  const auto& im = *impl_;
  if (v.size() != im.n) {
    throw DimensionError("forward: coefficient length " +
                         std::to_string(v.size()) + " != n = " +
                         std::to_string(im.n));
  }
  switch (im.kind) {
    case Kind::Full:
      return v;
    case Kind::Pca:
    case Kind::Explicit:
      return im.w * v;
    case Kind::Spatial: {
      const Eigen::Index lh = im.rows.low, lw = im.cols.low;
      const Eigen::Index H = im.shape.height, W = im.shape.width;
      Eigen::VectorXd out(im.m);
      for (int c = 0; c < im.shape.channels; ++c) {
        const Eigen::Index vc = static_cast<Eigen::Index>(c) * lh * lw;
        const Eigen::Index oc = static_cast<Eigen::Index>(c) * H * W;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index y0 = im.rows.i0[y] * lw, y1 = im.rows.i1[y] * lw;
          const double wy0 = im.rows.w0[y], wy1 = im.rows.w1[y];
          for (Eigen::Index x = 0; x < W; ++x) {
            const Eigen::Index x0 = im.cols.i0[x], x1 = im.cols.i1[x];
            const double wx0 = im.cols.w0[x], wx1 = im.cols.w1[x];
            out[oc + y * W + x] =
                wy0 * (wx0 * v[vc + y0 + x0] + wx1 * v[vc + y0 + x1]) +
                wy1 * (wx0 * v[vc + y1 + x0] + wx1 * v[vc + y1 + x1]);
          }
        }
      }
      return out;
    }
    case Kind::Dct: {
      const Eigen::Index N = im.shape.height, keep = im.keep;
      Eigen::VectorXd out(im.m);
      for (int c = 0; c < im.shape.channels; ++c) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
            q(v.data() + static_cast<Eigen::Index>(c) * keep * keep, keep,
              keep);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
            x(out.data() + static_cast<Eigen::Index>(c) * N * N, N, N);
        x = im.cosines * q * im.cosines.transpose();
      }
      return out;
    }
  }
  throw Error("forward: unreachable");
}

Eigen::VectorXd SubspaceBasis::adjoint(const Eigen::VectorXd& x) const {
  const auto& im = *impl_;
  if (x.size() != im.m) {
    throw DimensionError("adjoint: vector length " + std::to_string(x.size()) +
                         " != m = " + std::to_string(im.m));
  }
  switch (im.kind) {
    case Kind::Full:
      return x;
    case Kind::Pca:
    case Kind::Explicit:
      return im.w.transpose() * x;
    case Kind::Spatial: {
      const Eigen::Index lh = im.rows.low, lw = im.cols.low;
      const Eigen::Index H = im.shape.height, W = im.shape.width;
      Eigen::VectorXd out = Eigen::VectorXd::Zero(im.n);
      for (int c = 0; c < im.shape.channels; ++c) {
        const Eigen::Index vc = static_cast<Eigen::Index>(c) * lh * lw;
        const Eigen::Index oc = static_cast<Eigen::Index>(c) * H * W;
        for (Eigen::Index y = 0; y < H; ++y) {
          const Eigen::Index y0 = im.rows.i0[y] * lw, y1 = im.rows.i1[y] * lw;
          const double wy0 = im.rows.w0[y], wy1 = im.rows.w1[y];
          for (Eigen::Index x_ = 0; x_ < W; ++x_) {
            const Eigen::Index x0 = im.cols.i0[x_], x1 = im.cols.i1[x_];
            const double wx0 = im.cols.w0[x_], wx1 = im.cols.w1[x_];
            const double val = x[oc + y * W + x_];
            out[vc + y0 + x0] += wy0 * wx0 * val;
            out[vc + y0 + x1] += wy0 * wx1 * val;
            out[vc + y1 + x0] += wy1 * wx0 * val;
            out[vc + y1 + x1] += wy1 * wx1 * val;
          }
        }
      }
      return out;
    }
    case Kind::Dct: {
      const Eigen::Index N = im.shape.height, keep = im.keep;
      Eigen::VectorXd out(im.n);
      for (int c = 0; c < im.shape.channels; ++c) {
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>
            xm(x.data() + static_cast<Eigen::Index>(c) * N * N, N, N);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                 Eigen::RowMajor>>
            q(out.data() + static_cast<Eigen::Index>(c) * keep * keep, keep,
              keep);
        q = im.cosines.transpose() * xm * im.cosines;
      }
      return out;
    }
  }
  throw Error("adjoint: unreachable");
}

Eigen::MatrixXd SubspaceBasis::materialize() const {
  const auto& im = *impl_;
  switch (im.kind) {
    case Kind::Full:
      return Eigen::MatrixXd::Identity(im.m, im.m);
    case Kind::Pca:
    case Kind::Explicit:
      return im.w;
    default: {
      Eigen::MatrixXd w(im.m, im.n);
      Eigen::VectorXd e = Eigen::VectorXd::Zero(im.n);
      for (Eigen::Index j = 0; j < im.n; ++j) {
        e[j] = 1.0;
        w.col(j) = forward(e);
        e[j] = 0.0;
      }
      return w;
    }
  }
}

double rho(const SubspaceBasis& basis, const Eigen::VectorXd& g) {
  if (!basis.orthonormal()) {
    throw ContractError(
        "rho: projection formula requires an orthonormal basis");
  }
  const double gnorm = g.norm();
  if (gnorm == 0.0) throw DomainError("rho: undefined for g = 0");
  return basis.forward(basis.adjoint(g)).norm() / gnorm;
}

void save_basis(const SubspaceBasis& basis,
                const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  os.write("QEBA", 4);
  const std::uint32_t version = kBasisVersion;
  os.write(reinterpret_cast<const char*>(&version), sizeof version);
  const std::uint64_t m64 = static_cast<std::uint64_t>(basis.m());
  const std::uint64_t n64 = static_cast<std::uint64_t>(basis.n());
  os.write(reinterpret_cast<const char*>(&m64), sizeof m64);
  os.write(reinterpret_cast<const char*>(&n64), sizeof n64);
  const std::uint32_t tag = kind_tag(basis.kind());
  os.write(reinterpret_cast<const char*>(&tag), sizeof tag);
  const std::uint8_t ortho = basis.orthonormal() ? 1 : 0;
  os.write(reinterpret_cast<const char*>(&ortho), sizeof ortho);
  switch (basis.kind()) {
    case SubspaceBasis::Kind::Full:
      break;
    case SubspaceBasis::Kind::Spatial:
    case SubspaceBasis::Kind::Dct: {
      const ImageShape s = basis.image_shape();
      const std::uint32_t params[4] = {
          static_cast<std::uint32_t>(s.channels),
          static_cast<std::uint32_t>(s.height),
          static_cast<std::uint32_t>(s.width),
          static_cast<std::uint32_t>(basis.reduction_factor())};
      os.write(reinterpret_cast<const char*>(params), sizeof params);
      break;
    }
    case SubspaceBasis::Kind::Pca:
    case SubspaceBasis::Kind::Explicit: {
      const Eigen::MatrixXd w = basis.materialize();  // column-major
      os.write(reinterpret_cast<const char*>(w.data()),
               static_cast<std::streamsize>(w.size() * sizeof(double)));
      break;
    }
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

SubspaceBasis load_basis(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  FileReader reader(is, path);
  char magic[4];
  reader.read_bytes(magic, 4, "magic");
  if (std::memcmp(magic, "QEBA", 4) != 0) {
    throw ParseError(path.string() + ": bad magic (expected QEBA)");
  }
  const auto version = reader.read<std::uint32_t>("version");
  if (version != kBasisVersion) {
    throw ParseError(path.string() + ": unsupported version " +
                     std::to_string(version));
  }
  const auto m64 = reader.read<std::uint64_t>("m");
  const auto n64 = reader.read<std::uint64_t>("n");
  const auto tag = reader.read<std::uint32_t>("kind");
  const auto ortho = reader.read<std::uint8_t>("orthonormal flag");
  const Eigen::Index m = static_cast<Eigen::Index>(m64);
  const Eigen::Index n = static_cast<Eigen::Index>(n64);
  switch (tag) {
    case 0: {
      if (m != n) throw ParseError(path.string() + ": full basis with m != n");
      return SubspaceBasis::full(m);
    }
    case 1:
    case 2: {
      std::uint32_t params[4];
      reader.read_bytes(reinterpret_cast<char*>(params), sizeof params,
                        "shape parameters");
      const ImageShape shape{static_cast<int>(params[0]),
                             static_cast<int>(params[1]),
                             static_cast<int>(params[2])};
      const int r = static_cast<int>(params[3]);
      SubspaceBasis b = (tag == 1) ? SubspaceBasis::spatial(shape, r)
                                   : SubspaceBasis::dct(shape, r);
      if (b.m() != m || b.n() != n) {
        throw ParseError(path.string() + ": shape parameters disagree with " +
                         "recorded m, n");
      }
      return b;
    }
    case 3:
    case 4: {
      Eigen::MatrixXd w(m, n);
      reader.read_bytes(reinterpret_cast<char*>(w.data()),
                        static_cast<std::size_t>(w.size()) * sizeof(double),
                        "basis columns");
      return SubspaceBasis::explicit_matrix(std::move(w), ortho != 0,
                                            tag == 3
                                                ? SubspaceBasis::Kind::Pca
                                                : SubspaceBasis::Kind::Explicit);
    }
    default:
      throw ParseError(path.string() + ": unknown kind tag " +
                       std::to_string(tag));
  }
}

SubspaceBasis pca_basis(const GradientStore& store, Eigen::Index n,
                        Eigen::Index oversample, int power_iters,
                        RngStream& rng) {
  const Eigen::Index K = store.rows();
  const Eigen::Index m = store.dim();
  if (n < 1 || n > std::min(K, m)) {
    throw InfeasibleError("pca_basis: n = " + std::to_string(n) +
                          " exceeds min(K, m) = " +
                          std::to_string(std::min(K, m)));
  }
  if (oversample < 0) throw DomainError("pca_basis: oversample must be >= 0");
  if (power_iters < 0) throw DomainError("pca_basis: power_iters must be >= 0");
  const Eigen::Index ell = std::min(n + oversample, std::min(K, m));
  constexpr Eigen::Index kWindow = 64;

  // Range sketch Y = G * Omega with G = [g_1 ... g_K] (m x K) and a
  // Gaussian test matrix; the store is consumed row by row, drawing the
  // matching Omega row on the fly.
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(m, ell);
  store.sweep(kWindow, [&](Eigen::Index, const Eigen::MatrixXd& block) {
    for (Eigen::Index r = 0; r < block.rows(); ++r) {
      const Eigen::VectorXd omega = rng.gaussian_vector(ell);
      y.noalias() += block.row(r).transpose() * omega.transpose();
    }
  });
  Eigen::MatrixXd q = thin_q(y);

  // Power iterations: Q <- orth(G G^T Q), one fused row sweep each.
  for (int it = 0; it < power_iters; ++it) {
    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(m, ell);
    store.sweep(kWindow, [&](Eigen::Index, const Eigen::MatrixXd& block) {
      const Eigen::MatrixXd coef = block * q;  // window x ell
      next.noalias() += block.transpose() * coef;
    });
    q = thin_q(next);
  }

  // Small matrix B = Q^T G (ell x K); SVD gives the leading left
  // singular directions of G as Q * U.
  Eigen::MatrixXd small(ell, K);
  store.sweep(kWindow, [&](Eigen::Index first, const Eigen::MatrixXd& block) {
    small.middleCols(first, block.rows()) = (block * q).transpose();
  });
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(small, Eigen::ComputeThinU);
  Eigen::MatrixXd w = q * svd.matrixU().leftCols(n);
  fix_column_signs(w);
  return SubspaceBasis::explicit_matrix(std::move(w), true,
                                        SubspaceBasis::Kind::Pca);
}

}  // namespace qeba
