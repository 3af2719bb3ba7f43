#include "qeba/gradient_store.hpp"

#include <cstring>
#include <fstream>

#include "qeba/errors.hpp"

namespace qeba {

namespace {

constexpr char kMagic[4] = {'Q', 'G', 'S', 'T'};
constexpr std::uint32_t kVersion = 1;
constexpr std::streamoff kHeaderBytes = 4 + 4 + 8;

}  // namespace

GradientStore::GradientStore(std::filesystem::path path, Eigen::Index dim,
                             Eigen::Index rows)
    : path_(std::move(path)), dim_(dim), rows_(rows) {}

GradientStore GradientStore::create(const std::filesystem::path& path,
                                    Eigen::Index dim) {
  if (dim < 1) throw DomainError("GradientStore: dim must be >= 1");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  os.write(kMagic, 4);
  os.write(reinterpret_cast<const char*>(&kVersion), sizeof kVersion);
  const std::uint64_t dim64 = static_cast<std::uint64_t>(dim);
  os.write(reinterpret_cast<const char*>(&dim64), sizeof dim64);
  if (!os) throw ParseError(path.string() + ": write failed");
  return GradientStore(path, dim, 0);
}

GradientStore GradientStore::open(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  char magic[4] = {};
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw ParseError(path.string() + ": bad magic (expected QGST)");
  }
  std::uint32_t version = 0;
  if (!is.read(reinterpret_cast<char*>(&version), sizeof version) ||
      version != kVersion) {
    throw ParseError(path.string() + ": unsupported version");
  }
  std::uint64_t dim64 = 0;
  if (!is.read(reinterpret_cast<char*>(&dim64), sizeof dim64) || dim64 == 0) {
    throw ParseError(path.string() + ": truncated at byte offset 8");
  }
  const auto total = std::filesystem::file_size(path);
  const std::uint64_t payload = total - static_cast<std::uint64_t>(kHeaderBytes);
  const std::uint64_t row_bytes = dim64 * sizeof(double);
  if (payload % row_bytes != 0) {
    throw ParseError(path.string() + ": truncated row record at byte offset " +
                     std::to_string(kHeaderBytes + payload -
                                    payload % row_bytes));
  }
  return GradientStore(path, static_cast<Eigen::Index>(dim64),
                       static_cast<Eigen::Index>(payload / row_bytes));
}

void GradientStore::append(const Eigen::VectorXd& g) {
  if (g.size() != dim_) {
    throw DimensionError("GradientStore::append: row length " +
                         std::to_string(g.size()) + " != " +
                         std::to_string(dim_));
  }
  if (!g.allFinite()) {
    throw DomainError("GradientStore::append: row has non-finite entries");
  }
  std::ofstream os(path_, std::ios::binary | std::ios::app);
  if (!os) throw ParseError(path_.string() + ": cannot open for append");
  os.write(reinterpret_cast<const char*>(g.data()),
           static_cast<std::streamsize>(g.size() * sizeof(double)));
  if (!os) throw ParseError(path_.string() + ": write failed");
  ++rows_;
}

void GradientStore::sweep(
    Eigen::Index window,
    const std::function<void(Eigen::Index, const Eigen::MatrixXd&)>& fn)
    const {
  if (window < 1) throw DomainError("GradientStore::sweep: window must be >= 1");
  std::ifstream is(path_, std::ios::binary);
  if (!is) throw ParseError(path_.string() + ": cannot open");
  is.seekg(kHeaderBytes);
  Eigen::Index done = 0;
  while (done < rows_) {
    const Eigen::Index count = std::min(window, rows_ - done);
    Eigen::MatrixXd block(count, dim_);
    for (Eigen::Index r = 0; r < count; ++r) {
      Eigen::VectorXd buf(dim_);
      if (!is.read(reinterpret_cast<char*>(buf.data()),
                   static_cast<std::streamsize>(dim_ * sizeof(double)))) {
        throw ParseError(path_.string() + ": truncated row " +
                         std::to_string(done + r));
      }
      block.row(r) = buf;
    }
    fn(done, block);
    done += count;
  }
}

Eigen::VectorXd GradientStore::row(Eigen::Index k) const {
  if (k < 0 || k >= rows_) {
    throw DomainError("GradientStore::row: index out of range");
  }
  std::ifstream is(path_, std::ios::binary);
  if (!is) throw ParseError(path_.string() + ": cannot open");
  is.seekg(kHeaderBytes +
           static_cast<std::streamoff>(k) * dim_ * sizeof(double));
  Eigen::VectorXd buf(dim_);
  if (!is.read(reinterpret_cast<char*>(buf.data()),
               static_cast<std::streamsize>(dim_ * sizeof(double)))) {
    throw ParseError(path_.string() + ": truncated row " + std::to_string(k));
  }
  return buf;
}

GradientStore build_gradient_store(const std::vector<AnalyticVictim>& victims,
                                   const std::vector<Image>& probes,
                                   const std::filesystem::path& path) {
  if (victims.empty()) {
    throw DomainError("build_gradient_store: need at least one victim");
  }
  if (probes.empty()) {
    throw DomainError("build_gradient_store: need at least one probe");
  }
  const Eigen::Index m = victims.front().dim;
  for (const auto& v : victims) {
    if (v.dim != m) {
      throw DimensionError("build_gradient_store: victim dim mismatch");
    }
  }
  auto store = GradientStore::create(path, m);
  for (const auto& probe : probes) {
    if (probe.size() != m) {
      throw DimensionError("build_gradient_store: probe dim " +
                           std::to_string(probe.size()) + " != " +
                           std::to_string(m));
    }
    Eigen::VectorXd g = Eigen::VectorXd::Zero(m);
    for (const auto& v : victims) g += v.grad(probe.data);
    store.append(g / static_cast<double>(victims.size()));
  }
  return store;
}

}  // namespace qeba
