#include "qeba/victim.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "qeba/errors.hpp"

namespace qeba {

HardLabelOracle::HardLabelOracle(DecisionFn decide,
                                 std::optional<std::uint64_t> budget)
    : decide_(std::move(decide)),
      count_(std::make_shared<std::atomic<std::uint64_t>>(0)),
      budget_(budget) {}

HardLabelOracle HardLabelOracle::from_victim(
    const AnalyticVictim& victim, std::optional<std::uint64_t> budget) {
  auto score = victim.score;
  return HardLabelOracle(
      [score](const Image& x) { return score(x.data) >= 0.0 ? 1 : -1; },
      budget);
}

HardLabelOracle HardLabelOracle::from_victim_discretized(
    const AnalyticVictim& victim, std::optional<std::uint64_t> budget) {
  auto score = victim.score;
  return HardLabelOracle(
      [score](const Image& x) {
        return score(discretize(x).data) >= 0.0 ? 1 : -1;
      },
      budget);
}

int HardLabelOracle::phi(const Image& x) {
  std::uint64_t c = count_->load();
  do {
    if (budget_ && c >= *budget_) {
      throw QueryBudgetError(c, "query budget of " + std::to_string(*budget_) +
                                    " exhausted after " + std::to_string(c) +
                                    " queries");
    }
  } while (!count_->compare_exchange_weak(c, c + 1));
  return decide_(x);
}

std::uint64_t HardLabelOracle::remaining() const {
  if (!budget_) return UINT64_MAX;
  const std::uint64_t c = count_->load();
  return c >= *budget_ ? 0 : *budget_ - c;
}

HardLabelOracle HardLabelOracle::with_budget_cap(
    std::uint64_t total_queries) const {
  HardLabelOracle out = *this;
  out.budget_ = budget_ ? std::min(*budget_, total_queries) : total_queries;
  return out;
}

AnalyticVictim make_linear_victim(const Eigen::VectorXd& w, double b) {
  if (w.norm() == 0.0) {
    throw DomainError("make_linear_victim: w must be nonzero");
  }
  AnalyticVictim v;
  v.dim = w.size();
  v.score = [w, b](const Eigen::VectorXd& x) { return w.dot(x) + b; };
  v.grad = [w](const Eigen::VectorXd&) { return w; };
  v.grad_lipschitz = 0.0;
  return v;
}

AnalyticVictim make_quadratic_victim(const Image& center, double radius) {
  if (radius <= 0.0) {
    throw DomainError("make_quadratic_victim: radius must be positive");
  }
  const Eigen::VectorXd c = center.data;
  AnalyticVictim v;
  v.dim = c.size();
  v.score = [c, radius](const Eigen::VectorXd& x) {
    return radius * radius - (x - c).squaredNorm();
  };
  v.grad = [c](const Eigen::VectorXd& x) {
    return Eigen::VectorXd(-2.0 * (x - c));
  };
  v.grad_lipschitz = 2.0;
  return v;
}

namespace {

double activate(double z, MlpLayer::Activation a) {
  switch (a) {
    case MlpLayer::Activation::Tanh: return std::tanh(z);
    case MlpLayer::Activation::Relu: return z > 0.0 ? z : 0.0;
    case MlpLayer::Activation::Identity: return z;
  }
  return z;
}

double activate_deriv(double z, MlpLayer::Activation a) {
  switch (a) {
    case MlpLayer::Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case MlpLayer::Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case MlpLayer::Activation::Identity: return 1.0;
  }
  return 1.0;
}

MlpLayer::Activation parse_activation(const std::string& name,
                                      const std::filesystem::path& path) {
  if (name == "tanh") return MlpLayer::Activation::Tanh;
  if (name == "relu") return MlpLayer::Activation::Relu;
  if (name == "identity") return MlpLayer::Activation::Identity;
  throw ParseError(path.string() + ": unknown activation '" + name + "'");
}

const char* activation_name(MlpLayer::Activation a) {
  switch (a) {
    case MlpLayer::Activation::Tanh: return "tanh";
    case MlpLayer::Activation::Relu: return "relu";
    case MlpLayer::Activation::Identity: return "identity";
  }
  return "identity";
}

}  // namespace

MlpModel load_mlp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ParseError(path.string() + ": cannot open");
  std::string line;
  if (!std::getline(is, line)) throw ParseError(path.string() + ": empty file");
  std::istringstream head(line);
  std::string tag;
  int layer_count = 0;
  head >> tag >> layer_count;
  if (tag != "layers" || layer_count < 1) {
    throw ParseError(path.string() + ": expected 'layers <L>' header");
  }
  MlpModel model;
  for (int i = 0; i < layer_count; ++i) {
    if (!std::getline(is, line)) {
      throw ParseError(path.string() + ": missing layer line " +
                       std::to_string(i));
    }
    std::istringstream ls(line);
    std::string layer_tag, act;
    long in = 0, out = 0;
    ls >> layer_tag >> in >> out >> act;
    if (layer_tag != "layer" || in < 1 || out < 1 || act.empty()) {
      throw ParseError(path.string() + ": malformed layer line " +
                       std::to_string(i) + ": '" + line + "'");
    }
    MlpLayer layer;
    layer.weights.resize(out, in);
    layer.bias.resize(out);
    layer.activation = parse_activation(act, path);
    model.layers.push_back(std::move(layer));
  }
  for (size_t i = 0; i < model.layers.size(); ++i) {
    if (i > 0 && model.layers[i].weights.cols() !=
                     model.layers[i - 1].weights.rows()) {
      throw DimensionError(
          path.string() + ": layer " + std::to_string(i) + " input dim " +
          std::to_string(model.layers[i].weights.cols()) +
          " != previous output dim " +
          std::to_string(model.layers[i - 1].weights.rows()));
    }
  }
  for (size_t i = 0; i < model.layers.size(); ++i) {
    auto& layer = model.layers[i];
    // weights are row-major on disk, one row per output unit
    const Eigen::Index rows = layer.weights.rows();
    const Eigen::Index cols = layer.weights.cols();
    std::vector<double> buf(static_cast<size_t>(rows) * cols);
    const auto off = is.tellg();
    if (!is.read(reinterpret_cast<char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(double)))) {
      throw ParseError(path.string() + ": truncated weights at byte offset " +
                       std::to_string(static_cast<long long>(off)));
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        layer.weights(r, c) = buf[static_cast<size_t>(r) * cols + c];
      }
    }
    const auto boff = is.tellg();
    if (!is.read(reinterpret_cast<char*>(layer.bias.data()),
                 static_cast<std::streamsize>(rows * sizeof(double)))) {
      throw ParseError(path.string() + ": truncated biases at byte offset " +
                       std::to_string(static_cast<long long>(boff)));
    }
  }
  return model;
}

void save_mlp(const MlpModel& model, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ParseError(path.string() + ": cannot open for writing");
  os << "layers " << model.layers.size() << "\n";
  for (const auto& layer : model.layers) {
    os << "layer " << layer.weights.cols() << " " << layer.weights.rows()
       << " " << activation_name(layer.activation) << "\n";
  }
  for (const auto& layer : model.layers) {
    for (Eigen::Index r = 0; r < layer.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weights.cols(); ++c) {
        const double v = layer.weights(r, c);
        os.write(reinterpret_cast<const char*>(&v), sizeof v);
      }
    }
    os.write(reinterpret_cast<const char*>(layer.bias.data()),
             static_cast<std::streamsize>(layer.bias.size() * sizeof(double)));
  }
  if (!os) throw ParseError(path.string() + ": write failed");
}

AnalyticVictim make_mlp_victim(const std::filesystem::path& weights_file,
                               int mal_class) {
  auto model = std::make_shared<MlpModel>(load_mlp(weights_file));
  if (mal_class < 0 || mal_class >= model->output_dim()) {
    throw DomainError("make_mlp_victim: mal_class " +
                      std::to_string(mal_class) + " out of range for " +
                      std::to_string(model->output_dim()) + " outputs");
  }
  if (model->output_dim() < 2) {
    throw DimensionError("make_mlp_victim: need at least 2 output classes");
  }

  struct ForwardState {
    std::vector<Eigen::VectorXd> pre;   // pre-activation per layer
    Eigen::VectorXd logits;
  };
  auto forward = [model](const Eigen::VectorXd& x) {
    ForwardState st;
    Eigen::VectorXd h = x;
    for (const auto& layer : model->layers) {
      Eigen::VectorXd z = layer.weights * h + layer.bias;
      st.pre.push_back(z);
      h.resize(z.size());
      for (Eigen::Index i = 0; i < z.size(); ++i) {
        h[i] = activate(z[i], layer.activation);
      }
    }
    st.logits = h;
    return st;
  };
  auto runner_up = [mal_class](const Eigen::VectorXd& logits) {
    Eigen::Index best = -1;
    for (Eigen::Index j = 0; j < logits.size(); ++j) {
      if (j == mal_class) continue;
      if (best < 0 || logits[j] > logits[best]) best = j;  // lowest index wins ties
    }
    return best;
  };

  AnalyticVictim v;
  v.dim = model->input_dim();
  v.score = [forward, runner_up, mal_class](const Eigen::VectorXd& x) {
    const auto st = forward(x);
    return st.logits[mal_class] - st.logits[runner_up(st.logits)];
  };
  v.grad = [model, forward, runner_up, mal_class](const Eigen::VectorXd& x) {
    const auto st = forward(x);
    const Eigen::Index other = runner_up(st.logits);
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(st.logits.size());
    delta[mal_class] = 1.0;
    delta[other] = -1.0;
    for (Eigen::Index li = static_cast<Eigen::Index>(model->layers.size()) - 1;
         li >= 0; --li) {
      const auto& layer = model->layers[li];
      const auto& z = st.pre[static_cast<size_t>(li)];
      for (Eigen::Index i = 0; i < delta.size(); ++i) {
        delta[i] *= activate_deriv(z[i], layer.activation);
      }
      delta = layer.weights.transpose() * delta;
    }
    return delta;
  };
  v.grad_lipschitz = std::nullopt;
  return v;
}

double discretize_value(double v) {
  return std::round(v * 255.0) / 255.0;
}

Image discretize(const Image& x) {
  Image out = x;
  for (Eigen::Index i = 0; i < out.data.size(); ++i) {
    out.data[i] = discretize_value(out.data[i]);
  }
  return out;
}

}  // namespace qeba
