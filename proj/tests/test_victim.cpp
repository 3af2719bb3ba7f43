#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include "qeba/errors.hpp"
#include "qeba/rng.hpp"
#include "qeba/victim.hpp"

using namespace qeba;

namespace {

// central finite differences of the score, the reference for analytic
// gradients
Eigen::VectorXd fd_gradient(const AnalyticVictim& victim,
                            const Eigen::VectorXd& x, double h) {
  Eigen::VectorXd g(x.size());
  Eigen::VectorXd probe = x;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = victim.score(probe);
    probe[i] = x[i] - h;
    const double down = victim.score(probe);
    probe[i] = x[i];
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

Image unit_e1(ImageShape shape) {
  Image img = Image::zeros(shape);
  img.data[0] = 1.0;
  return img;
}

}  // namespace

TEST_CASE("phi returns the sign of the hidden score and counts queries") {
  const ImageShape shape{1, 2, 2};
  const Eigen::VectorXd w = unit_e1(shape).data;
  const auto victim = make_linear_victim(w, -0.5);
  auto oracle = HardLabelOracle::from_victim(victim);

  CHECK(oracle.phi(Image::constant(shape, 1.0)) == 1);
  CHECK(oracle.phi(Image::zeros(shape)) == -1);
  CHECK(oracle.query_count() == 2);
}

TEST_CASE("query budget error carries the count") {
  const ImageShape shape{1, 2, 2};
  const auto victim = make_linear_victim(unit_e1(shape).data, -0.5);
  auto oracle = HardLabelOracle::from_victim(victim, 2);
  const Image x = Image::zeros(shape);
  oracle.phi(x);
  oracle.phi(x);
  try {
    oracle.phi(x);
    FAIL("expected QueryBudgetError");
  } catch (const QueryBudgetError& e) {
    CHECK(e.query_count() == 2);
  }
  CHECK(oracle.query_count() == 2);
  CHECK(oracle.remaining() == 0);
}

TEST_CASE("budget cap view shares the counter") {
  const ImageShape shape{1, 2, 2};
  const auto victim = make_linear_victim(unit_e1(shape).data, -0.5);
  auto oracle = HardLabelOracle::from_victim(victim);
  auto capped = oracle.with_budget_cap(3);
  const Image x = Image::zeros(shape);
  capped.phi(x);
  oracle.phi(x);
  CHECK(capped.remaining() == 1);
  capped.phi(x);
  CHECK_THROWS_AS(capped.phi(x), QueryBudgetError);
  CHECK(oracle.query_count() == 3);
}

TEST_CASE("concurrent phi calls keep the count exact") {
  const ImageShape shape{1, 2, 2};
  const auto victim = make_linear_victim(unit_e1(shape).data, -0.5);
  auto oracle = HardLabelOracle::from_victim(victim);
  const Image x = Image::zeros(shape);
  constexpr int kThreads = 8, kCalls = 500;
  std::vector<std::thread> threads;
  for (int t = 0; t < kThreads; ++t) {
    threads.emplace_back([&oracle, &x] {
      for (int i = 0; i < kCalls; ++i) oracle.phi(x);
    });
  }
  for (auto& t : threads) t.join();
  CHECK(oracle.query_count() == kThreads * kCalls);
}

TEST_CASE("linear victim gradient is exact") {
  RngStream rng(5);
  const Eigen::VectorXd w = rng.gaussian_vector(12);
  const auto victim = make_linear_victim(w, 0.25);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = rng.gaussian_vector(12);
    const Eigen::VectorXd g = victim.grad(x);
    CHECK((g - w).norm() == 0.0);
    const Eigen::VectorXd fd = fd_gradient(victim, x, 1e-6);
    CHECK((fd - w).norm() / w.norm() < 1e-8);
  }
  CHECK_THROWS_AS(make_linear_victim(Eigen::VectorXd::Zero(4), 0.0),
                  DomainError);
}

TEST_CASE("linear victim boundary root by bisection") {
  const ImageShape shape{1, 2, 2};
  const auto victim = make_linear_victim(unit_e1(shape).data, -0.5);
  // S along x = t*e1: root at t = 0.5
  double lo = 0.0, hi = 1.0;
  Eigen::VectorXd probe = Eigen::VectorXd::Zero(shape.size());
  for (int i = 0; i < 60; ++i) {
    const double mid = 0.5 * (lo + hi);
    probe[0] = mid;
    (victim.score(probe) >= 0.0 ? hi : lo) = mid;
  }
  CHECK(std::abs(hi - 0.5) < 1e-9);
}

TEST_CASE("quadratic victim boundary and gradient") {
  const ImageShape shape{1, 3, 3};
  const Image center = Image::constant(shape, 0.5);
  const auto victim = make_quadratic_victim(center, 0.25);

  CHECK(victim.score(center.data) == doctest::Approx(0.0625));
  CHECK(victim.sign(center.data) == 1);

  // points on the sphere keep the +1 convention (sign of zero)
  Eigen::VectorXd on_sphere = center.data;
  on_sphere[0] += 0.25;
  CHECK(victim.score(on_sphere) == 0.0);
  CHECK(victim.sign(on_sphere) == 1);

  RngStream rng(7);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = center.data + 0.3 * rng.gaussian_vector(9);
    const Eigen::VectorXd g = victim.grad(x);
    const Eigen::VectorXd fd = fd_gradient(victim, x, 1e-6);
    CHECK((g - fd).norm() / (g.norm() + 1e-300) < 1e-6);
  }
  CHECK(victim.grad_lipschitz == 2.0);
}

TEST_CASE("sign(S) agrees with phi everywhere") {
  const ImageShape shape{1, 4, 4};
  const Image center = Image::constant(shape, 0.4);
  const auto victim = make_quadratic_victim(center, 0.6);
  auto oracle = HardLabelOracle::from_victim(victim);
  RngStream rng(9);
  for (int t = 0; t < 10000; ++t) {
    Image x = Image::zeros(shape);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data[i] = rng.uniform01();
    REQUIRE(oracle.phi(x) == victim.sign(x.data));
  }
  CHECK(oracle.query_count() == 10000);
}

TEST_CASE("mlp weights roundtrip and parse errors") {
  MlpModel model;
  RngStream rng(11);
  MlpLayer l1;
  l1.weights = Eigen::MatrixXd::NullaryExpr(6, 8, [&] { return rng.gaussian(); });
  l1.bias = rng.gaussian_vector(6);
  l1.activation = MlpLayer::Activation::Tanh;
  MlpLayer l2;
  l2.weights = Eigen::MatrixXd::NullaryExpr(3, 6, [&] { return rng.gaussian(); });
  l2.bias = rng.gaussian_vector(3);
  l2.activation = MlpLayer::Activation::Identity;
  model.layers = {l1, l2};

  const auto path = std::filesystem::temp_directory_path() / "victim_mlp.qmlp";
  save_mlp(model, path);
  const MlpModel back = load_mlp(path);
  REQUIRE(back.layers.size() == 2);
  CHECK(back.layers[0].weights == model.layers[0].weights);
  CHECK(back.layers[1].bias == model.layers[1].bias);
  CHECK(back.layers[0].activation == MlpLayer::Activation::Tanh);

  const auto bad = std::filesystem::temp_directory_path() / "victim_bad.qmlp";
  {
    std::ofstream os(bad);
    os << "layers 1\nlayer 4 2 sigmoid\n";
  }
  CHECK_THROWS_AS(load_mlp(bad), ParseError);
  {
    std::ofstream os(bad);
    os << "layers 2\nlayer 4 2 tanh\nlayer 3 2 identity\n";
  }
  CHECK_THROWS_AS(load_mlp(bad), DimensionError);
  {
    std::ofstream os(bad);
    os << "layers 1\nlayer 4 2 tanh\nxx";  // truncated binary block
  }
  CHECK_THROWS_AS(load_mlp(bad), ParseError);
}

TEST_CASE("single identity-like mlp layer reduces to a linear victim") {
  // two outputs: logit0 = <w, x>, logit1 = 0; S = logit0 - logit1
  MlpModel model;
  RngStream rng(13);
  MlpLayer layer;
  layer.weights = Eigen::MatrixXd::Zero(2, 5);
  const Eigen::VectorXd w = rng.gaussian_vector(5);
  layer.weights.row(0) = w.transpose();
  layer.bias = Eigen::VectorXd::Zero(2);
  layer.activation = MlpLayer::Activation::Identity;
  model.layers = {layer};
  const auto path = std::filesystem::temp_directory_path() / "victim_lin.qmlp";
  save_mlp(model, path);
  const auto mlp = make_mlp_victim(path, 0);
  const auto linear = make_linear_victim(w, 0.0);
  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = rng.gaussian_vector(5);
    CHECK(mlp.score(x) == doctest::Approx(linear.score(x)));
    CHECK((mlp.grad(x) - linear.grad(x)).norm() < 1e-12);
  }
}

TEST_CASE("mlp gradient matches finite differences away from ties") {
  MlpModel model;
  RngStream rng(17);
  MlpLayer l1;
  l1.weights = Eigen::MatrixXd::NullaryExpr(7, 6, [&] { return rng.gaussian(); });
  l1.bias = rng.gaussian_vector(7);
  l1.activation = MlpLayer::Activation::Tanh;
  MlpLayer l2;
  l2.weights = Eigen::MatrixXd::NullaryExpr(4, 7, [&] { return rng.gaussian(); });
  l2.bias = rng.gaussian_vector(4);
  l2.activation = MlpLayer::Activation::Identity;
  model.layers = {l1, l2};
  const auto path = std::filesystem::temp_directory_path() / "victim_fd.qmlp";
  save_mlp(model, path);
  const auto victim = make_mlp_victim(path, 1);

  for (int t = 0; t < 10; ++t) {
    const Eigen::VectorXd x = 0.5 * rng.gaussian_vector(6);
    const Eigen::VectorXd g = victim.grad(x);
    const Eigen::VectorXd fd = fd_gradient(victim, x, 1e-5);
    REQUIRE(g.norm() > 0.0);
    CHECK((g - fd).norm() / g.norm() < 1e-4);
  }
}

TEST_CASE("permuting non-malicious logits leaves phi unchanged") {
  MlpModel model;
  RngStream rng(19);
  MlpLayer layer;
  layer.weights =
      Eigen::MatrixXd::NullaryExpr(4, 5, [&] { return rng.gaussian(); });
  layer.bias = rng.gaussian_vector(4);
  layer.activation = MlpLayer::Activation::Identity;
  model.layers = {layer};
  const auto path_a = std::filesystem::temp_directory_path() / "victim_pa.qmlp";
  save_mlp(model, path_a);

  MlpModel permuted = model;
  permuted.layers[0].weights.row(1).swap(permuted.layers[0].weights.row(3));
  std::swap(permuted.layers[0].bias[1], permuted.layers[0].bias[3]);
  const auto path_b = std::filesystem::temp_directory_path() / "victim_pb.qmlp";
  save_mlp(permuted, path_b);

  const auto va = make_mlp_victim(path_a, 0);
  const auto vb = make_mlp_victim(path_b, 0);
  for (int t = 0; t < 200; ++t) {
    const Eigen::VectorXd x = rng.gaussian_vector(5);
    CHECK(va.sign(x) == vb.sign(x));
  }
}

TEST_CASE("discretize: rounding rule, fixed points, idempotence") {
  const ImageShape shape{1, 1, 4};
  Image x = Image::zeros(shape);
  x.data << 0.5, 0.0, 1.0, 0.003;
  const Image d = discretize(x);
  CHECK(d.data[0] == 128.0 / 255.0);  // 127.5 rounds half away from zero
  CHECK(d.data[1] == 0.0);
  CHECK(d.data[2] == 1.0);
  CHECK(d.data[3] == 1.0 / 255.0);  // 0.765 -> 1

  const Image dd = discretize(d);
  CHECK(dd.data == d.data);

  RngStream rng(23);
  Image r = Image::zeros({1, 8, 8});
  for (Eigen::Index i = 0; i < r.size(); ++i) r.data[i] = rng.uniform01();
  const Image rd = discretize(r);
  CHECK((rd.data - r.data).cwiseAbs().maxCoeff() <= 1.0 / 510.0);
  CHECK(discretize(rd).data == rd.data);
}
