#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <random>

#include "metampc/checkpoint.hpp"
#include "metampc/errors.hpp"
#include "metampc/mlp.hpp"
#include "metampc/optim.hpp"

using namespace metampc;

namespace {

Eigen::MatrixXd random_matrix(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    for (int c = 0; c < cols; ++c) m(r, c) = dist(gen);
  }
  return m;
}

double fd_loss_gradient_max_err(const MlpModel& model, const Eigen::MatrixXd& x,
                                const Eigen::MatrixXd& y, Loss loss) {
  const FlatParams grad = mlp_param_gradient(model, x, y, loss);
  const FlatParams theta = flatten_params(model);
  const double eps = 1e-6;
  double worst = 0.0;
  MlpModel probe = model;
  std::mt19937_64 gen(99);
  std::uniform_int_distribution<int> pick(0, static_cast<int>(theta.size()) - 1);
  for (int trial = 0; trial < 60; ++trial) {
    const int i = pick(gen);
    FlatParams tp = theta;
    tp(i) += eps;
    set_params(probe, tp);
    const double lp = mlp_loss(probe, x, y, loss);
    tp(i) -= 2.0 * eps;
    set_params(probe, tp);
    const double lm = mlp_loss(probe, x, y, loss);
    const double fd = (lp - lm) / (2.0 * eps);
    const double denom = std::max({1.0, std::abs(fd), std::abs(grad(i))});
    worst = std::max(worst, std::abs(fd - grad(i)) / denom);
  }
  return worst;
}

}  // namespace

TEST_CASE("parameter count matches layer sizes") {
  const MlpModel net = mlp_init({2, 64, 64, 1}, Activation::kTanh, 1);
  CHECK(net.parameter_count() == 4417);
  const MlpModel small = mlp_init({3, 5, 2}, Activation::kRelu, 1);
  CHECK(small.parameter_count() == 3 * 5 + 5 + 5 * 2 + 2);
}

TEST_CASE("init validates layer sizes") {
  CHECK_THROWS_AS(mlp_init({4}, Activation::kTanh, 1), ConfigError);
  CHECK_THROWS_AS(mlp_init({4, 0, 2}, Activation::kTanh, 1), ConfigError);
}

TEST_CASE("forward batch agrees with per-column forward") {
  const MlpModel net = mlp_init({3, 8, 2}, Activation::kTanh, 7);
  const Eigen::MatrixXd x = random_matrix(3, 5, 11);
  const Eigen::MatrixXd out = mlp_forward_batch(net, x);
  for (int c = 0; c < x.cols(); ++c) {
    CHECK((out.col(c) - mlp_forward(net, x.col(c))).lpNorm<Eigen::Infinity>() < 1e-14);
  }
}

TEST_CASE("forward rejects wrong input dimension") {
  const MlpModel net = mlp_init({3, 4, 2}, Activation::kTanh, 3);
  CHECK_THROWS_AS(mlp_forward(net, Eigen::VectorXd::Zero(2)), ShapeError);
}

TEST_CASE("loss values for a known gap") {
  MlpModel net = mlp_init({1, 1}, Activation::kTanh, 5);
  net.weights[0](0, 0) = 0.0;
  net.biases[0](0) = 2.0;
  Eigen::MatrixXd x(1, 2), y(1, 2);
  x << 0.0, 1.0;
  y << 1.0, 5.0;
  CHECK(mlp_loss(net, x, y, Loss::kMae) == doctest::Approx(2.0));
  CHECK(mlp_loss(net, x, y, Loss::kMse) == doctest::Approx(5.0));
}

TEST_CASE("parameter gradient matches finite differences") {
  for (auto loss : {Loss::kMse, Loss::kMae}) {
    for (auto act : {Activation::kTanh, Activation::kRelu}) {
      const MlpModel net =
          mlp_init({4, 16, 8, 3}, act, 1000 + static_cast<int>(loss) * 10 + static_cast<int>(act));
      const Eigen::MatrixXd x = random_matrix(4, 12, 21);
      const Eigen::MatrixXd y = random_matrix(3, 12, 22);
      CHECK(fd_loss_gradient_max_err(net, x, y, loss) < 1e-6);
    }
  }
}

TEST_CASE("input jacobian matches finite differences") {
  const MlpModel net = mlp_init({5, 12, 12, 2}, Activation::kTanh, 31);
  const Eigen::VectorXd x = random_matrix(5, 1, 41).col(0);
  const Eigen::MatrixXd jac = mlp_input_jacobian(net, x);
  const double eps = 1e-6;
  for (int c = 0; c < 5; ++c) {
    Eigen::VectorXd xp = x, xm = x;
    xp(c) += eps;
    xm(c) -= eps;
    const Eigen::VectorXd fd = (mlp_forward(net, xp) - mlp_forward(net, xm)) / (2.0 * eps);
    CHECK((fd - jac.col(c)).lpNorm<Eigen::Infinity>() < 1e-7);
  }
}

TEST_CASE("mae subgradient is zero at exact fit") {
  MlpModel net = mlp_init({2, 3, 1}, Activation::kTanh, 8);
  const Eigen::MatrixXd x = random_matrix(2, 4, 9);
  const Eigen::MatrixXd y = mlp_forward_batch(net, x);
  const FlatParams grad = mlp_param_gradient(net, x, y, Loss::kMae);
  CHECK(grad.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("hessian vector product is symmetric in direction pairs") {
  const MlpModel net = mlp_init({2, 6, 1}, Activation::kTanh, 77);
  const Eigen::MatrixXd x = random_matrix(2, 10, 78);
  const Eigen::MatrixXd y = random_matrix(1, 10, 79);
  const Eigen::Index n = net.parameter_count();
  const FlatParams u = random_matrix(static_cast<int>(n), 1, 80).col(0);
  const FlatParams v = random_matrix(static_cast<int>(n), 1, 81).col(0);
  const FlatParams hu = hessian_vector_product(net, x, y, Loss::kMse, u);
  const FlatParams hv = hessian_vector_product(net, x, y, Loss::kMse, v);
  CHECK(u.dot(hv) == doctest::Approx(v.dot(hu)).epsilon(1e-5));
}

TEST_CASE("sgd step") {
  Optimizer opt({OptimizerKind::kSgd, 0.1}, 3);
  FlatParams theta(3), grad(3);
  theta << 1.0, 2.0, 3.0;
  grad << 0.5, -1.0, 0.0;
  const FlatParams next = opt.step(theta, grad);
  CHECK(next(0) == doctest::Approx(0.95));
  CHECK(next(1) == doctest::Approx(2.1));
  CHECK(next(2) == doctest::Approx(3.0));
}

TEST_CASE("adam first step moves by lr times sign") {
  Optimizer opt({OptimizerKind::kAdam, 0.01}, 2);
  FlatParams theta(2), grad(2);
  theta << 0.0, 1.0;
  grad << 4.0, -0.25;
  const FlatParams next = opt.step(theta, grad);
  CHECK(next(0) == doctest::Approx(-0.01).epsilon(1e-4));
  CHECK(next(1) == doctest::Approx(1.01).epsilon(1e-4));
}

TEST_CASE("optimizer rejects non-finite gradients") {
  Optimizer opt({OptimizerKind::kAdam, 0.01}, 2);
  FlatParams theta = FlatParams::Zero(2);
  FlatParams grad(2);
  grad << 1.0, std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(opt.step(theta, grad), NumericError);
}

TEST_CASE("flatten and set round trip") {
  const MlpModel net = mlp_init({3, 7, 2}, Activation::kRelu, 13);
  const FlatParams theta = flatten_params(net);
  MlpModel other = mlp_init({3, 7, 2}, Activation::kRelu, 14);
  set_params(other, theta);
  CHECK((flatten_params(other) - theta).lpNorm<Eigen::Infinity>() == 0.0);
  const MlpModel rebuilt = with_params(net, theta);
  for (std::size_t l = 0; l < net.weights.size(); ++l) {
    CHECK((rebuilt.weights[l] - net.weights[l]).lpNorm<Eigen::Infinity>() == 0.0);
  }
}

TEST_CASE("checkpoint round trip is exact") {
  const MlpModel net = mlp_init({4, 9, 3}, Activation::kTanh, 55);
  const std::string path = "checkpoint_roundtrip_test.json";
  save_checkpoint(net, path);
  const MlpModel back = load_checkpoint(path);
  std::remove(path.c_str());
  CHECK(back.layer_sizes == net.layer_sizes);
  CHECK(back.activation == net.activation);
  CHECK((flatten_params(back) - flatten_params(net)).lpNorm<Eigen::Infinity>() == 0.0);
}
