#include "metampc/optim.hpp"

#include <cmath>

#include "metampc/errors.hpp"

namespace metampc {

namespace {
constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kEps = 1e-8;
}  // namespace

OptimizerKind optimizer_kind_from_string(const std::string& s) {
  if (s == "sgd") return OptimizerKind::kSgd;
  if (s == "adam") return OptimizerKind::kAdam;
  throw ConfigError("unknown optimizer '" + s + "'");
}

std::string to_string(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

Optimizer::Optimizer(OptimizerConfig cfg, Eigen::Index param_count) : cfg_(cfg) {
  if (cfg_.learning_rate <= 0.0) throw ConfigError("optimizer: learning rate must be positive");
  if (cfg_.kind == OptimizerKind::kAdam) {
    m_ = Eigen::VectorXd::Zero(param_count);
    v_ = Eigen::VectorXd::Zero(param_count);
  }
}

FlatParams Optimizer::step(const FlatParams& params, const FlatParams& grad) {
  if (params.size() != grad.size()) throw ShapeError("optimizer_step: length mismatch");
  if (!grad.allFinite()) throw NumericError("optimizer_step: non-finite gradient, step rejected");

  if (cfg_.kind == OptimizerKind::kSgd) {
    return params - cfg_.learning_rate * grad;
  }

  if (m_.size() != params.size()) throw ShapeError("optimizer_step: state length mismatch");
  ++step_count_;
  m_ = kBeta1 * m_ + (1.0 - kBeta1) * grad;
  v_ = kBeta2 * v_ + (1.0 - kBeta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(kBeta1, double(step_count_));
  const double c2 = 1.0 - std::pow(kBeta2, double(step_count_));
  const Eigen::ArrayXd m_hat = m_.array() / c1;
  const Eigen::ArrayXd v_hat = v_.array() / c2;
  return params - cfg_.learning_rate * (m_hat / (v_hat.sqrt() + kEps)).matrix();
}

}  // namespace metampc
