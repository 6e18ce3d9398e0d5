#pragma once

#include <Eigen/Core>
#include <string>

#include "metampc/mlp.hpp"

namespace metampc {

enum class OptimizerKind { kSgd, kAdam };

OptimizerKind optimizer_kind_from_string(const std::string& s);
std::string to_string(OptimizerKind k);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 1e-3;
};

// Owns the moment state for one parameter vector. Adam uses the standard
// bias-corrected update with beta1=0.9, beta2=0.999, eps=1e-8.
class Optimizer {
 public:
  Optimizer(OptimizerConfig cfg, Eigen::Index param_count);

  // Returns updated parameters; throws NumericError on non-finite gradient
  // entries and leaves the state untouched.
  FlatParams step(const FlatParams& params, const FlatParams& grad);

  const OptimizerConfig& config() const { return cfg_; }
  long step_count() const { return step_count_; }

 private:
  OptimizerConfig cfg_;
  Eigen::VectorXd m_, v_;
  long step_count_ = 0;
};

}  // namespace metampc
