#include "metampc/augmented.hpp"

#include <string>
#include <utility>

#include "metampc/errors.hpp"

namespace metampc {

AugmentedModel::AugmentedModel(PlantSpec spec) : spec_(std::move(spec)) {}

AugmentedModel::AugmentedModel(PlantSpec spec, MlpModel residual) : spec_(std::move(spec)) {
  set_residual(std::move(residual));
}

const MlpModel& AugmentedModel::residual() const {
  if (!residual_) throw ConfigError("augmented model has no residual network");
  return *residual_;
}

void AugmentedModel::check_residual_dims(const MlpModel& residual) const {
  const int want_in = spec_.state_dim + spec_.input_dim;
  const int want_out = spec_.pos_dim;
  if (residual.input_dim() != want_in) {
    throw ConfigError("residual network input dimension " + std::to_string(residual.input_dim()) +
                      " does not match state+input dimension " + std::to_string(want_in));
  }
  if (residual.output_dim() != want_out) {
    throw ConfigError("residual network output dimension " +
                      std::to_string(residual.output_dim()) +
                      " does not match acceleration row count " + std::to_string(want_out));
  }
}

void AugmentedModel::set_residual(MlpModel residual) {
  check_residual_dims(residual);
  residual_ = std::move(residual);
}

void AugmentedModel::clear_residual() { residual_.reset(); }

Eigen::VectorXd AugmentedModel::derivative(const Eigen::VectorXd& x,
                                           const Eigen::VectorXd& u) const {
  Eigen::VectorXd dx = eval_nominal(spec_, x, u);
  if (!residual_) return dx;
  thread_local Eigen::VectorXd z;
  z.resize(x.size() + u.size());
  z << x, u;
  const Eigen::VectorXd r = mlp_forward(*residual_, z);
  const auto rows = spec_.accel_rows();
  for (size_t i = 0; i < rows.size(); ++i) dx(rows[i]) += r(static_cast<int>(i));
  return dx;
}

void AugmentedModel::derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                          Eigen::MatrixXd& a, Eigen::MatrixXd& b) const {
  dynamics_jacobians(spec_.kind, spec_.nominal_params, x, u, a, b);
  if (!residual_) return;
  thread_local Eigen::VectorXd z;
  z.resize(x.size() + u.size());
  z << x, u;
  const Eigen::MatrixXd jac = mlp_input_jacobian(*residual_, z);
  const auto rows = spec_.accel_rows();
  const int n = spec_.state_dim;
  const int m = spec_.input_dim;
  for (size_t i = 0; i < rows.size(); ++i) {
    const int ri = static_cast<int>(i);
    a.row(rows[i]) += jac.block(ri, 0, 1, n);
    if (m > 0) b.row(rows[i]) += jac.block(ri, n, 1, m);
  }
}

}  // namespace metampc
