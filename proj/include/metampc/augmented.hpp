#pragma once

#include <Eigen/Dense>
#include <memory>
#include <optional>

#include "metampc/mlp.hpp"
#include "metampc/plants.hpp"

namespace metampc {

// Prediction model used by the controller: nominal plant plus a learned
// residual added to the acceleration rows. Without a network it reduces
// bitwise to the nominal model.
class AugmentedModel {
 public:
  explicit AugmentedModel(PlantSpec spec);
  AugmentedModel(PlantSpec spec, MlpModel residual);

  const PlantSpec& spec() const { return spec_; }
  bool has_residual() const { return residual_.has_value(); }
  const MlpModel& residual() const;

  // Atomic swap of the residual network between solves.
  void set_residual(MlpModel residual);
  void clear_residual();

  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const;
  void derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                            Eigen::MatrixXd& a, Eigen::MatrixXd& b) const;

 private:
  void check_residual_dims(const MlpModel& residual) const;

  PlantSpec spec_;
  std::optional<MlpModel> residual_;
};

}  // namespace metampc
