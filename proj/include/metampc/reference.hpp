#pragma once

#include <Eigen/Dense>
#include <string>

namespace metampc {

enum class ReferenceKind { kConstant, kCircle };

ReferenceKind reference_kind_from_string(const std::string& s);
std::string to_string(ReferenceKind k);

// Constant setpoint or the planar circular trajectory
//   x(t) = x_c + R cos(2πt/T),  z(t) = z_c + R sin(2πt/T)
// with consistent velocity references and level attitude.
struct ReferenceSignal {
  ReferenceKind kind = ReferenceKind::kConstant;
  Eigen::VectorXd x_const;
  Eigen::VectorXd u_ref;
  double center_x = 0.0;
  double center_z = 1.0;
  double radius = 0.5;
  double period_s = 15.0;
};

ReferenceSignal make_constant_reference(Eigen::VectorXd x_ref, Eigen::VectorXd u_ref);
ReferenceSignal make_circle_reference(double center_x, double center_z, double radius,
                                      double period_s, Eigen::VectorXd u_ref);

Eigen::VectorXd reference_state_at(const ReferenceSignal& ref, double t);
const Eigen::VectorXd& reference_input(const ReferenceSignal& ref);

}  // namespace metampc
