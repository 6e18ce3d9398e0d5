#include "metampc/reference.hpp"

#include <cmath>
#include <numbers>
#include <utility>

#include "metampc/errors.hpp"

namespace metampc {

ReferenceKind reference_kind_from_string(const std::string& s) {
  if (s == "constant") return ReferenceKind::kConstant;
  if (s == "circle") return ReferenceKind::kCircle;
  throw ConfigError("unknown reference kind '" + s + "'");
}

std::string to_string(ReferenceKind k) {
  return k == ReferenceKind::kConstant ? "constant" : "circle";
}

ReferenceSignal make_constant_reference(Eigen::VectorXd x_ref, Eigen::VectorXd u_ref) {
  ReferenceSignal ref;
  ref.kind = ReferenceKind::kConstant;
  ref.x_const = std::move(x_ref);
  ref.u_ref = std::move(u_ref);
  return ref;
}

ReferenceSignal make_circle_reference(double center_x, double center_z, double radius,
                                      double period_s, Eigen::VectorXd u_ref) {
  if (period_s <= 0.0 || radius <= 0.0) throw ConfigError("circle reference needs positive radius and period");
  ReferenceSignal ref;
  ref.kind = ReferenceKind::kCircle;
  ref.center_x = center_x;
  ref.center_z = center_z;
  ref.radius = radius;
  ref.period_s = period_s;
  ref.u_ref = std::move(u_ref);
  return ref;
}

Eigen::VectorXd reference_state_at(const ReferenceSignal& ref, double t) {
  if (ref.kind == ReferenceKind::kConstant) return ref.x_const;
  const double omega = 2.0 * std::numbers::pi / ref.period_s;
  const double phase = omega * t;
  Eigen::VectorXd x(6);
  x(0) = ref.center_x + ref.radius * std::cos(phase);
  x(1) = -ref.radius * omega * std::sin(phase);
  x(2) = ref.center_z + ref.radius * std::sin(phase);
  x(3) = ref.radius * omega * std::cos(phase);
  x(4) = 0.0;
  x(5) = 0.0;
  return x;
}

const Eigen::VectorXd& reference_input(const ReferenceSignal& ref) { return ref.u_ref; }

}  // namespace metampc
