#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "metampc/errors.hpp"
#include "metampc/plants.hpp"

namespace metampc {

// Model concept: derivative(x, u) -> xdot, and for sensitivity propagation
// derivative_jacobians(x, u, A, B) filling df/dx and df/du.

struct TruePlant {
  PlantSpec spec;
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return eval_true(spec, x, u);
  }
  void derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) const {
    dynamics_jacobians(spec.kind, spec.true_params, x, u, a, b);
  }
};

struct NominalPlant {
  PlantSpec spec;
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    return eval_nominal(spec, x, u);
  }
  void derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd& u, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) const {
    dynamics_jacobians(spec.kind, spec.nominal_params, x, u, a, b);
  }
};

template <typename Model>
Eigen::VectorXd rk4_step(const Model& model, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                         double dt) {
  const Eigen::VectorXd k1 = model.derivative(x, u);
  const Eigen::VectorXd k2 = model.derivative(x + 0.5 * dt * k1, u);
  const Eigen::VectorXd k3 = model.derivative(x + 0.5 * dt * k2, u);
  const Eigen::VectorXd k4 = model.derivative(x + dt * k3, u);
  Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericError("rk4: non-finite state");
  return next;
}

// One RK4 step with exact discrete Jacobians d(x_next)/dx and d(x_next)/du,
// obtained by chaining the stage Jacobians.
template <typename Model>
Eigen::VectorXd rk4_sensitivities(const Model& model, const Eigen::VectorXd& x,
                                  const Eigen::VectorXd& u, double dt, Eigen::MatrixXd& a_d,
                                  Eigen::MatrixXd& b_d) {
  const int n = static_cast<int>(x.size());
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);

  Eigen::MatrixXd a1, b1, a2, b2, a3, b3, a4, b4;
  const Eigen::VectorXd k1 = model.derivative(x, u);
  model.derivative_jacobians(x, u, a1, b1);
  const Eigen::MatrixXd dk1_dx = a1;
  const Eigen::MatrixXd dk1_du = b1;

  const Eigen::VectorXd x2 = x + 0.5 * dt * k1;
  const Eigen::VectorXd k2 = model.derivative(x2, u);
  model.derivative_jacobians(x2, u, a2, b2);
  const Eigen::MatrixXd dk2_dx = a2 * (eye + 0.5 * dt * dk1_dx);
  const Eigen::MatrixXd dk2_du = a2 * (0.5 * dt * dk1_du) + b2;

  const Eigen::VectorXd x3 = x + 0.5 * dt * k2;
  const Eigen::VectorXd k3 = model.derivative(x3, u);
  model.derivative_jacobians(x3, u, a3, b3);
  const Eigen::MatrixXd dk3_dx = a3 * (eye + 0.5 * dt * dk2_dx);
  const Eigen::MatrixXd dk3_du = a3 * (0.5 * dt * dk2_du) + b3;

  const Eigen::VectorXd x4 = x + dt * k3;
  const Eigen::VectorXd k4 = model.derivative(x4, u);
  model.derivative_jacobians(x4, u, a4, b4);
  const Eigen::MatrixXd dk4_dx = a4 * (eye + dt * dk3_dx);
  const Eigen::MatrixXd dk4_du = a4 * (dt * dk3_du) + b4;

  a_d = eye + (dt / 6.0) * (dk1_dx + 2.0 * dk2_dx + 2.0 * dk3_dx + dk4_dx);
  b_d = (dt / 6.0) * (dk1_du + 2.0 * dk2_du + 2.0 * dk3_du + dk4_du);

  Eigen::VectorXd next = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  if (!next.allFinite()) throw NumericError("rk4: non-finite state");
  return next;
}

// Integrates across one control period with a zero-order-hold input, using
// RK4 substeps no longer than max_substep.
template <typename Model>
Eigen::VectorXd integrate_control_period(const Model& model, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& u, double period,
                                         double max_substep) {
  if (period <= 0.0 || max_substep <= 0.0) throw ConfigError("integrate: step must be positive");
  const int n_sub = std::max(1, static_cast<int>(std::ceil(period / max_substep - 1e-12)));
  const double h = period / n_sub;
  Eigen::VectorXd xk = x;
  for (int i = 0; i < n_sub; ++i) xk = rk4_step(model, xk, u, h);
  return xk;
}

}  // namespace metampc
