#include "metampc/ocp.hpp"

#include <algorithm>
#include <limits>
#include <utility>

namespace metampc {

void validate_ocp_config(const OcpConfig& cfg, int state_dim, int input_dim) {
  if (cfg.steps < 1) throw ConfigError("ocp: steps must be >= 1");
  if (cfg.horizon_s <= 0.0) throw ConfigError("ocp: horizon must be positive");
  if (cfg.q_diag.size() != state_dim) throw ConfigError("ocp: Q diagonal length mismatch");
  if (cfg.r_diag.size() != input_dim) throw ConfigError("ocp: R diagonal length mismatch");
  if (cfg.u_min.size() != input_dim || cfg.u_max.size() != input_dim) {
    throw ConfigError("ocp: bound vectors must match input dimension");
  }
  if ((cfg.q_diag.array() < 0.0).any() || (cfg.r_diag.array() < 0.0).any()) {
    throw ConfigError("ocp: weights must be nonnegative");
  }
  for (int i = 0; i < input_dim; ++i) {
    if (cfg.u_min(i) > cfg.u_max(i)) throw ConfigError("ocp: bounds out of order");
  }
  if (cfg.sqp_max_iters < 1 || cfg.sqp_tol <= 0.0) {
    throw ConfigError("ocp: solver iteration settings invalid");
  }
}

RefWindow build_ref_window(const ReferenceSignal& ref, double t, const OcpConfig& cfg) {
  RefWindow window;
  const double dt = cfg.dt();
  window.x_ref.reserve(cfg.steps + 1);
  window.u_ref.reserve(cfg.steps);
  for (int k = 0; k <= cfg.steps; ++k) window.x_ref.push_back(reference_state_at(ref, t + k * dt));
  for (int k = 0; k < cfg.steps; ++k) window.u_ref.push_back(ref.u_ref);
  return window;
}

double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& x_ref,
                  const Eigen::VectorXd& u_ref, const Eigen::VectorXd& q_diag,
                  const Eigen::VectorXd& r_diag) {
  const Eigen::VectorXd dx = x - x_ref;
  const Eigen::VectorXd du = u - u_ref;
  return dx.dot(q_diag.cwiseProduct(dx)) + du.dot(r_diag.cwiseProduct(du));
}

double terminal_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                     const Eigen::VectorXd& q_diag) {
  const Eigen::VectorXd dx = x - x_ref;
  return dx.dot(q_diag.cwiseProduct(dx));
}

MpcController::MpcController(AugmentedModel model, OcpConfig cfg, ReferenceSignal ref)
    : model_(std::move(model)), cfg_(std::move(cfg)), ref_(std::move(ref)) {
  validate_ocp_config(cfg_, model_.spec().state_dim, model_.spec().input_dim);
  last_u_ = detail::clamp_input(ref_.u_ref, cfg_);
}

Eigen::VectorXd MpcController::step(double t, const Eigen::VectorXd& x_measured,
                                    MpcTelemetry* telemetry) {
  const RefWindow window = build_ref_window(ref_, t, cfg_);

  const OcpSolution* warm = nullptr;
  OcpSolution shifted;
  if (warm_) {
    const double dt = cfg_.dt();
    const int shift = static_cast<int>(std::floor((t - warm_t_) / dt + 1e-9));
    if (shift <= 0) {
      warm = &*warm_;
    } else if (shift < cfg_.steps) {
      shifted = *warm_;
      for (int k = 0; k < cfg_.steps; ++k) {
        shifted.controls[k] = warm_->controls[std::min(k + shift, cfg_.steps - 1)];
      }
      warm = &shifted;
    }
  }

  try {
    OcpSolution sol = solve_ocp(model_, x_measured, window, cfg_, warm);
    if (telemetry) {
      telemetry->iters = sol.iters;
      telemetry->cost = sol.cost;
      telemetry->solve_ms = sol.solve_time_s * 1e3;
      telemetry->converged = sol.converged;
      telemetry->solver_failed = false;
    }
    last_u_ = sol.controls.front();
    warm_ = std::move(sol);
    warm_t_ = t;
    return last_u_;
  } catch (const SolverError&) {
    if (telemetry) {
      telemetry->iters = 0;
      telemetry->cost = std::numeric_limits<double>::quiet_NaN();
      telemetry->solve_ms = 0.0;
      telemetry->converged = false;
      telemetry->solver_failed = true;
    }
    warm_.reset();
    return last_u_;
  }
}

}  // namespace metampc
