#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <optional>
#include <vector>

#include "metampc/augmented.hpp"
#include "metampc/errors.hpp"
#include "metampc/integrate.hpp"
#include "metampc/reference.hpp"

namespace metampc {

struct OcpConfig {
  double horizon_s = 1.0;
  int steps = 20;
  Eigen::VectorXd q_diag;
  Eigen::VectorXd r_diag;
  Eigen::VectorXd u_min;
  Eigen::VectorXd u_max;
  int sqp_max_iters = 30;
  double sqp_tol = 1e-6;
  double reg_lambda = 1e-6;

  double dt() const { return horizon_s / steps; }
};

void validate_ocp_config(const OcpConfig& cfg, int state_dim, int input_dim);

struct RefWindow {
  std::vector<Eigen::VectorXd> x_ref;  // N+1 entries
  std::vector<Eigen::VectorXd> u_ref;  // N entries
};

RefWindow build_ref_window(const ReferenceSignal& ref, double t, const OcpConfig& cfg);

struct OcpSolution {
  std::vector<Eigen::VectorXd> states;    // N+1
  std::vector<Eigen::VectorXd> controls;  // N
  double cost = 0.0;
  int iters = 0;
  bool converged = false;
  double solve_time_s = 0.0;
};

double stage_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& x_ref,
                  const Eigen::VectorXd& u_ref, const Eigen::VectorXd& q_diag,
                  const Eigen::VectorXd& r_diag);
double terminal_cost(const Eigen::VectorXd& x, const Eigen::VectorXd& x_ref,
                     const Eigen::VectorXd& q_diag);

namespace detail {

inline Eigen::VectorXd clamp_input(const Eigen::VectorXd& u, const OcpConfig& cfg) {
  return u.cwiseMax(cfg.u_min).cwiseMin(cfg.u_max);
}

template <typename Model>
double trajectory_cost(const OcpConfig& cfg, const RefWindow& refs,
                       const std::vector<Eigen::VectorXd>& xs,
                       const std::vector<Eigen::VectorXd>& us) {
  double cost = 0.0;
  for (int k = 0; k < cfg.steps; ++k) {
    cost += stage_cost(xs[k], us[k], refs.x_ref[k], refs.u_ref[k], cfg.q_diag, cfg.r_diag);
  }
  cost += terminal_cost(xs[cfg.steps], refs.x_ref[cfg.steps], cfg.q_diag);
  return cost;
}

// Factors quu + lambda*I, escalating lambda from zero until the matrix is
// positive definite.
inline Eigen::LDLT<Eigen::MatrixXd> factor_spd(const Eigen::MatrixXd& quu, double reg_lambda) {
  const int m = static_cast<int>(quu.rows());
  const double scale = std::max(1.0, quu.diagonal().cwiseAbs().maxCoeff());
  double lambda = 0.0;
  for (int attempt = 0; attempt < 40; ++attempt) {
    Eigen::MatrixXd reg = quu + lambda * Eigen::MatrixXd::Identity(m, m);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
    if (ldlt.info() == Eigen::Success &&
        (ldlt.vectorD().array() > 1e-12 * scale).all()) {
      return ldlt;
    }
    lambda = lambda == 0.0 ? std::max(reg_lambda, 1e-10) : lambda * 10.0;
    if (lambda > 1e8 * scale) break;
  }
  throw SolverError("ocp: input Hessian could not be regularized to positive definite");
}

}  // namespace detail

// Gauss-Newton SQP over rollout trajectories: linearize with RK4
// sensitivities, solve the time-varying LQR subproblem by backward Riccati
// recursion with per-channel clamping of the feedforward onto the input box
// (clamped channels drop their feedback rows), then a forward pass with
// backtracking line search. Shooting gaps are closed by construction since
// states always come from rollouts of the current controls.
template <typename Model>
OcpSolution solve_ocp(const Model& model, const Eigen::VectorXd& x0, const RefWindow& refs,
                      const OcpConfig& cfg, const OcpSolution* warm = nullptr) {
  const auto t_start = std::chrono::steady_clock::now();
  const int n = static_cast<int>(x0.size());
  const int m = static_cast<int>(cfg.u_min.size());
  const int big_n = cfg.steps;
  const double dt = cfg.dt();
  validate_ocp_config(cfg, n, m);
  if (!x0.allFinite()) throw SolverError("ocp: non-finite initial state");
  if (static_cast<int>(refs.x_ref.size()) != big_n + 1 ||
      static_cast<int>(refs.u_ref.size()) != big_n) {
    throw ShapeError("ocp: reference window length does not match horizon");
  }

  std::vector<Eigen::VectorXd> us(big_n);
  if (warm && static_cast<int>(warm->controls.size()) == big_n) {
    for (int k = 0; k < big_n; ++k) us[k] = detail::clamp_input(warm->controls[k], cfg);
  } else {
    for (int k = 0; k < big_n; ++k) us[k] = detail::clamp_input(refs.u_ref[k], cfg);
  }

  std::vector<Eigen::VectorXd> xs(big_n + 1);
  xs[0] = x0;
  for (int k = 0; k < big_n; ++k) {
    try {
      xs[k + 1] = rk4_step(model, xs[k], us[k], dt);
    } catch (const NumericError&) {
      throw SolverError("ocp: initial rollout diverged at node " + std::to_string(k));
    }
  }
  double cost = detail::trajectory_cost<Model>(cfg, refs, xs, us);

  OcpSolution sol;
  sol.states = xs;
  sol.controls = us;
  sol.cost = cost;

  const Eigen::VectorXd q2 = 2.0 * cfg.q_diag;
  const Eigen::VectorXd r2 = 2.0 * cfg.r_diag;
  std::vector<Eigen::MatrixXd> gains(big_n);
  std::vector<Eigen::VectorXd> feeds(big_n);

  for (int iter = 1; iter <= cfg.sqp_max_iters; ++iter) {
    Eigen::VectorXd vx = q2.cwiseProduct(xs[big_n] - refs.x_ref[big_n]);
    Eigen::MatrixXd vxx = q2.asDiagonal();
    double max_step = 0.0;
    Eigen::MatrixXd a_d, b_d;
    for (int k = big_n - 1; k >= 0; --k) {
      rk4_sensitivities(model, xs[k], us[k], dt, a_d, b_d);
      const Eigen::VectorXd qx = q2.cwiseProduct(xs[k] - refs.x_ref[k]) + a_d.transpose() * vx;
      const Eigen::VectorXd qu = r2.cwiseProduct(us[k] - refs.u_ref[k]) + b_d.transpose() * vx;
      const Eigen::MatrixXd vxx_a = vxx * a_d;
      Eigen::MatrixXd qxx = a_d.transpose() * vxx_a;
      qxx.diagonal() += q2;
      Eigen::MatrixXd quu = b_d.transpose() * vxx * b_d;
      quu.diagonal() += r2;
      const Eigen::MatrixXd qux = b_d.transpose() * vxx_a;

      const auto ldlt = detail::factor_spd(quu, cfg.reg_lambda);
      Eigen::VectorXd kff = -ldlt.solve(qu);
      Eigen::MatrixXd kmat = -ldlt.solve(qux);

      const Eigen::VectorXd u_new = detail::clamp_input(us[k] + kff, cfg);
      const Eigen::VectorXd kff_clamped = u_new - us[k];
      for (int ch = 0; ch < m; ++ch) {
        if (kff_clamped(ch) != kff(ch)) kmat.row(ch).setZero();
      }
      max_step = std::max(max_step, kff_clamped.lpNorm<Eigen::Infinity>());

      vx = qx + kmat.transpose() * (quu * kff_clamped + qu) + qux.transpose() * kff_clamped;
      vxx = qxx + kmat.transpose() * quu * kmat + kmat.transpose() * qux +
            qux.transpose() * kmat;
      vxx = 0.5 * (vxx + vxx.transpose()).eval();

      feeds[k] = kff_clamped;
      gains[k] = kmat;
    }

    sol.iters = iter;
    if (max_step < cfg.sqp_tol) {
      sol.converged = true;
      break;
    }

    bool accepted = false;
    std::vector<Eigen::VectorXd> xs_try(big_n + 1);
    std::vector<Eigen::VectorXd> us_try(big_n);
    for (int backtrack = 0; backtrack <= 10 && !accepted; ++backtrack) {
      const double alpha = std::pow(0.5, backtrack);
      xs_try[0] = x0;
      bool finite = true;
      for (int k = 0; k < big_n; ++k) {
        us_try[k] = detail::clamp_input(
            us[k] + alpha * feeds[k] + gains[k] * (xs_try[k] - xs[k]), cfg);
        try {
          xs_try[k + 1] = rk4_step(model, xs_try[k], us_try[k], dt);
        } catch (const NumericError&) {
          finite = false;
          break;
        }
      }
      if (!finite) continue;
      const double cost_try = detail::trajectory_cost<Model>(cfg, refs, xs_try, us_try);
      if (cost_try < cost) {
        xs = xs_try;
        us = us_try;
        cost = cost_try;
        accepted = true;
      }
    }
    if (!accepted) {
      sol.converged = false;
      break;
    }
    sol.states = xs;
    sol.controls = us;
    sol.cost = cost;
  }

  sol.solve_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return sol;
}

struct MpcTelemetry {
  int iters = 0;
  double cost = 0.0;
  double solve_ms = 0.0;
  bool converged = false;
  bool solver_failed = false;
};

// Receding-horizon wrapper: rebuilds the reference window at each call, warm
// starts from the time-shifted previous solution, and holds the last input if
// a solve fails outright.
class MpcController {
 public:
  MpcController(AugmentedModel model, OcpConfig cfg, ReferenceSignal ref);

  Eigen::VectorXd step(double t, const Eigen::VectorXd& x_measured,
                       MpcTelemetry* telemetry = nullptr);

  AugmentedModel& model() { return model_; }
  const AugmentedModel& model() const { return model_; }
  const OcpConfig& config() const { return cfg_; }
  const ReferenceSignal& reference() const { return ref_; }

 private:
  AugmentedModel model_;
  OcpConfig cfg_;
  ReferenceSignal ref_;
  std::optional<OcpSolution> warm_;
  double warm_t_ = 0.0;
  Eigen::VectorXd last_u_;
};

}  // namespace metampc
