#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "metampc/augmented.hpp"
#include "metampc/errors.hpp"
#include "metampc/integrate.hpp"
#include "metampc/ocp.hpp"
#include "metampc/plants.hpp"
#include "metampc/reference.hpp"

using namespace metampc;

namespace {

struct DoubleIntegrator {
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd& u) const {
    Eigen::VectorXd dx(2);
    dx << x(1), u(0);
    return dx;
  }
  void derivative_jacobians(const Eigen::VectorXd&, const Eigen::VectorXd&, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) const {
    a = Eigen::MatrixXd::Zero(2, 2);
    a(0, 1) = 1.0;
    b = Eigen::MatrixXd::Zero(2, 1);
    b(1, 0) = 1.0;
  }
};

OcpConfig integrator_config(double u_bound) {
  OcpConfig cfg;
  cfg.horizon_s = 1.0;
  cfg.steps = 20;
  cfg.q_diag = Eigen::VectorXd(2);
  cfg.q_diag << 1.0, 0.1;
  cfg.r_diag = Eigen::VectorXd::Constant(1, 0.05);
  cfg.u_min = Eigen::VectorXd::Constant(1, -u_bound);
  cfg.u_max = Eigen::VectorXd::Constant(1, u_bound);
  cfg.sqp_max_iters = 30;
  cfg.sqp_tol = 1e-10;
  return cfg;
}

RefWindow origin_window(const OcpConfig& cfg, int state_dim) {
  RefWindow refs;
  refs.x_ref.assign(cfg.steps + 1, Eigen::VectorXd::Zero(state_dim));
  refs.u_ref.assign(cfg.steps, Eigen::VectorXd::Zero(cfg.u_min.size()));
  return refs;
}

// Unconstrained finite-horizon LQR on the exact RK4 discretization, solved by
// backward Riccati recursion. Independent of the SQP path.
std::vector<Eigen::VectorXd> riccati_controls(const OcpConfig& cfg, const Eigen::VectorXd& x0) {
  const DoubleIntegrator model;
  Eigen::MatrixXd a_d, b_d;
  rk4_sensitivities(model, Eigen::VectorXd::Zero(2), Eigen::VectorXd::Zero(1), cfg.dt(), a_d, b_d);

  const Eigen::MatrixXd q = cfg.q_diag.asDiagonal();
  const Eigen::MatrixXd r = cfg.r_diag.asDiagonal();
  std::vector<Eigen::MatrixXd> gains(cfg.steps);
  Eigen::MatrixXd p = q;
  for (int k = cfg.steps - 1; k >= 0; --k) {
    const Eigen::MatrixXd btp = b_d.transpose() * p;
    gains[k] = (r + btp * b_d).ldlt().solve(btp * a_d);
    p = q + a_d.transpose() * p * (a_d - b_d * gains[k]);
  }
  std::vector<Eigen::VectorXd> us(cfg.steps);
  Eigen::VectorXd x = x0;
  for (int k = 0; k < cfg.steps; ++k) {
    us[k] = -gains[k] * x;
    x = a_d * x + b_d * us[k];
  }
  return us;
}

}  // namespace

TEST_CASE("config validation") {
  OcpConfig cfg = integrator_config(1.0);
  validate_ocp_config(cfg, 2, 1);
  OcpConfig bad = cfg;
  bad.steps = 0;
  CHECK_THROWS_AS(validate_ocp_config(bad, 2, 1), ConfigError);
  bad = cfg;
  bad.q_diag = Eigen::VectorXd::Ones(3);
  CHECK_THROWS_AS(validate_ocp_config(bad, 2, 1), ConfigError);
  bad = cfg;
  bad.r_diag(0) = -1.0;
  CHECK_THROWS_AS(validate_ocp_config(bad, 2, 1), ConfigError);
  bad = cfg;
  bad.u_min(0) = 2.0;
  CHECK_THROWS_AS(validate_ocp_config(bad, 2, 1), ConfigError);
}

TEST_CASE("reference window sampling") {
  OcpConfig cfg = integrator_config(1.0);
  cfg.steps = 4;
  Eigen::VectorXd u_ref(2);
  u_ref << 0.1, 0.1;
  const ReferenceSignal circle = make_circle_reference(0.0, 1.0, 0.5, 15.0, u_ref);
  const RefWindow window = build_ref_window(circle, 2.0, cfg);
  REQUIRE(window.x_ref.size() == 5);
  REQUIRE(window.u_ref.size() == 4);
  for (int k = 0; k <= 4; ++k) {
    const Eigen::VectorXd expect = reference_state_at(circle, 2.0 + k * cfg.dt());
    CHECK((window.x_ref[k] - expect).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK((window.u_ref[0] - u_ref).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("unconstrained lq solution matches riccati recursion") {
  const DoubleIntegrator model;
  const OcpConfig cfg = integrator_config(1e6);
  Eigen::VectorXd x0(2);
  x0 << 1.0, -0.5;
  const RefWindow refs = origin_window(cfg, 2);
  const OcpSolution sol = solve_ocp(model, x0, refs, cfg);
  CHECK(sol.converged);
  const std::vector<Eigen::VectorXd> oracle = riccati_controls(cfg, x0);
  double worst = 0.0;
  for (int k = 0; k < cfg.steps; ++k) {
    worst = std::max(worst, (sol.controls[k] - oracle[k]).lpNorm<Eigen::Infinity>());
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("tight bounds saturate exactly") {
  const DoubleIntegrator model;
  const OcpConfig cfg = integrator_config(0.1);
  Eigen::VectorXd x0(2);
  x0 << 5.0, 0.0;
  const RefWindow refs = origin_window(cfg, 2);
  const OcpSolution sol = solve_ocp(model, x0, refs, cfg);
  // Far from the origin the first moves sit on the lower bound bit-exactly.
  CHECK(sol.controls[0](0) == -0.1);
  CHECK(sol.controls[1](0) == -0.1);
  for (const Eigen::VectorXd& u : sol.controls) {
    CHECK(u(0) >= -0.1);
    CHECK(u(0) <= 0.1);
  }
  // And the saturated plan still beats the unconstrained plan clipped to box.
  const std::vector<Eigen::VectorXd> oracle = riccati_controls(cfg, x0);
  std::vector<Eigen::VectorXd> clipped(cfg.steps);
  for (int k = 0; k < cfg.steps; ++k) clipped[k] = detail::clamp_input(oracle[k], cfg);
  std::vector<Eigen::VectorXd> xs(cfg.steps + 1);
  xs[0] = x0;
  for (int k = 0; k < cfg.steps; ++k) xs[k + 1] = rk4_step(model, xs[k], clipped[k], cfg.dt());
  const double clipped_cost = detail::trajectory_cost<DoubleIntegrator>(cfg, refs, xs, clipped);
  CHECK(sol.cost <= clipped_cost + 1e-9);
}

TEST_CASE("equilibrium start converges immediately at zero cost") {
  const ParamMap p = {{"m", 0.027}, {"I_yy", 1.4e-5}, {"d", 0.04}, {"g", 9.81}};
  const PlantSpec spec = make_quad2d_spec(p, p);
  const AugmentedModel model(spec);
  OcpConfig cfg;
  cfg.horizon_s = 1.0;
  cfg.steps = 20;
  cfg.q_diag = Eigen::VectorXd::Ones(6);
  cfg.r_diag = Eigen::VectorXd::Constant(2, 0.1);
  cfg.u_min = spec.u_min;
  cfg.u_max = spec.u_max;
  Eigen::VectorXd x_ref = Eigen::VectorXd::Zero(6);
  x_ref(2) = 1.0;
  const Eigen::VectorXd u_hover = quad_hover_input(0.027, 9.81);
  RefWindow refs;
  refs.x_ref.assign(cfg.steps + 1, x_ref);
  refs.u_ref.assign(cfg.steps, u_hover);
  const OcpSolution sol = solve_ocp(model, x_ref, refs, cfg);
  CHECK(sol.converged);
  CHECK(sol.iters == 1);
  CHECK(sol.cost == doctest::Approx(0.0).epsilon(1e-12));
  for (const Eigen::VectorXd& u : sol.controls) {
    CHECK((u - u_hover).lpNorm<Eigen::Infinity>() < 1e-12);
  }
}

TEST_CASE("warm started resolve is idempotent") {
  const DoubleIntegrator model;
  const OcpConfig cfg = integrator_config(1e6);
  Eigen::VectorXd x0(2);
  x0 << 0.7, 0.2;
  const RefWindow refs = origin_window(cfg, 2);
  const OcpSolution first = solve_ocp(model, x0, refs, cfg);
  CHECK(first.converged);
  const OcpSolution second = solve_ocp(model, x0, refs, cfg, &first);
  CHECK(second.converged);
  CHECK(second.iters == 1);
  double gap = 0.0;
  for (int k = 0; k < cfg.steps; ++k) {
    gap = std::max(gap, (second.controls[k] - first.controls[k]).lpNorm<Eigen::Infinity>());
  }
  CHECK(gap < 1e-9);
}

TEST_CASE("mismatched reference window is rejected") {
  const DoubleIntegrator model;
  const OcpConfig cfg = integrator_config(1.0);
  RefWindow refs = origin_window(cfg, 2);
  refs.x_ref.pop_back();
  CHECK_THROWS_AS(solve_ocp(model, Eigen::VectorXd::Zero(2), refs, cfg), ShapeError);
}

TEST_CASE("receding horizon mpc balances the matched cart pole") {
  const ParamMap p = {{"m_c", 1.0}, {"m_p", 0.1}, {"l", 0.5}, {"g", 9.81}};
  const PlantSpec spec = make_cartpole_spec(p, p);
  OcpConfig cfg;
  cfg.horizon_s = 1.0;
  cfg.steps = 20;
  cfg.q_diag = Eigen::VectorXd(4);
  cfg.q_diag << 1.0, 0.1, 5.0, 0.1;
  cfg.r_diag = Eigen::VectorXd::Constant(1, 0.1);
  cfg.u_min = spec.u_min;
  cfg.u_max = spec.u_max;
  cfg.sqp_max_iters = 8;
  const ReferenceSignal ref =
      make_constant_reference(Eigen::VectorXd::Zero(4), Eigen::VectorXd::Zero(1));
  MpcController mpc(AugmentedModel(spec), cfg, ref);

  const TruePlant plant{spec};
  Eigen::VectorXd x(4);
  x << 0.0, 0.0, 0.15, 0.0;
  const double period = 0.02;
  MpcTelemetry tel;
  for (int i = 0; i < 400; ++i) {
    const Eigen::VectorXd u = mpc.step(i * period, x, &tel);
    CHECK_FALSE(tel.solver_failed);
    x = integrate_control_period(plant, x, u, period, 0.002);
  }
  CHECK(std::abs(x(2)) < 0.01);
  CHECK(std::abs(x(3)) < 0.05);
  CHECK(std::abs(x(0)) < 0.1);
}
