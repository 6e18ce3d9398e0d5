#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "metampc/augmented.hpp"
#include "metampc/closed_loop.hpp"
#include "metampc/errors.hpp"
#include "metampc/integrate.hpp"
#include "metampc/plants.hpp"
#include "metampc/reference.hpp"

using namespace metampc;

namespace {

PlantSpec cart_spec() {
  const ParamMap p = {{"m_c", 1.0}, {"m_p", 0.1}, {"l", 0.5}, {"g", 9.81}};
  return make_cartpole_spec(p, p);
}

PlantSpec quad_spec() {
  const ParamMap p = {{"m", 0.027}, {"I_yy", 1.4e-5}, {"d", 0.04}, {"g", 9.81}};
  return make_quad2d_spec(p, p);
}

// df/dx and df/du by central differences, for checking the analytic forms.
void fd_jacobians(const PlantSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                  Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
  const double eps = 1e-6;
  a.resize(spec.state_dim, spec.state_dim);
  b.resize(spec.state_dim, spec.input_dim);
  for (int j = 0; j < spec.state_dim; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += eps;
    xm(j) -= eps;
    a.col(j) = (eval_true(spec, xp, u) - eval_true(spec, xm, u)) / (2.0 * eps);
  }
  for (int j = 0; j < spec.input_dim; ++j) {
    Eigen::VectorXd up = u, um = u;
    up(j) += eps;
    um(j) -= eps;
    b.col(j) = (eval_true(spec, x, up) - eval_true(spec, x, um)) / (2.0 * eps);
  }
}

struct ExpModel {
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd&) const { return x; }
  void derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd&, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) const {
    a = Eigen::MatrixXd::Identity(x.size(), x.size());
    b = Eigen::MatrixXd::Zero(x.size(), 0);
  }
};

struct LinearModel {
  Eigen::MatrixXd a_mat;
  Eigen::VectorXd derivative(const Eigen::VectorXd& x, const Eigen::VectorXd&) const {
    return a_mat * x;
  }
  void derivative_jacobians(const Eigen::VectorXd& x, const Eigen::VectorXd&, Eigen::MatrixXd& a,
                            Eigen::MatrixXd& b) const {
    a = a_mat;
    b = Eigen::MatrixXd::Zero(x.size(), 0);
  }
};

}  // namespace

TEST_CASE("van der pol derivative") {
  const PlantSpec spec = make_vdp_spec(0.2, 1.0);
  Eigen::VectorXd x(2);
  x << 0.0, 1.0;
  const Eigen::VectorXd dx = eval_true(spec, x, Eigen::VectorXd(0));
  CHECK(dx(0) == doctest::Approx(1.0));
  CHECK(dx(1) == doctest::Approx(0.2));
  const Eigen::VectorXd dx_nom = eval_nominal(spec, x, Eigen::VectorXd(0));
  CHECK(dx_nom(1) == doctest::Approx(1.0));
}

TEST_CASE("cart pole accelerations at upright with unit force") {
  const PlantSpec spec = cart_spec();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(4);
  Eigen::VectorXd u(1);
  u << 1.0;
  const Eigen::VectorXd dx = eval_true(spec, x, u);
  // Closed form with m_c=1, m_p=0.1, l=0.5: theta_dd = -60/41, p_dd = 40/41.
  CHECK(dx(1) == doctest::Approx(40.0 / 41.0).epsilon(1e-12));
  CHECK(dx(3) == doctest::Approx(-60.0 / 41.0).epsilon(1e-12));
  CHECK(dx(0) == 0.0);
  CHECK(dx(2) == 0.0);
}

TEST_CASE("quad hover is an equilibrium") {
  const PlantSpec spec = quad_spec();
  Eigen::VectorXd x = Eigen::VectorXd::Zero(6);
  x(2) = 1.0;
  const Eigen::VectorXd u = quad_hover_input(0.027, 9.81);
  CHECK(u(0) == doctest::Approx(0.027 * 9.81 / 2.0));
  const Eigen::VectorXd dx = eval_true(spec, x, u);
  CHECK(dx.lpNorm<Eigen::Infinity>() < 1e-14);
  Eigen::MatrixXd a, b;
  dynamics_jacobians(spec.kind, spec.true_params, x, u, a, b);
  CHECK(a(1, 4) == doctest::Approx(9.81).epsilon(1e-12));
}

TEST_CASE("analytic jacobians match finite differences") {
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> dist(-0.8, 0.8);
  for (const PlantSpec& spec : {make_vdp_spec(1.0, 1.0), cart_spec(), quad_spec()}) {
    for (int trial = 0; trial < 5; ++trial) {
      Eigen::VectorXd x(spec.state_dim), u(spec.input_dim);
      for (int i = 0; i < spec.state_dim; ++i) x(i) = dist(gen);
      for (int i = 0; i < spec.input_dim; ++i) u(i) = 0.1 * std::abs(dist(gen));
      Eigen::MatrixXd a, b, a_fd, b_fd;
      dynamics_jacobians(spec.kind, spec.true_params, x, u, a, b);
      fd_jacobians(spec, x, u, a_fd, b_fd);
      CHECK((a - a_fd).lpNorm<Eigen::Infinity>() < 1e-5);
      if (spec.input_dim > 0) CHECK((b - b_fd).lpNorm<Eigen::Infinity>() < 1e-5);
    }
  }
}

TEST_CASE("vdp jacobian at origin") {
  Eigen::MatrixXd a, b;
  dynamics_jacobians(PlantKind::kVanDerPol, {{"mu", 0.7}}, Eigen::VectorXd::Zero(2),
                     Eigen::VectorXd(0), a, b);
  CHECK(a(0, 0) == 0.0);
  CHECK(a(0, 1) == 1.0);
  CHECK(a(1, 0) == -1.0);
  CHECK(a(1, 1) == doctest::Approx(0.7));
}

TEST_CASE("rk4 step on xdot = x") {
  const ExpModel model;
  Eigen::VectorXd x(1);
  x << 1.0;
  const Eigen::VectorXd next = rk4_step(model, x, Eigen::VectorXd(0), 0.1);
  // Degree-four Taylor polynomial of exp(0.1).
  CHECK(next(0) == doctest::Approx(1.1051708333333333).epsilon(1e-14));
}

TEST_CASE("rk4 shows fourth order convergence on vdp") {
  const PlantSpec spec = make_vdp_spec(1.0, 1.0);
  const TruePlant plant{spec};
  Eigen::VectorXd x0(2);
  x0 << 2.0, 0.0;
  const Eigen::VectorXd u(0);
  auto integrate = [&](int n_steps) {
    const double h = 1.0 / n_steps;
    Eigen::VectorXd x = x0;
    for (int i = 0; i < n_steps; ++i) x = rk4_step(plant, x, u, h);
    return x;
  };
  const Eigen::VectorXd ref = integrate(1280);
  const double err_coarse = (integrate(10) - ref).norm();
  const double err_fine = (integrate(20) - ref).norm();
  const double order = std::log2(err_coarse / err_fine);
  CHECK(order > 3.7);
  CHECK(order < 4.6);
}

TEST_CASE("rk4 sensitivities match finite differences") {
  const PlantSpec spec = quad_spec();
  const TruePlant plant{spec};
  Eigen::VectorXd x(6), u(2);
  x << 0.1, -0.05, 0.9, 0.02, 0.08, -0.1;
  u << 0.12, 0.15;
  const double dt = 0.02;
  Eigen::MatrixXd a_d, b_d;
  rk4_sensitivities(plant, x, u, dt, a_d, b_d);
  const double eps = 1e-6;
  for (int j = 0; j < 6; ++j) {
    Eigen::VectorXd xp = x, xm = x;
    xp(j) += eps;
    xm(j) -= eps;
    const Eigen::VectorXd fd =
        (rk4_step(plant, xp, u, dt) - rk4_step(plant, xm, u, dt)) / (2.0 * eps);
    CHECK((fd - a_d.col(j)).lpNorm<Eigen::Infinity>() < 1e-5);
  }
  for (int j = 0; j < 2; ++j) {
    Eigen::VectorXd up = u, um = u;
    up(j) += eps;
    um(j) -= eps;
    const Eigen::VectorXd fd =
        (rk4_step(plant, x, up, dt) - rk4_step(plant, x, um, dt)) / (2.0 * eps);
    CHECK((fd - b_d.col(j)).lpNorm<Eigen::Infinity>() < 1e-5);
  }
}

TEST_CASE("rk4 discrete jacobian of a linear system is the taylor polynomial") {
  LinearModel model;
  model.a_mat.resize(2, 2);
  model.a_mat << 0.0, 1.0, -1.0, 0.0;
  const double dt = 0.05;
  Eigen::MatrixXd a_d, b_d;
  Eigen::VectorXd x(2);
  x << 0.3, -0.2;
  rk4_sensitivities(model, x, Eigen::VectorXd(0), dt, a_d, b_d);
  const Eigen::MatrixXd a = model.a_mat * dt;
  const Eigen::MatrixXd expect = Eigen::MatrixXd::Identity(2, 2) + a + a * a / 2.0 +
                                 a * a * a / 6.0 + a * a * a * a / 24.0;
  CHECK((a_d - expect).lpNorm<Eigen::Infinity>() < 1e-14);
}

TEST_CASE("harmonic oscillator energy is conserved over many periods") {
  const PlantSpec spec = make_vdp_spec(0.0, 0.0);
  const TruePlant plant{spec};
  Eigen::VectorXd x(2);
  x << 1.0, 0.0;
  for (int i = 0; i < 500; ++i) {
    x = integrate_control_period(plant, x, Eigen::VectorXd(0), 0.02, 0.002);
  }
  CHECK(x.squaredNorm() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("integrate_control_period rejects bad steps") {
  const TruePlant plant{make_vdp_spec(1.0, 1.0)};
  CHECK_THROWS_AS(
      integrate_control_period(plant, Eigen::VectorXd::Zero(2), Eigen::VectorXd(0), 0.0, 0.01),
      ConfigError);
}

TEST_CASE("augmented model adds constant residual to acceleration rows") {
  const PlantSpec spec = make_vdp_spec(1.0, 1.0);
  MlpModel net = mlp_init({2, 1}, Activation::kTanh, 3);
  net.weights[0].setZero();
  net.biases[0](0) = -0.5;
  AugmentedModel model(spec, net);
  Eigen::VectorXd x(2);
  x << 0.3, -0.4;
  const Eigen::VectorXd base = eval_nominal(spec, x, Eigen::VectorXd(0));
  const Eigen::VectorXd aug = model.derivative(x, Eigen::VectorXd(0));
  CHECK(aug(0) == base(0));
  CHECK(aug(1) == doctest::Approx(base(1) - 0.5).epsilon(1e-15));

  Eigen::MatrixXd a_aug, b_aug, a_nom, b_nom;
  model.derivative_jacobians(x, Eigen::VectorXd(0), a_aug, b_aug);
  dynamics_jacobians(spec.kind, spec.nominal_params, x, Eigen::VectorXd(0), a_nom, b_nom);
  CHECK((a_aug - a_nom).lpNorm<Eigen::Infinity>() < 1e-15);
}

TEST_CASE("augmented model without residual matches nominal exactly") {
  const PlantSpec spec = quad_spec();
  AugmentedModel model(spec);
  CHECK_FALSE(model.has_residual());
  Eigen::VectorXd x(6), u(2);
  x << 0.2, 0.1, 1.1, -0.1, 0.05, 0.0;
  u << 0.1, 0.14;
  CHECK((model.derivative(x, u) - eval_nominal(spec, x, u)).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("augmented model rejects mismatched residual dims") {
  const PlantSpec spec = quad_spec();
  const MlpModel wrong_in = mlp_init({6, 3}, Activation::kTanh, 1);
  const MlpModel wrong_out = mlp_init({8, 2}, Activation::kTanh, 1);
  CHECK_THROWS_AS(AugmentedModel(spec, wrong_in), ConfigError);
  CHECK_THROWS_AS(AugmentedModel(spec, wrong_out), ConfigError);
}

TEST_CASE("constant reference holds for all times") {
  Eigen::VectorXd x_ref(4), u_ref(1);
  x_ref << 0.0, 0.0, 0.1, 0.0;
  u_ref << 0.0;
  const ReferenceSignal ref = make_constant_reference(x_ref, u_ref);
  CHECK((reference_state_at(ref, 0.0) - x_ref).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK((reference_state_at(ref, 7.3) - x_ref).lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("circle reference geometry and periodicity") {
  Eigen::VectorXd u_ref(2);
  u_ref << 0.1, 0.1;
  const ReferenceSignal ref = make_circle_reference(0.0, 1.0, 0.5, 15.0, u_ref);
  const Eigen::VectorXd r0 = reference_state_at(ref, 0.0);
  CHECK(r0(0) == doctest::Approx(0.5));
  CHECK(r0(1) == doctest::Approx(0.0));
  CHECK(r0(2) == doctest::Approx(1.0));
  CHECK(r0(3) == doctest::Approx(0.5 * 2.0 * M_PI / 15.0));
  CHECK(r0(4) == 0.0);
  CHECK(r0(5) == 0.0);
  const Eigen::VectorXd quarter = reference_state_at(ref, 15.0 / 4.0);
  CHECK(quarter(0) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(quarter(2) == doctest::Approx(1.5));
  CHECK((reference_state_at(ref, 15.0) - r0).lpNorm<Eigen::Infinity>() < 1e-12);
  // Finite difference of position references recovers the velocity references.
  const double eps = 1e-6;
  const Eigen::VectorXd rp = reference_state_at(ref, 2.0 + eps);
  const Eigen::VectorXd rm = reference_state_at(ref, 2.0 - eps);
  const Eigen::VectorXd r2 = reference_state_at(ref, 2.0);
  CHECK((rp(0) - rm(0)) / (2.0 * eps) == doctest::Approx(r2(1)).epsilon(1e-6));
  CHECK((rp(2) - rm(2)) / (2.0 * eps) == doctest::Approx(r2(3)).epsilon(1e-6));
}

TEST_CASE("simulate_true without noise reports identical measured states") {
  const PlantSpec spec = make_vdp_spec(1.0, 1.0);
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  const std::vector<Eigen::VectorXd> controls(25, Eigen::VectorXd(0));
  const RolloutTrace trace = simulate_true(spec, x0, controls, 50.0, 0.002, 0.0, 9);
  REQUIRE(trace.rows.size() == controls.size());
  for (const TraceRow& row : trace.rows) {
    CHECK((row.x_meas - row.x_true).lpNorm<Eigen::Infinity>() == 0.0);
  }
  CHECK_FALSE(trace.diverged);
  // Against a direct integration of the same schedule.
  const TruePlant plant{spec};
  Eigen::VectorXd x = x0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    CHECK((trace.rows[i].x_true - x).lpNorm<Eigen::Infinity>() < 1e-12);
    x = integrate_control_period(plant, x, controls[i], 0.02, 0.002);
  }
  CHECK((trace.final_x_true - x).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("simulate_true with noise perturbs measurements only") {
  const PlantSpec spec = make_vdp_spec(1.0, 1.0);
  Eigen::VectorXd x0(2);
  x0 << 1.0, 0.0;
  const std::vector<Eigen::VectorXd> controls(10, Eigen::VectorXd(0));
  const RolloutTrace clean = simulate_true(spec, x0, controls, 50.0, 0.002, 0.0, 9);
  const RolloutTrace noisy = simulate_true(spec, x0, controls, 50.0, 0.002, 0.025, 9);
  double max_gap = 0.0;
  for (std::size_t i = 0; i < controls.size(); ++i) {
    CHECK((noisy.rows[i].x_true - clean.rows[i].x_true).lpNorm<Eigen::Infinity>() == 0.0);
    max_gap = std::max(max_gap,
                       (noisy.rows[i].x_meas - noisy.rows[i].x_true).lpNorm<Eigen::Infinity>());
  }
  CHECK(max_gap > 0.0);
  CHECK(max_gap < 0.2);
}
