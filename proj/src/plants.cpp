#include "metampc/plants.hpp"

#include <cmath>

#include "metampc/errors.hpp"

namespace metampc {

namespace {

double param(const ParamMap& p, const std::string& key) {
  auto it = p.find(key);
  if (it == p.end()) throw ConfigError("plant parameter '" + key + "' missing");
  return it->second;
}

void check_dims(const PlantSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  if (x.size() != spec.state_dim) {
    throw ShapeError("plant: state has dimension " + std::to_string(x.size()) + ", expected " +
                     std::to_string(spec.state_dim));
  }
  if (u.size() != spec.input_dim) {
    throw ShapeError("plant: input has dimension " + std::to_string(u.size()) + ", expected " +
                     std::to_string(spec.input_dim));
  }
}

}  // namespace

PlantKind plant_kind_from_string(const std::string& s) {
  if (s == "van_der_pol") return PlantKind::kVanDerPol;
  if (s == "cart_pole") return PlantKind::kCartPole;
  if (s == "quad_2d") return PlantKind::kQuad2d;
  throw ConfigError("unknown plant kind '" + s + "'");
}

std::string to_string(PlantKind k) {
  switch (k) {
    case PlantKind::kVanDerPol: return "van_der_pol";
    case PlantKind::kCartPole: return "cart_pole";
    case PlantKind::kQuad2d: return "quad_2d";
  }
  return "?";
}

std::vector<int> PlantSpec::accel_rows() const {
  std::vector<int> rows(pos_dim);
  for (int i = 0; i < pos_dim; ++i) rows[i] = 2 * i + 1;
  return rows;
}

const std::vector<std::string>& required_params(PlantKind kind) {
  static const std::vector<std::string> vdp = {"mu"};
  static const std::vector<std::string> cart = {"m_c", "m_p", "l", "g"};
  static const std::vector<std::string> quad = {"m", "I_yy", "d", "g"};
  switch (kind) {
    case PlantKind::kVanDerPol: return vdp;
    case PlantKind::kCartPole: return cart;
    default: return quad;
  }
}

const std::vector<std::string>& scalable_params(PlantKind kind) {
  static const std::vector<std::string> vdp = {"mu"};
  static const std::vector<std::string> cart = {"m_c", "m_p"};
  static const std::vector<std::string> quad = {"m", "I_yy"};
  switch (kind) {
    case PlantKind::kVanDerPol: return vdp;
    case PlantKind::kCartPole: return cart;
    default: return quad;
  }
}

void validate_spec(const PlantSpec& spec) {
  if (spec.state_dim <= 0 || spec.pos_dim <= 0 || spec.input_dim < 0) {
    throw ConfigError("plant: dimensions must be positive");
  }
  if (spec.u_min.size() != spec.input_dim || spec.u_max.size() != spec.input_dim) {
    throw ConfigError("plant: bound vectors must match input dimension");
  }
  for (int i = 0; i < spec.input_dim; ++i) {
    if (spec.u_min(i) > spec.u_max(i)) throw ConfigError("plant: bounds out of order");
  }
  for (const auto& key : required_params(spec.kind)) {
    param(spec.true_params, key);
    param(spec.nominal_params, key);
  }
}

PlantSpec make_vdp_spec(double mu_true, double mu_nominal) {
  PlantSpec spec;
  spec.kind = PlantKind::kVanDerPol;
  spec.state_dim = 2;
  spec.input_dim = 0;
  spec.pos_dim = 1;
  spec.true_params = {{"mu", mu_true}};
  spec.nominal_params = {{"mu", mu_nominal}};
  spec.u_min = Eigen::VectorXd(0);
  spec.u_max = Eigen::VectorXd(0);
  return spec;
}

PlantSpec make_cartpole_spec(const ParamMap& true_params, const ParamMap& nominal_params,
                             double f_min, double f_max) {
  PlantSpec spec;
  spec.kind = PlantKind::kCartPole;
  spec.state_dim = 4;
  spec.input_dim = 1;
  spec.pos_dim = 2;
  spec.true_params = true_params;
  spec.nominal_params = nominal_params;
  spec.u_min = Eigen::VectorXd::Constant(1, f_min);
  spec.u_max = Eigen::VectorXd::Constant(1, f_max);
  validate_spec(spec);
  return spec;
}

PlantSpec make_quad2d_spec(const ParamMap& true_params, const ParamMap& nominal_params,
                           double t_min, double t_max) {
  PlantSpec spec;
  spec.kind = PlantKind::kQuad2d;
  spec.state_dim = 6;
  spec.input_dim = 2;
  spec.pos_dim = 3;
  spec.true_params = true_params;
  spec.nominal_params = nominal_params;
  spec.u_min = Eigen::VectorXd::Constant(2, t_min);
  spec.u_max = Eigen::VectorXd::Constant(2, t_max);
  validate_spec(spec);
  return spec;
}

Eigen::VectorXd eval_dynamics(PlantKind kind, const ParamMap& params, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u) {
  if (!x.allFinite()) throw NumericError("plant: non-finite state");
  switch (kind) {
    case PlantKind::kVanDerPol: {
      const double mu = param(params, "mu");
      Eigen::VectorXd dx(2);
      dx(0) = x(1);
      dx(1) = mu * (1.0 - x(0) * x(0)) * x(1) - x(0);
      return dx;
    }
    case PlantKind::kCartPole: {
      const double m_c = param(params, "m_c");
      const double m_p = param(params, "m_p");
      const double l = param(params, "l");
      const double g = param(params, "g");
      const double f = u(0);
      const double theta = x(2);
      const double theta_dot = x(3);
      const double s = std::sin(theta);
      const double c = std::cos(theta);
      const double total = m_c + m_p;
      // theta_dd first from its closed form, then p_dd.
      const double theta_dd =
          (g * s + c * (-f - m_p * l * theta_dot * theta_dot * s) / total) /
          (l * (4.0 / 3.0 - m_p * c * c / total));
      const double p_dd = (f + m_p * l * (theta_dot * theta_dot * s - theta_dd * c)) / total;
      Eigen::VectorXd dx(4);
      dx << x(1), p_dd, x(3), theta_dd;
      return dx;
    }
    case PlantKind::kQuad2d: {
      const double m = param(params, "m");
      const double i_yy = param(params, "I_yy");
      const double d = param(params, "d");
      const double g = param(params, "g");
      const double thrust = u(0) + u(1);
      const double theta = x(4);
      Eigen::VectorXd dx(6);
      dx(0) = x(1);
      dx(1) = std::sin(theta) * thrust / m;
      dx(2) = x(3);
      dx(3) = std::cos(theta) * thrust / m - g;
      dx(4) = x(5);
      dx(5) = (u(1) - u(0)) * d / i_yy;
      return dx;
    }
  }
  throw ConfigError("plant: unknown kind");
}

Eigen::VectorXd eval_true(const PlantSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
  check_dims(spec, x, u);
  return eval_dynamics(spec.kind, spec.true_params, x, u);
}

Eigen::VectorXd eval_nominal(const PlantSpec& spec, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u) {
  check_dims(spec, x, u);
  return eval_dynamics(spec.kind, spec.nominal_params, x, u);
}

void dynamics_jacobians(PlantKind kind, const ParamMap& params, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
  switch (kind) {
    case PlantKind::kVanDerPol: {
      const double mu = param(params, "mu");
      a = Eigen::MatrixXd::Zero(2, 2);
      b = Eigen::MatrixXd::Zero(2, 0);
      a(0, 1) = 1.0;
      a(1, 0) = -2.0 * mu * x(0) * x(1) - 1.0;
      a(1, 1) = mu * (1.0 - x(0) * x(0));
      return;
    }
    case PlantKind::kCartPole: {
      const double m_c = param(params, "m_c");
      const double m_p = param(params, "m_p");
      const double l = param(params, "l");
      const double g = param(params, "g");
      const double f = u(0);
      const double theta = x(2);
      const double td = x(3);
      const double s = std::sin(theta);
      const double c = std::cos(theta);
      const double total = m_c + m_p;

      const double num = g * s + c * (-f - m_p * l * td * td * s) / total;
      const double den = l * (4.0 / 3.0 - m_p * c * c / total);
      const double theta_dd = num / den;

      const double dnum_dtheta = g * c - s * (-f - m_p * l * td * td * s) / total +
                                 c * (-m_p * l * td * td * c) / total;
      const double dden_dtheta = l * (2.0 * m_p * c * s / total);
      const double dtheta_dd_dtheta = (dnum_dtheta * den - num * dden_dtheta) / (den * den);
      const double dnum_dtd = c * (-2.0 * m_p * l * td * s) / total;
      const double dtheta_dd_dtd = dnum_dtd / den;
      const double dnum_df = -c / total;
      const double dtheta_dd_df = dnum_df / den;

      const double dp_dd_dtheta =
          m_p * l * (td * td * c - dtheta_dd_dtheta * c + theta_dd * s) / total;
      const double dp_dd_dtd = m_p * l * (2.0 * td * s - c * dtheta_dd_dtd) / total;
      const double dp_dd_df = (1.0 - m_p * l * c * dtheta_dd_df) / total;

      a = Eigen::MatrixXd::Zero(4, 4);
      b = Eigen::MatrixXd::Zero(4, 1);
      a(0, 1) = 1.0;
      a(2, 3) = 1.0;
      a(1, 2) = dp_dd_dtheta;
      a(1, 3) = dp_dd_dtd;
      a(3, 2) = dtheta_dd_dtheta;
      a(3, 3) = dtheta_dd_dtd;
      b(1, 0) = dp_dd_df;
      b(3, 0) = dtheta_dd_df;
      return;
    }
    case PlantKind::kQuad2d: {
      const double m = param(params, "m");
      const double i_yy = param(params, "I_yy");
      const double d = param(params, "d");
      const double theta = x(4);
      const double thrust = u(0) + u(1);
      const double s = std::sin(theta);
      const double c = std::cos(theta);
      a = Eigen::MatrixXd::Zero(6, 6);
      b = Eigen::MatrixXd::Zero(6, 2);
      a(0, 1) = 1.0;
      a(2, 3) = 1.0;
      a(4, 5) = 1.0;
      a(1, 4) = c * thrust / m;
      a(3, 4) = -s * thrust / m;
      b(1, 0) = s / m;
      b(1, 1) = s / m;
      b(3, 0) = c / m;
      b(3, 1) = c / m;
      b(5, 0) = -d / i_yy;
      b(5, 1) = d / i_yy;
      return;
    }
  }
  throw ConfigError("plant: unknown kind");
}

Eigen::VectorXd quad_hover_input(double mass, double g) {
  return Eigen::VectorXd::Constant(2, mass * g / 2.0);
}

}  // namespace metampc
