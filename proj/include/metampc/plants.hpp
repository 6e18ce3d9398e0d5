#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <vector>

namespace metampc {

enum class PlantKind { kVanDerPol, kCartPole, kQuad2d };

PlantKind plant_kind_from_string(const std::string& s);
std::string to_string(PlantKind k);

using ParamMap = std::map<std::string, double>;

// State layouts (position/velocity interleaved, so velocity rows of xdot are
// x[2i+1] and acceleration rows are 2i+1):
//   van_der_pol: [x1, x2]
//   cart_pole:   [p, pdot, theta, thetadot], input [F]
//   quad_2d:     [x, xdot, z, zdot, theta, thetadot], inputs [T1, T2]
struct PlantSpec {
  PlantKind kind = PlantKind::kVanDerPol;
  int state_dim = 2;
  int input_dim = 0;
  int pos_dim = 1;
  ParamMap true_params;
  ParamMap nominal_params;
  Eigen::VectorXd u_min, u_max;

  // Rows of the state derivative that carry accelerations: {1}, {1,3}, {1,3,5}.
  std::vector<int> accel_rows() const;
  // State indices holding velocities, same numbering as accel_rows().
  std::vector<int> velocity_indices() const { return accel_rows(); }
};

// Parameter keys each kind requires.
const std::vector<std::string>& required_params(PlantKind kind);
// Parameters varied by the scale_range task protocol.
const std::vector<std::string>& scalable_params(PlantKind kind);

void validate_spec(const PlantSpec& spec);

PlantSpec make_vdp_spec(double mu_true, double mu_nominal);
PlantSpec make_cartpole_spec(const ParamMap& true_params, const ParamMap& nominal_params,
                             double f_min = -10.0, double f_max = 10.0);
PlantSpec make_quad2d_spec(const ParamMap& true_params, const ParamMap& nominal_params,
                           double t_min = 0.0, double t_max = 0.3);

// Continuous-time derivative under the given parameter set.
Eigen::VectorXd eval_dynamics(PlantKind kind, const ParamMap& params, const Eigen::VectorXd& x,
                              const Eigen::VectorXd& u);
Eigen::VectorXd eval_true(const PlantSpec& spec, const Eigen::VectorXd& x, const Eigen::VectorXd& u);
Eigen::VectorXd eval_nominal(const PlantSpec& spec, const Eigen::VectorXd& x,
                             const Eigen::VectorXd& u);

// Analytic d f/dx and d f/du of eval_dynamics.
void dynamics_jacobians(PlantKind kind, const ParamMap& params, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& u, Eigen::MatrixXd& a, Eigen::MatrixXd& b);

// Total thrust the quad needs to hover, split evenly across the two motors.
Eigen::VectorXd quad_hover_input(double mass, double g);

}  // namespace metampc
