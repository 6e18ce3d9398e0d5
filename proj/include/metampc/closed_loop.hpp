#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metampc/adapt.hpp"
#include "metampc/augmented.hpp"
#include "metampc/ocp.hpp"
#include "metampc/tasks.hpp"

namespace metampc {

enum class ControllerKind { kNominal, kResidualMlp, kMetaMlp };

ControllerKind controller_kind_from_string(const std::string& s);
std::string to_string(ControllerKind k);

struct TraceRow {
  double t = 0.0;
  Eigen::VectorXd x_true;
  Eigen::VectorXd x_meas;
  Eigen::VectorXd u;
  Eigen::VectorXd x_ref;
  int solver_iters = 0;
  double solver_cost = 0.0;
  double solve_ms = 0.0;
  int finetune_event = 0;
  double ft_loss_before = 0.0;
  double ft_loss_after = 0.0;
  double ft_ms = 0.0;
};

struct RolloutTrace {
  std::vector<TraceRow> rows;
  Eigen::VectorXd final_x_true;
  Eigen::VectorXd final_x_meas;
  bool diverged = false;
  int dropped_samples = 0;
  int skipped_finetunes = 0;
  int rejected_finetunes = 0;
};

// Open-loop simulation of the true plant under a fixed input schedule,
// recording noiseless and noisy measured states at every control instant.
RolloutTrace simulate_true(const PlantSpec& spec, const Eigen::VectorXd& x0,
                           const std::vector<Eigen::VectorXd>& controls, double control_hz,
                           double substep_s, double noise_sigma, std::uint64_t seed);

struct ClosedLoopConfig {
  double duration_s = 10.0;
  double control_hz = 50.0;
  double substep_s = 0.002;
  double noise_sigma = 0.0;
};

// Full sense -> learn -> act loop: measure with noise, harvest a residual
// sample from the previous period, fine-tune and swap the model at T_update
// boundaries, then apply the receding-horizon input to the true plant.
RolloutTrace run_closed_loop(const PlantTask& task, ControllerKind kind,
                             std::optional<MlpModel> residual0, const OcpConfig& ocp,
                             const AdaptConfig& adapt, const ReferenceSignal& ref,
                             const Eigen::VectorXd& x0, const ClosedLoopConfig& sim,
                             std::uint64_t seed);

// Rolls the prediction model forward from x_start for `steps` RK4 steps of
// size dt. controls may be empty for autonomous plants, else (m x steps).
Eigen::MatrixXd predict_open_loop(const AugmentedModel& model, const Eigen::VectorXd& x_start,
                                  int steps, double dt, const Eigen::MatrixXd& controls);

void write_trace_csv(const RolloutTrace& trace, int state_dim, int input_dim,
                     const std::string& path);
RolloutTrace read_trace_csv(const std::string& path, int& state_dim, int& input_dim);

std::string format_double(double v);

}  // namespace metampc
