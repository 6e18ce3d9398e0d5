#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>

#include "metampc/mlp.hpp"
#include "metampc/ocp.hpp"
#include "metampc/tasks.hpp"

namespace metampc {

struct EpisodeData {
  int task_id = 0;
  LabeledSet support;
  LabeledSet query;
};

// Acceleration-row gap between the task's true dynamics and the nominal
// model at one point.
Eigen::VectorXd residual_label(const PlantSpec& plant, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u);

struct ExcitationConfig {
  int rollouts = 3;
  double duration_s = 10.0;
  double control_hz = 50.0;
  double substep_s = 0.002;
  double dither_frac = 0.05;  // uniform dither amplitude relative to the input range
  double region_bound = 10.0;  // rollout truncated once any |state| exceeds this
  Eigen::VectorXd x0_min;
  Eigen::VectorXd x0_max;
};

// Per-task sample pool: the task's true plant is simulated once (autonomous
// plants coast from random starts; actuated plants run a nominal MPC with
// dithered inputs for excitation), and episodes are fresh disjoint draws
// from the pooled points.
class EpisodeSource {
 public:
  EpisodeSource(PlantTask task, ExcitationConfig excitation, const OcpConfig* ocp,
                const ReferenceSignal* ref, std::uint64_t seed);

  EpisodeData draw(int k_shot, std::uint64_t seed) const;

  int pool_size() const { return static_cast<int>(pool_inputs_.cols()); }
  const Eigen::MatrixXd& pool_inputs() const { return pool_inputs_; }
  int task_id() const { return task_id_; }

 private:
  int task_id_ = 0;
  Eigen::MatrixXd pool_inputs_;
  Eigen::MatrixXd pool_targets_;
};

EpisodeData build_episode(const PlantTask& task, int k_shot, const ExcitationConfig& excitation,
                          const OcpConfig* ocp, const ReferenceSignal* ref, std::uint64_t seed);

}  // namespace metampc
