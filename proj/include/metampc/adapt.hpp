#pragma once

#include <Eigen/Dense>
#include <deque>
#include <optional>

#include "metampc/mlp.hpp"
#include "metampc/optim.hpp"
#include "metampc/plants.hpp"

namespace metampc {

struct ResidualSample {
  Eigen::VectorXd input;  // [x;u] at step k-1
  Eigen::VectorXd label;  // measured acceleration minus nominal prediction at k-1
  double t = 0.0;
};

struct AdaptConfig {
  double t_update_s = 0.2;
  int epochs = 20;
  int k_batch = 20;
  Loss loss = Loss::kMae;
  OptimizerConfig optimizer{OptimizerKind::kAdam, 1e-3};
  int buffer_capacity = 256;
  int smooth_window = 1;  // moving-average width over velocity differences, 1 = off
  bool enabled = true;
};

void validate_adapt_config(const AdaptConfig& cfg, double control_period_s);

class SampleBuffer {
 public:
  explicit SampleBuffer(int capacity);

  void push(ResidualSample sample);
  int size() const { return static_cast<int>(samples_.size()); }
  int dropped() const { return dropped_; }

  // The k most recent samples, oldest first, as batch matrices.
  LabeledSet latest(int k) const;

 private:
  int capacity_;
  int dropped_ = 0;
  std::deque<ResidualSample> samples_;
};

// Backward-difference acceleration label paired with the state/input it was
// produced under. Returns nullopt when the difference is non-finite.
std::optional<ResidualSample> harvest_sample(const PlantSpec& plant,
                                             const Eigen::VectorXd& x_prev_meas,
                                             const Eigen::VectorXd& u_prev,
                                             const Eigen::VectorXd& x_curr_meas, double dt_c,
                                             double t);

struct FineTuneResult {
  MlpModel model;
  double loss_before = 0.0;
  double loss_after = 0.0;
  bool rejected = false;
  double wall_ms = 0.0;
};

// Full-batch optimizer passes over the K most recent samples; the caller's
// model is never mutated. An update whose final loss exceeds 10x the initial
// loss is rejected and the original parameters returned.
FineTuneResult fine_tune(const MlpModel& model, const SampleBuffer& buffer,
                         const AdaptConfig& cfg);

}  // namespace metampc
