#include "metampc/adapt.hpp"

#include <chrono>
#include <cmath>
#include <utility>

#include "metampc/errors.hpp"

namespace metampc {

void validate_adapt_config(const AdaptConfig& cfg, double control_period_s) {
  if (cfg.t_update_s <= 0.0) throw ConfigError("adapt: T_update must be positive");
  const double ratio = cfg.t_update_s / control_period_s;
  if (std::abs(ratio - std::round(ratio)) > 1e-6) {
    throw ConfigError("adapt: T_update must be a multiple of the control period");
  }
  if (cfg.epochs < 1 || cfg.k_batch < 1) throw ConfigError("adapt: epochs and K must be >= 1");
  if (cfg.k_batch > cfg.buffer_capacity) throw ConfigError("adapt: K exceeds buffer capacity");
  if (cfg.smooth_window < 1) throw ConfigError("adapt: smooth window must be >= 1");
}

SampleBuffer::SampleBuffer(int capacity) : capacity_(capacity) {
  if (capacity < 1) throw ConfigError("adapt: buffer capacity must be >= 1");
}

void SampleBuffer::push(ResidualSample sample) {
  if (!sample.input.allFinite() || !sample.label.allFinite()) {
    ++dropped_;
    return;
  }
  samples_.push_back(std::move(sample));
  if (static_cast<int>(samples_.size()) > capacity_) samples_.pop_front();
}

LabeledSet SampleBuffer::latest(int k) const {
  if (k < 1 || k > size()) throw ConfigError("adapt: requested more samples than buffered");
  LabeledSet set;
  const int start = size() - k;
  set.inputs.resize(samples_.front().input.size(), k);
  set.targets.resize(samples_.front().label.size(), k);
  for (int i = 0; i < k; ++i) {
    set.inputs.col(i) = samples_[start + i].input;
    set.targets.col(i) = samples_[start + i].label;
  }
  return set;
}

std::optional<ResidualSample> harvest_sample(const PlantSpec& plant,
                                             const Eigen::VectorXd& x_prev_meas,
                                             const Eigen::VectorXd& u_prev,
                                             const Eigen::VectorXd& x_curr_meas, double dt_c,
                                             double t) {
  const auto vel_idx = plant.velocity_indices();
  const Eigen::VectorXd nominal = eval_nominal(plant, x_prev_meas, u_prev);
  Eigen::VectorXd label(static_cast<int>(vel_idx.size()));
  for (size_t i = 0; i < vel_idx.size(); ++i) {
    const int row = vel_idx[i];
    label(static_cast<int>(i)) = (x_curr_meas(row) - x_prev_meas(row)) / dt_c - nominal(row);
  }
  ResidualSample sample;
  sample.input.resize(plant.state_dim + plant.input_dim);
  sample.input << x_prev_meas, u_prev;
  sample.label = std::move(label);
  sample.t = t;
  if (!sample.input.allFinite() || !sample.label.allFinite()) return std::nullopt;
  return sample;
}

FineTuneResult fine_tune(const MlpModel& model, const SampleBuffer& buffer,
                         const AdaptConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  if (buffer.size() < cfg.k_batch) throw ConfigError("adapt: buffer has fewer than K samples");
  const LabeledSet batch = buffer.latest(cfg.k_batch);

  FineTuneResult result;
  result.loss_before = mlp_loss(model, batch.inputs, batch.targets, cfg.loss);

  MlpModel work = model;
  FlatParams theta = flatten_params(work);
  Optimizer opt(cfg.optimizer, theta.size());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const FlatParams grad = mlp_param_gradient(work, batch.inputs, batch.targets, cfg.loss);
    theta = opt.step(theta, grad);
    set_params(work, theta);
  }
  result.loss_after = mlp_loss(work, batch.inputs, batch.targets, cfg.loss);

  if (!std::isfinite(result.loss_after) || result.loss_after > 10.0 * result.loss_before) {
    result.model = model;
    result.rejected = true;
  } else {
    result.model = std::move(work);
  }
  result.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

}  // namespace metampc
