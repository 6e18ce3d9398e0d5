#include "metampc/maml.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "metampc/errors.hpp"
#include "metampc/rng.hpp"

namespace metampc {

void validate_meta_config(const MetaConfig& cfg) {
  if (cfg.inner_lr < 0.0 || cfg.meta_lr <= 0.0) throw ConfigError("meta: learning rates invalid");
  if (cfg.epochs < 1 || cfg.k_shot < 1 || cfg.inner_steps < 1) {
    throw ConfigError("meta: epochs, K and inner_steps must be >= 1");
  }
  if (cfg.episode_refresh < 1) throw ConfigError("meta: episode_refresh must be >= 1");
  if (cfg.second_order && cfg.inner_steps != 1) {
    throw ConfigError("meta: second-order meta-gradient is only defined for inner_steps=1");
  }
}

FlatParams inner_adapt(const MlpModel& arch, const FlatParams& theta, const LabeledSet& support,
                       double inner_lr, int steps, Loss loss) {
  if (steps < 1) throw ConfigError("meta: inner steps must be >= 1");
  MlpModel work = arch;
  FlatParams current = theta;
  for (int s = 0; s < steps; ++s) {
    set_params(work, current);
    const FlatParams grad = mlp_param_gradient(work, support.inputs, support.targets, loss);
    if (!grad.allFinite()) throw NumericError("meta: non-finite inner gradient");
    current -= inner_lr * grad;
  }
  return current;
}

FlatParams meta_gradient(const MlpModel& arch, const FlatParams& theta, const EpisodeData& episode,
                         const MetaConfig& cfg) {
  validate_meta_config(cfg);
  const FlatParams adapted =
      inner_adapt(arch, theta, episode.support, cfg.inner_lr, cfg.inner_steps, cfg.loss);
  MlpModel work = arch;
  set_params(work, adapted);
  const FlatParams grad_query =
      mlp_param_gradient(work, episode.query.inputs, episode.query.targets, cfg.loss);
  if (!cfg.second_order) return grad_query;

  set_params(work, theta);
  const FlatParams hvp = hessian_vector_product(work, episode.support.inputs,
                                                episode.support.targets, cfg.loss, grad_query);
  return grad_query - cfg.inner_lr * hvp;
}

std::pair<FlatParams, std::vector<MetaLogRow>> meta_train(const MlpModel& arch, FlatParams theta0,
                                                          int task_count,
                                                          const EpisodeGenerator& generator,
                                                          const MetaConfig& cfg,
                                                          std::uint64_t seed) {
  validate_meta_config(cfg);
  if (task_count < 1) throw ConfigError("meta: need at least one task");
  const int batch = cfg.task_batch > 0 ? std::min(cfg.task_batch, task_count) : task_count;

  FlatParams theta = theta0;
  MlpModel work = arch;
  std::vector<EpisodeData> episodes(task_count);
  std::vector<MetaLogRow> log;
  log.reserve(cfg.epochs);
  int refresh_round = -1;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const int round = epoch / cfg.episode_refresh;
    if (round != refresh_round) {
      for (int i = 0; i < task_count; ++i) episodes[i] = generator(i, round);
      refresh_round = round;
    }

    std::vector<int> order(task_count);
    std::iota(order.begin(), order.end(), 0);
    if (batch < task_count) {
      auto rng = make_rng(mix_seed(seed, kTagMetaTrain, static_cast<std::uint64_t>(epoch)));
      for (int i = 0; i < batch; ++i) {
        std::uniform_int_distribution<int> pick(i, task_count - 1);
        std::swap(order[i], order[pick(rng)]);
      }
      order.resize(batch);
      std::sort(order.begin(), order.end());
    }

    FlatParams grad_sum = FlatParams::Zero(theta.size());
    double loss_sum = 0.0;
    for (int idx : order) {
      const EpisodeData& ep = episodes[idx];
      grad_sum += meta_gradient(arch, theta, ep, cfg);
      const FlatParams adapted =
          inner_adapt(arch, theta, ep.support, cfg.inner_lr, cfg.inner_steps, cfg.loss);
      set_params(work, adapted);
      loss_sum += mlp_loss(work, ep.query.inputs, ep.query.targets, cfg.loss);
    }
    const FlatParams grad_mean = grad_sum / batch;
    const double loss_mean = loss_sum / batch;
    if (!std::isfinite(loss_mean) || !grad_mean.allFinite()) {
      throw NumericError("meta: non-finite loss or gradient at epoch " + std::to_string(epoch));
    }
    theta -= cfg.meta_lr * grad_mean;

    MetaLogRow row;
    row.epoch = epoch;
    row.mean_query_loss = loss_mean;
    row.grad_norm = grad_mean.norm();
    row.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    log.push_back(row);
  }
  return {theta, log};
}

std::pair<double, double> evaluate_few_shot(const MlpModel& arch, const FlatParams& theta,
                                            const EpisodeData& held_out, double inner_lr,
                                            int steps, Loss loss) {
  MlpModel work = arch;
  set_params(work, theta);
  const double pre = mlp_loss(work, held_out.query.inputs, held_out.query.targets, loss);
  const FlatParams adapted = inner_adapt(arch, theta, held_out.support, inner_lr, steps, loss);
  set_params(work, adapted);
  const double post = mlp_loss(work, held_out.query.inputs, held_out.query.targets, loss);
  return {pre, post};
}

}  // namespace metampc
