#pragma once

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "metampc/episode.hpp"
#include "metampc/mlp.hpp"

namespace metampc {

struct MetaConfig {
  double inner_lr = 1e-2;
  double meta_lr = 1e-3;
  int epochs = 2000;
  int k_shot = 50;
  int inner_steps = 1;
  bool second_order = false;
  int task_batch = 0;        // 0 = every task each epoch
  int episode_refresh = 50;  // epochs between fresh episode draws
  Loss loss = Loss::kMse;
};

void validate_meta_config(const MetaConfig& cfg);

// theta' after `steps` plain gradient-descent updates on the support set.
FlatParams inner_adapt(const MlpModel& arch, const FlatParams& theta, const LabeledSet& support,
                       double inner_lr, int steps, Loss loss);

// First-order variant returns the query gradient at the adapted parameters;
// the second-order variant (inner_steps must be 1) multiplies through the
// inner step, returning (I - alpha*H_support(theta)) * grad_query(theta').
FlatParams meta_gradient(const MlpModel& arch, const FlatParams& theta, const EpisodeData& episode,
                         const MetaConfig& cfg);

struct MetaLogRow {
  int epoch = 0;
  double mean_query_loss = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

using EpisodeGenerator = std::function<EpisodeData(int task_index, int refresh_round)>;

std::pair<FlatParams, std::vector<MetaLogRow>> meta_train(const MlpModel& arch, FlatParams theta0,
                                                          int task_count,
                                                          const EpisodeGenerator& generator,
                                                          const MetaConfig& cfg,
                                                          std::uint64_t seed);

// Query loss before and after adapting theta on the held-out support set.
std::pair<double, double> evaluate_few_shot(const MlpModel& arch, const FlatParams& theta,
                                            const EpisodeData& held_out, double inner_lr,
                                            int steps, Loss loss);

}  // namespace metampc
