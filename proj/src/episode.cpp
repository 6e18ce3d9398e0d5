#include "metampc/episode.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include "metampc/errors.hpp"
#include "metampc/integrate.hpp"
#include "metampc/rng.hpp"

namespace metampc {

Eigen::VectorXd residual_label(const PlantSpec& plant, const Eigen::VectorXd& x,
                               const Eigen::VectorXd& u) {
  const Eigen::VectorXd gap = eval_true(plant, x, u) - eval_nominal(plant, x, u);
  const auto rows = plant.accel_rows();
  Eigen::VectorXd label(static_cast<int>(rows.size()));
  for (size_t i = 0; i < rows.size(); ++i) label(static_cast<int>(i)) = gap(rows[i]);
  return label;
}

namespace {

Eigen::VectorXd sample_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                           std::mt19937_64& rng) {
  Eigen::VectorXd x(lo.size());
  for (int i = 0; i < lo.size(); ++i) {
    std::uniform_real_distribution<double> u(lo(i), hi(i));
    x(i) = u(rng);
  }
  return x;
}

struct SamplePool {
  std::vector<Eigen::VectorXd> inputs;
  std::vector<Eigen::VectorXd> targets;
};

// One excitation rollout; returns false when the state diverges outright so
// the caller can retry with a fresh seed. Leaving the operating region just
// truncates the rollout.
bool collect_rollout(const PlantTask& task, const ExcitationConfig& exc, const OcpConfig* ocp,
                     const ReferenceSignal* ref, std::uint64_t seed, SamplePool& pool) {
  const PlantSpec& plant = task.plant;
  auto rng = make_rng(seed);
  Eigen::VectorXd x = sample_box(exc.x0_min, exc.x0_max, rng);

  const double dt_c = 1.0 / exc.control_hz;
  const int steps = static_cast<int>(std::llround(exc.duration_s * exc.control_hz));
  const TruePlant true_plant{plant};

  std::optional<MpcController> controller;
  if (plant.input_dim > 0) {
    if (!ocp || !ref) throw ConfigError("episode: actuated plant needs an excitation controller");
    controller.emplace(AugmentedModel(plant), *ocp, *ref);
  }
  const Eigen::VectorXd u_span = plant.u_max - plant.u_min;
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  for (int k = 0; k < steps; ++k) {
    Eigen::VectorXd u(plant.input_dim);
    if (controller) {
      u = controller->step(k * dt_c, x);
      for (int ch = 0; ch < plant.input_dim; ++ch) {
        u(ch) += unit(rng) * exc.dither_frac * u_span(ch);
      }
      u = u.cwiseMax(plant.u_min).cwiseMin(plant.u_max);
    }
    Eigen::VectorXd z(plant.state_dim + plant.input_dim);
    z << x, u;
    pool.inputs.push_back(z);
    pool.targets.push_back(residual_label(plant, x, u));
    try {
      x = integrate_control_period(true_plant, x, u, dt_c, exc.substep_s);
    } catch (const NumericError&) {
      return false;
    }
    if (x.norm() > 1e6) return false;
    if (x.lpNorm<Eigen::Infinity>() > exc.region_bound) break;
  }
  return true;
}

}  // namespace

EpisodeSource::EpisodeSource(PlantTask task, ExcitationConfig excitation, const OcpConfig* ocp,
                             const ReferenceSignal* ref, std::uint64_t seed)
    : task_id_(task.task_id) {
  const PlantSpec& plant = task.plant;
  if (excitation.x0_min.size() != plant.state_dim ||
      excitation.x0_max.size() != plant.state_dim) {
    throw ConfigError("episode: excitation start box must match state dimension");
  }

  SamplePool pool;
  std::uint64_t roll_seed = mix_seed(seed, kTagExcitation, static_cast<std::uint64_t>(task_id_));
  int collected = 0;
  int attempts = 0;
  while (collected < excitation.rollouts) {
    if (++attempts > excitation.rollouts + 20) {
      throw NumericError("episode: excitation kept diverging for task " +
                         std::to_string(task_id_));
    }
    if (collect_rollout(task, excitation, ocp, ref, roll_seed, pool)) ++collected;
    roll_seed = splitmix64(roll_seed);
  }

  const int count = static_cast<int>(pool.inputs.size());
  if (count == 0) throw NumericError("episode: no samples collected");
  pool_inputs_.resize(plant.state_dim + plant.input_dim, count);
  pool_targets_.resize(plant.pos_dim, count);
  for (int i = 0; i < count; ++i) {
    pool_inputs_.col(i) = pool.inputs[i];
    pool_targets_.col(i) = pool.targets[i];
  }
}

EpisodeData EpisodeSource::draw(int k_shot, std::uint64_t seed) const {
  if (k_shot < 1) throw ConfigError("episode: K must be >= 1");
  const int count = pool_size();
  if (count < 2 * k_shot) {
    throw ConfigError("episode: pool of " + std::to_string(count) +
                      " samples cannot supply 2K=" + std::to_string(2 * k_shot));
  }
  std::vector<int> idx(count);
  std::iota(idx.begin(), idx.end(), 0);
  auto rng = make_rng(seed);
  for (int i = 0; i < 2 * k_shot; ++i) {
    std::uniform_int_distribution<int> pick(i, count - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }

  EpisodeData episode;
  episode.task_id = task_id_;
  episode.support.inputs.resize(pool_inputs_.rows(), k_shot);
  episode.support.targets.resize(pool_targets_.rows(), k_shot);
  episode.query.inputs.resize(pool_inputs_.rows(), k_shot);
  episode.query.targets.resize(pool_targets_.rows(), k_shot);
  for (int i = 0; i < k_shot; ++i) {
    episode.support.inputs.col(i) = pool_inputs_.col(idx[i]);
    episode.support.targets.col(i) = pool_targets_.col(idx[i]);
    episode.query.inputs.col(i) = pool_inputs_.col(idx[k_shot + i]);
    episode.query.targets.col(i) = pool_targets_.col(idx[k_shot + i]);
  }
  return episode;
}

EpisodeData build_episode(const PlantTask& task, int k_shot, const ExcitationConfig& excitation,
                          const OcpConfig* ocp, const ReferenceSignal* ref, std::uint64_t seed) {
  EpisodeSource source(task, excitation, ocp, ref, seed);
  return source.draw(k_shot, mix_seed(seed, kTagEpisode, static_cast<std::uint64_t>(task.task_id)));
}

}  // namespace metampc
