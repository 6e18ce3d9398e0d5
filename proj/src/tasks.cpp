#include "metampc/tasks.hpp"

#include <random>

#include "metampc/errors.hpp"
#include "metampc/rng.hpp"

namespace metampc {

TaskProtocol task_protocol_from_string(const std::string& s) {
  if (s == "vdp_grid") return TaskProtocol::kVdpGrid;
  if (s == "scale_range") return TaskProtocol::kScaleRange;
  throw ConfigError("unknown task protocol '" + s + "'");
}

std::string to_string(TaskProtocol p) {
  return p == TaskProtocol::kVdpGrid ? "vdp_grid" : "scale_range";
}

std::vector<PlantTask> sample_tasks(const PlantSpec& spec, TaskProtocol protocol, int count,
                                    double lo, double hi, std::uint64_t seed) {
  validate_spec(spec);
  std::vector<PlantTask> tasks;

  if (protocol == TaskProtocol::kVdpGrid) {
    if (spec.kind != PlantKind::kVanDerPol) {
      throw ConfigError("vdp_grid protocol requires the van_der_pol plant");
    }
    const double mu_nominal = spec.nominal_params.at("mu");
    for (int i = 0; i <= 10; ++i) {
      PlantTask task;
      task.plant = spec;
      task.task_id = i;
      const double mu = i / 10.0;
      task.plant.true_params["mu"] = mu;
      task.scale_factors["mu"] = mu_nominal != 0.0 ? mu / mu_nominal : 0.0;
      tasks.push_back(std::move(task));
    }
    return tasks;
  }

  if (count < 1) throw ConfigError("scale_range needs count >= 1");
  if (!(lo <= hi)) throw ConfigError("scale_range needs lo <= hi");
  const auto& keys = scalable_params(spec.kind);
  for (int i = 0; i < count; ++i) {
    auto rng = make_rng(mix_seed(seed, kTagTask, static_cast<std::uint64_t>(i)));
    std::uniform_real_distribution<double> uniform(lo, hi);
    PlantTask task;
    task.plant = spec;
    task.task_id = i;
    task.plant.true_params = spec.nominal_params;
    for (const auto& key : keys) {
      const double factor = uniform(rng);
      task.scale_factors[key] = factor;
      task.plant.true_params[key] = spec.nominal_params.at(key) * factor;
    }
    tasks.push_back(std::move(task));
  }
  return tasks;
}

}  // namespace metampc
