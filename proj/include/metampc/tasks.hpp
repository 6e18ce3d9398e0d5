#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "metampc/plants.hpp"

namespace metampc {

// One member of the training distribution: the base plant with its true
// parameters replaced by nominal parameters scaled per-key.
struct PlantTask {
  PlantSpec plant;
  int task_id = 0;
  ParamMap scale_factors;
};

enum class TaskProtocol { kVdpGrid, kScaleRange };

TaskProtocol task_protocol_from_string(const std::string& s);
std::string to_string(TaskProtocol p);

// vdp_grid ignores count/range and returns the 11 tasks mu in {0.0,...,1.0};
// scale_range draws one multiplier per scalable parameter uniformly in
// [lo, hi] for each of `count` tasks.
std::vector<PlantTask> sample_tasks(const PlantSpec& spec, TaskProtocol protocol, int count,
                                    double lo, double hi, std::uint64_t seed);

}  // namespace metampc
