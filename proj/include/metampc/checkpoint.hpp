#pragma once

#include <string>

#include "metampc/mlp.hpp"

namespace metampc {

// JSON checkpoint {layer_sizes, activation, weights, biases}; weights are
// nested row-major arrays. Doubles survive a save/load round trip exactly.
void save_checkpoint(const MlpModel& model, const std::string& path);
MlpModel load_checkpoint(const std::string& path);

}  // namespace metampc
