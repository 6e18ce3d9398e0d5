#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "metampc/adapt.hpp"
#include "metampc/closed_loop.hpp"
#include "metampc/episode.hpp"
#include "metampc/maml.hpp"
#include "metampc/ocp.hpp"
#include "metampc/plants.hpp"
#include "metampc/reference.hpp"
#include "metampc/tasks.hpp"

namespace metampc {

enum class ExperimentKind { kVdpPredict, kCartpoleStab, kQuadStab, kQuadTrack, kMetaTrain };

ExperimentKind experiment_kind_from_string(const std::string& s);
std::string to_string(ExperimentKind k);

struct TaskBlock {
  TaskProtocol protocol = TaskProtocol::kScaleRange;
  int count = 1;
  double lo = 1.0;
  double hi = 1.0;
};

struct MetaBlock {
  std::vector<int> arch;
  Activation activation = Activation::kTanh;
  MetaConfig train;
  int paper_epochs = 20000;
  std::string checkpoint;
  TaskBlock tasks;
  ExcitationConfig excitation;
};

struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::kVdpPredict;
  std::string output_dir;
  std::uint64_t seed = 0;
  int trials = 1;
  int paper_trials = 1;
  double duration_s = 10.0;
  double control_hz = 50.0;
  double substep_s = 0.002;
  double noise_sigma = 0.0;
  std::vector<ControllerKind> controllers;
  PlantSpec plant;
  std::optional<Eigen::VectorXd> x0_exact;
  Eigen::VectorXd x0_min;
  Eigen::VectorXd x0_max;
  ReferenceSignal reference;
  std::optional<OcpConfig> ocp;
  AdaptConfig adapt;
  MetaBlock meta;
};

ExperimentConfig load_config(const std::string& path);

// Raises trial count and meta-training epochs to the full-scale values.
void apply_paper_scale(ExperimentConfig& cfg);

}  // namespace metampc
