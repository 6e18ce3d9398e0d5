#include "metampc/config.hpp"

#include <fstream>

#include <json.hpp>

#include "metampc/errors.hpp"

namespace metampc {

namespace {

using nlohmann::json;

json require(const json& j, const std::string& key, const std::string& where) {
  if (!j.contains(key)) throw ConfigError("config: missing '" + key + "' in " + where);
  return j.at(key);
}

double as_number(const json& j, const std::string& what) {
  if (!j.is_number()) throw ConfigError("config: '" + what + "' must be a number");
  return j.get<double>();
}

int as_int(const json& j, const std::string& what) {
  if (!j.is_number_integer()) throw ConfigError("config: '" + what + "' must be an integer");
  return j.get<int>();
}

Eigen::VectorXd as_vector(const json& j, const std::string& what) {
  if (!j.is_array()) throw ConfigError("config: '" + what + "' must be an array");
  Eigen::VectorXd v(j.size());
  for (size_t i = 0; i < j.size(); ++i) v(static_cast<int>(i)) = as_number(j[i], what);
  return v;
}

ParamMap as_param_map(const json& j, const std::string& what) {
  if (!j.is_object()) throw ConfigError("config: '" + what + "' must be an object");
  ParamMap params;
  for (const auto& [key, value] : j.items()) params[key] = as_number(value, what + "." + key);
  return params;
}

PlantSpec parse_plant(const json& j) {
  const std::string kind_s = require(j, "kind", "plant").get<std::string>();
  const PlantKind kind = plant_kind_from_string(kind_s);
  const ParamMap true_params = as_param_map(require(j, "true_params", "plant"), "true_params");
  const ParamMap nominal_params =
      as_param_map(require(j, "nominal_params", "plant"), "nominal_params");

  PlantSpec spec;
  switch (kind) {
    case PlantKind::kVanDerPol:
      spec = make_vdp_spec(true_params.count("mu") ? true_params.at("mu") : 0.0,
                           nominal_params.count("mu") ? nominal_params.at("mu") : 0.0);
      spec.true_params = true_params;
      spec.nominal_params = nominal_params;
      break;
    case PlantKind::kCartPole: {
      const Eigen::VectorXd lo = as_vector(require(j, "input_min", "plant"), "input_min");
      const Eigen::VectorXd hi = as_vector(require(j, "input_max", "plant"), "input_max");
      if (lo.size() != 1 || hi.size() != 1) throw ConfigError("config: cart_pole has one input");
      spec = make_cartpole_spec(true_params, nominal_params, lo(0), hi(0));
      break;
    }
    case PlantKind::kQuad2d: {
      const Eigen::VectorXd lo = as_vector(require(j, "input_min", "plant"), "input_min");
      const Eigen::VectorXd hi = as_vector(require(j, "input_max", "plant"), "input_max");
      if (lo.size() != 2 || hi.size() != 2) throw ConfigError("config: quad_2d has two inputs");
      if (lo(0) != lo(1) || hi(0) != hi(1)) {
        spec = make_quad2d_spec(true_params, nominal_params, lo(0), hi(0));
        spec.u_min = lo;
        spec.u_max = hi;
      } else {
        spec = make_quad2d_spec(true_params, nominal_params, lo(0), hi(0));
      }
      break;
    }
  }
  validate_spec(spec);
  return spec;
}

ReferenceSignal parse_reference(const json& j, const PlantSpec& plant) {
  const std::string kind_s = require(j, "kind", "reference").get<std::string>();
  const ReferenceKind kind = reference_kind_from_string(kind_s);

  Eigen::VectorXd u_ref;
  const json ju = require(j, "u_ref", "reference");
  if (ju.is_string()) {
    if (ju.get<std::string>() != "hover_nominal") {
      throw ConfigError("config: unknown u_ref keyword '" + ju.get<std::string>() + "'");
    }
    if (plant.kind != PlantKind::kQuad2d) {
      throw ConfigError("config: hover_nominal u_ref is only defined for quad_2d");
    }
    u_ref = quad_hover_input(plant.nominal_params.at("m"), plant.nominal_params.at("g"));
  } else {
    u_ref = as_vector(ju, "u_ref");
  }
  if (u_ref.size() != plant.input_dim) {
    throw ConfigError("config: u_ref length does not match input dimension");
  }

  if (kind == ReferenceKind::kConstant) {
    const Eigen::VectorXd x_ref = as_vector(require(j, "x_ref", "reference"), "x_ref");
    if (x_ref.size() != plant.state_dim) {
      throw ConfigError("config: x_ref length does not match state dimension");
    }
    return make_constant_reference(x_ref, u_ref);
  }
  if (plant.kind != PlantKind::kQuad2d) {
    throw ConfigError("config: circle reference is only defined for quad_2d");
  }
  return make_circle_reference(as_number(require(j, "center_x", "reference"), "center_x"),
                               as_number(require(j, "center_z", "reference"), "center_z"),
                               as_number(require(j, "radius", "reference"), "radius"),
                               as_number(require(j, "period_s", "reference"), "period_s"), u_ref);
}

OcpConfig parse_ocp(const json& j, const PlantSpec& plant) {
  OcpConfig cfg;
  cfg.horizon_s = as_number(require(j, "horizon_s", "ocp"), "horizon_s");
  cfg.steps = as_int(require(j, "steps", "ocp"), "steps");
  cfg.q_diag = as_vector(require(j, "q_diag", "ocp"), "q_diag");
  cfg.r_diag = as_vector(require(j, "r_diag", "ocp"), "r_diag");
  cfg.u_min = plant.u_min;
  cfg.u_max = plant.u_max;
  if (j.contains("sqp_max_iters")) cfg.sqp_max_iters = as_int(j["sqp_max_iters"], "sqp_max_iters");
  if (j.contains("sqp_tol")) cfg.sqp_tol = as_number(j["sqp_tol"], "sqp_tol");
  if (j.contains("reg_lambda")) cfg.reg_lambda = as_number(j["reg_lambda"], "reg_lambda");
  validate_ocp_config(cfg, plant.state_dim, plant.input_dim);
  return cfg;
}

AdaptConfig parse_adapt(const json& j, double control_period_s) {
  AdaptConfig cfg;
  cfg.t_update_s = as_number(require(j, "t_update_s", "adapt"), "t_update_s");
  cfg.epochs = as_int(require(j, "epochs", "adapt"), "epochs");
  cfg.k_batch = as_int(require(j, "k_batch", "adapt"), "k_batch");
  if (j.contains("loss")) cfg.loss = loss_from_string(j["loss"].get<std::string>());
  if (j.contains("optimizer")) {
    cfg.optimizer.kind = optimizer_kind_from_string(j["optimizer"].get<std::string>());
  }
  if (j.contains("learning_rate")) {
    cfg.optimizer.learning_rate = as_number(j["learning_rate"], "learning_rate");
  }
  if (j.contains("buffer_capacity")) cfg.buffer_capacity = as_int(j["buffer_capacity"], "buffer_capacity");
  if (j.contains("smooth_window")) cfg.smooth_window = as_int(j["smooth_window"], "smooth_window");
  if (j.contains("enabled")) cfg.enabled = j["enabled"].get<bool>();
  validate_adapt_config(cfg, control_period_s);
  return cfg;
}

MetaBlock parse_meta(const json& j, const ExperimentConfig& cfg) {
  MetaBlock meta;
  const json ja = require(j, "arch", "meta");
  if (!ja.is_array() || ja.size() < 2) throw ConfigError("config: meta.arch must list layer sizes");
  for (const auto& v : ja) meta.arch.push_back(as_int(v, "arch"));
  if (meta.arch.front() != cfg.plant.state_dim + cfg.plant.input_dim) {
    throw ConfigError("config: meta.arch input width must equal state+input dimension");
  }
  if (meta.arch.back() != cfg.plant.pos_dim) {
    throw ConfigError("config: meta.arch output width must equal acceleration row count");
  }
  if (j.contains("activation")) {
    meta.activation = activation_from_string(j["activation"].get<std::string>());
  }
  meta.train.inner_lr = as_number(require(j, "inner_lr", "meta"), "inner_lr");
  meta.train.meta_lr = as_number(require(j, "meta_lr", "meta"), "meta_lr");
  meta.train.epochs = as_int(require(j, "epochs", "meta"), "epochs");
  meta.train.k_shot = as_int(require(j, "k_shot", "meta"), "k_shot");
  if (j.contains("inner_steps")) meta.train.inner_steps = as_int(j["inner_steps"], "inner_steps");
  if (j.contains("second_order")) meta.train.second_order = j["second_order"].get<bool>();
  if (j.contains("task_batch")) meta.train.task_batch = as_int(j["task_batch"], "task_batch");
  if (j.contains("episode_refresh")) {
    meta.train.episode_refresh = as_int(j["episode_refresh"], "episode_refresh");
  }
  if (j.contains("loss")) meta.train.loss = loss_from_string(j["loss"].get<std::string>());
  if (j.contains("paper_epochs")) meta.paper_epochs = as_int(j["paper_epochs"], "paper_epochs");
  validate_meta_config(meta.train);
  meta.checkpoint = require(j, "checkpoint", "meta").get<std::string>();

  const json jt = require(j, "tasks", "meta");
  meta.tasks.protocol = task_protocol_from_string(require(jt, "protocol", "meta.tasks").get<std::string>());
  if (jt.contains("count")) meta.tasks.count = as_int(jt["count"], "tasks.count");
  if (jt.contains("range")) {
    const Eigen::VectorXd range = as_vector(jt["range"], "tasks.range");
    if (range.size() != 2) throw ConfigError("config: tasks.range must be [lo, hi]");
    meta.tasks.lo = range(0);
    meta.tasks.hi = range(1);
  }

  meta.excitation.x0_min = cfg.x0_min;
  meta.excitation.x0_max = cfg.x0_max;
  meta.excitation.control_hz = cfg.control_hz;
  meta.excitation.substep_s = cfg.substep_s;
  if (j.contains("excitation")) {
    const json je = j["excitation"];
    if (je.contains("rollouts")) meta.excitation.rollouts = as_int(je["rollouts"], "rollouts");
    if (je.contains("duration_s")) meta.excitation.duration_s = as_number(je["duration_s"], "duration_s");
    if (je.contains("dither_frac")) meta.excitation.dither_frac = as_number(je["dither_frac"], "dither_frac");
    if (je.contains("region_bound")) meta.excitation.region_bound = as_number(je["region_bound"], "region_bound");
    if (je.contains("x0_min")) meta.excitation.x0_min = as_vector(je["x0_min"], "excitation.x0_min");
    if (je.contains("x0_max")) meta.excitation.x0_max = as_vector(je["x0_max"], "excitation.x0_max");
  }
  if (meta.excitation.rollouts < 1) throw ConfigError("config: excitation.rollouts must be >= 1");
  return meta;
}

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& s) {
  if (s == "vdp_predict") return ExperimentKind::kVdpPredict;
  if (s == "cartpole_stab") return ExperimentKind::kCartpoleStab;
  if (s == "quad_stab") return ExperimentKind::kQuadStab;
  if (s == "quad_track") return ExperimentKind::kQuadTrack;
  if (s == "meta_train") return ExperimentKind::kMetaTrain;
  throw ConfigError("unknown experiment '" + s + "'");
}

std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::kVdpPredict: return "vdp_predict";
    case ExperimentKind::kCartpoleStab: return "cartpole_stab";
    case ExperimentKind::kQuadStab: return "quad_stab";
    case ExperimentKind::kQuadTrack: return "quad_track";
    case ExperimentKind::kMetaTrain: return "meta_train";
  }
  return "?";
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse failure in '" + path + "': " + e.what());
  }

  try {
    ExperimentConfig cfg;
    cfg.experiment = experiment_kind_from_string(require(j, "experiment", "config").get<std::string>());
    cfg.output_dir = require(j, "output_dir", "config").get<std::string>();
    cfg.seed = require(j, "seed", "config").get<std::uint64_t>();
    cfg.trials = as_int(require(j, "trials", "config"), "trials");
    cfg.paper_trials = j.contains("paper_trials") ? as_int(j["paper_trials"], "paper_trials") : cfg.trials;
    cfg.duration_s = as_number(require(j, "duration_s", "config"), "duration_s");
    cfg.control_hz = as_number(require(j, "control_hz", "config"), "control_hz");
    if (j.contains("substep_s")) cfg.substep_s = as_number(j["substep_s"], "substep_s");
    if (j.contains("noise_sigma")) cfg.noise_sigma = as_number(j["noise_sigma"], "noise_sigma");
    if (cfg.trials < 1 || cfg.paper_trials < 1) throw ConfigError("config: trials must be >= 1");
    if (cfg.duration_s <= 0.0 || cfg.control_hz <= 0.0 || cfg.substep_s <= 0.0) {
      throw ConfigError("config: timing values must be positive");
    }
    if (cfg.noise_sigma < 0.0) throw ConfigError("config: noise_sigma must be nonnegative");

    cfg.plant = parse_plant(require(j, "plant", "config"));

    if (j.contains("x0")) {
      cfg.x0_exact = as_vector(j["x0"], "x0");
      if (cfg.x0_exact->size() != cfg.plant.state_dim) {
        throw ConfigError("config: x0 length does not match state dimension");
      }
      cfg.x0_min = *cfg.x0_exact;
      cfg.x0_max = *cfg.x0_exact;
    } else {
      cfg.x0_min = as_vector(require(j, "x0_min", "config"), "x0_min");
      cfg.x0_max = as_vector(require(j, "x0_max", "config"), "x0_max");
      if (cfg.x0_min.size() != cfg.plant.state_dim || cfg.x0_max.size() != cfg.plant.state_dim) {
        throw ConfigError("config: x0 box must match state dimension");
      }
      if (((cfg.x0_max - cfg.x0_min).array() < 0.0).any()) {
        throw ConfigError("config: x0 box out of order");
      }
    }

    const json jc = require(j, "controllers", "config");
    if (!jc.is_array() || jc.empty()) throw ConfigError("config: controllers must be a nonempty array");
    for (const auto& v : jc) cfg.controllers.push_back(controller_kind_from_string(v.get<std::string>()));

    cfg.reference = parse_reference(require(j, "reference", "config"), cfg.plant);

    if (cfg.plant.input_dim > 0) {
      cfg.ocp = parse_ocp(require(j, "ocp", "config"), cfg.plant);
    } else if (j.contains("ocp")) {
      throw ConfigError("config: ocp block given for an unactuated plant");
    }

    cfg.adapt = parse_adapt(require(j, "adapt", "config"), 1.0 / cfg.control_hz);
    cfg.meta = parse_meta(require(j, "meta", "config"), cfg);
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError("config structure failure in '" + path + "': " + e.what());
  }
}

void apply_paper_scale(ExperimentConfig& cfg) {
  cfg.trials = cfg.paper_trials;
  cfg.meta.train.epochs = cfg.meta.paper_epochs;
}

}  // namespace metampc
