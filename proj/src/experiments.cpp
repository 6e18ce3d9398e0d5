#include "metampc/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "metampc/adapt.hpp"
#include "metampc/checkpoint.hpp"
#include "metampc/closed_loop.hpp"
#include "metampc/errors.hpp"
#include "metampc/maml.hpp"
#include "metampc/rng.hpp"
#include "metampc/svg.hpp"

namespace metampc {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr const char* kWindowsHeader =
    "kind,window_t,sse,n_points,rmse_window,ft_loss_before,ft_loss_after,ft_ms,pred_ms";

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

void write_json_file(const std::string& path, const json& j) {
  const fs::path p(path);
  if (p.has_parent_path()) ensure_dir(p.parent_path().string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
}

json num_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == ',') {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

void check_csv_header(const std::string& file, const std::string& got,
                      const std::string& expected) {
  const auto g = split_csv(got);
  const auto e = split_csv(expected);
  for (std::size_t i = 0; i < std::min(g.size(), e.size()); ++i) {
    if (g[i] != e[i]) {
      throw ConfigError(file + ": column " + std::to_string(i) + " is '" + g[i] +
                        "', expected '" + e[i] + "'");
    }
  }
  if (g.size() != e.size()) {
    throw ConfigError(file + ": has " + std::to_string(g.size()) + " columns, expected " +
                      std::to_string(e.size()));
  }
}

std::string trace_header_for(int state_dim, int input_dim) {
  std::ostringstream h;
  h << "t";
  for (int i = 0; i < state_dim; ++i) h << ",x_true" << i;
  for (int i = 0; i < state_dim; ++i) h << ",x_meas" << i;
  for (int i = 0; i < input_dim; ++i) h << ",u" << i;
  for (int i = 0; i < state_dim; ++i) h << ",x_ref" << i;
  h << ",solver_iters,solver_cost,solve_ms,finetune_event,ft_loss_before,ft_loss_after,ft_ms";
  return h.str();
}

double parse_num(const std::string& file, const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || (end && *end != '\0')) {
    throw ConfigError(file + ": cannot parse numeric field '" + s + "'");
  }
  return v;
}

struct WindowRow {
  ControllerKind kind = ControllerKind::kNominal;
  double window_t = 0.0;
  double sse = 0.0;
  int n_points = 0;
  double rmse_window = 0.0;
  double ft_loss_before = 0.0;
  double ft_loss_after = 0.0;
  double ft_ms = 0.0;
  double pred_ms = 0.0;
};

std::vector<WindowRow> read_windows_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  check_csv_header(path, line, kWindowsHeader);
  std::vector<WindowRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 9) {
      throw ConfigError(path + ": row " + std::to_string(rows.size() + 1) + " has " +
                        std::to_string(f.size()) + " fields, expected 9");
    }
    WindowRow r;
    r.kind = controller_kind_from_string(f[0]);
    r.window_t = parse_num(path, f[1]);
    r.sse = parse_num(path, f[2]);
    r.n_points = static_cast<int>(parse_num(path, f[3]));
    r.rmse_window = parse_num(path, f[4]);
    r.ft_loss_before = parse_num(path, f[5]);
    r.ft_loss_after = parse_num(path, f[6]);
    r.ft_ms = parse_num(path, f[7]);
    r.pred_ms = parse_num(path, f[8]);
    rows.push_back(r);
  }
  return rows;
}

RolloutTrace load_trace(const std::string& dir, const std::string& file, int state_dim,
                        int input_dim) {
  const std::string path = dir + "/" + file;
  {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
    check_csv_header(path, line, trace_header_for(state_dim, input_dim));
  }
  int n = 0;
  int m = 0;
  RolloutTrace trace = read_trace_csv(path, n, m);
  if (n != state_dim || m != input_dim) {
    throw ConfigError(path + ": dims " + std::to_string(n) + "/" + std::to_string(m) +
                      " do not match manifest " + std::to_string(state_dim) + "/" +
                      std::to_string(input_dim));
  }
  return trace;
}

std::string kind_color(ControllerKind k) {
  switch (k) {
    case ControllerKind::kNominal: return "#d62728";
    case ControllerKind::kResidualMlp: return "#e0a42b";
    case ControllerKind::kMetaMlp: return "#1f77b4";
  }
  return "#555555";
}

Eigen::VectorXd sample_box(const Eigen::VectorXd& lo, const Eigen::VectorXd& hi,
                           std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Eigen::VectorXd x(lo.size());
  for (Eigen::Index i = 0; i < lo.size(); ++i) x(i) = lo(i) + (hi(i) - lo(i)) * unit(rng);
  return x;
}

Eigen::VectorXd trial_x0(const ExperimentConfig& cfg, int trial) {
  if (cfg.x0_exact) return *cfg.x0_exact;
  auto rng = make_rng(mix_seed(cfg.seed, kTagInitialState, static_cast<std::uint64_t>(trial)));
  return sample_box(cfg.x0_min, cfg.x0_max, rng);
}

bool has_kind(const ExperimentConfig& cfg, ControllerKind k) {
  return std::find(cfg.controllers.begin(), cfg.controllers.end(), k) != cfg.controllers.end();
}

MlpModel load_residual_checkpoint(const ExperimentConfig& cfg) {
  if (cfg.meta.checkpoint.empty()) {
    throw ConfigError("meta_mlp controller requires meta.checkpoint");
  }
  MlpModel model = load_checkpoint(cfg.meta.checkpoint);
  const int want_in = cfg.plant.state_dim + cfg.plant.input_dim;
  if (model.input_dim() != want_in || model.output_dim() != cfg.plant.pos_dim) {
    throw ConfigError("checkpoint " + cfg.meta.checkpoint + " has dims " +
                      std::to_string(model.input_dim()) + "->" +
                      std::to_string(model.output_dim()) + ", plant needs " +
                      std::to_string(want_in) + "->" + std::to_string(cfg.plant.pos_dim));
  }
  return model;
}

MlpModel fresh_residual(const ExperimentConfig& cfg, int trial) {
  if (cfg.meta.arch.empty()) {
    throw ConfigError("residual_mlp controller requires meta.arch");
  }
  return mlp_init(cfg.meta.arch, cfg.meta.activation,
                  mix_seed(cfg.seed, kTagInit, static_cast<std::uint64_t>(trial)));
}

json reference_json(const ReferenceSignal& ref) {
  json j;
  j["kind"] = to_string(ref.kind);
  if (ref.kind == ReferenceKind::kCircle) {
    j["center_x"] = ref.center_x;
    j["center_z"] = ref.center_z;
    j["radius"] = ref.radius;
    j["period_s"] = ref.period_s;
  } else {
    j["x_const"] = std::vector<double>(ref.x_const.data(), ref.x_const.data() + ref.x_const.size());
  }
  return j;
}

json definitions_for(const ExperimentConfig& cfg) {
  json d;
  switch (cfg.experiment) {
    case ExperimentKind::kVdpPredict:
      d["window_s"] = cfg.adapt.t_update_s;
      d["horizon_s"] = cfg.adapt.t_update_s;
      d["rmse"] =
          "per trial: sqrt(sum of squared prediction errors / (points * state_dim)) pooled "
          "over all windows";
      break;
    case ExperimentKind::kCartpoleStab:
      d["position_band_m"] = 0.1;
      d["velocity_band"] = 0.1;
      d["angle_band_rad"] = 0.05;
      d["angle_rate_band"] = 0.1;
      d["success"] =
          "some t* exists with |p|<=0.1, |pdot|<=0.1, |theta|<=0.05, |thetadot|<=0.1 for all "
          "t>=t* through the end of the run";
      d["settle_time"] = "earliest such t*";
      break;
    case ExperimentKind::kQuadStab:
      d["settle_radius_m"] = 0.05;
      d["within_s"] = 4.0;
      d["steady_state_window_s"] = 1.0;
      d["bin_s"] = 0.2;
      d["error"] = "sqrt((x-x_ref)^2+(z-z_ref)^2) of the true state";
      break;
    case ExperimentKind::kQuadTrack:
      d["bin_s"] = 0.2;
      d["early_window_s"] = json::array({0.0, 5.0});
      d["late_window_s"] = json::array({5.0, 15.0});
      d["error"] = "sqrt((x-x_ref)^2+(z-z_ref)^2) of the true state";
      break;
    case ExperimentKind::kMetaTrain:
      break;
  }
  return d;
}

double elapsed_ms(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

// ---- run: vdp open-loop prediction benchmark ----

void run_vdp_predict_impl(const ExperimentConfig& cfg) {
  ensure_dir(cfg.output_dir);
  const PlantSpec& plant = cfg.plant;
  const int n = plant.state_dim;
  const double dt_c = 1.0 / cfg.control_hz;
  const int steps = static_cast<int>(std::llround(cfg.duration_s * cfg.control_hz));
  validate_adapt_config(cfg.adapt, dt_c);
  const int win = static_cast<int>(std::llround(cfg.adapt.t_update_s * cfg.control_hz));

  std::optional<MlpModel> meta_model;
  if (has_kind(cfg, ControllerKind::kMetaMlp)) meta_model = load_residual_checkpoint(cfg);
  if (has_kind(cfg, ControllerKind::kResidualMlp) && cfg.meta.arch.empty()) {
    throw ConfigError("residual_mlp controller requires meta.arch");
  }

  std::vector<std::string> rollout_files;
  std::vector<std::string> window_files;
  json pred_files = json::object();

  for (int trial = 0; trial < cfg.trials; ++trial) {
    const std::uint64_t trial_seed =
        mix_seed(cfg.seed, kTagTrial, static_cast<std::uint64_t>(trial));
    const Eigen::VectorXd x0 = trial_x0(cfg, trial);
    const std::vector<Eigen::VectorXd> controls(steps, Eigen::VectorXd(0));
    const RolloutTrace trace = simulate_true(plant, x0, controls, cfg.control_hz, cfg.substep_s,
                                             cfg.noise_sigma, trial_seed);
    if (static_cast<int>(trace.rows.size()) < steps) {
      throw NumericError("free rollout diverged at trial " + std::to_string(trial));
    }
    char name[64];
    std::snprintf(name, sizeof(name), "rollout_trial%02d.csv", trial);
    write_trace_csv(trace, n, 0, cfg.output_dir + "/" + name);
    rollout_files.push_back(name);

    std::map<ControllerKind, AugmentedModel> models;
    for (ControllerKind kind : cfg.controllers) {
      auto it = models.emplace(kind, AugmentedModel(plant)).first;
      if (kind == ControllerKind::kResidualMlp) it->second.set_residual(fresh_residual(cfg, trial));
      if (kind == ControllerKind::kMetaMlp) it->second.set_residual(*meta_model);
    }

    SampleBuffer buffer(cfg.adapt.buffer_capacity);
    std::ostringstream wout;
    wout << kWindowsHeader << "\n";
    std::map<ControllerKind, std::ostringstream> pred_out;
    if (trial == 0) {
      for (ControllerKind kind : cfg.controllers) {
        auto& po = pred_out[kind];
        po << "window_t,t";
        for (int i = 0; i < n; ++i) po << ",x_pred" << i;
        po << "\n";
      }
    }

    for (int k = 1; k < steps; ++k) {
      const TraceRow& prev = trace.rows[k - 1];
      const TraceRow& curr = trace.rows[k];
      auto sample = harvest_sample(plant, prev.x_meas, prev.u, curr.x_meas, dt_c, curr.t);
      if (sample) buffer.push(std::move(*sample));
      if (k % win != 0 || k + win > steps) continue;
      if (buffer.size() < cfg.adapt.k_batch) continue;
      const double window_t = curr.t;
      for (ControllerKind kind : cfg.controllers) {
        AugmentedModel& model = models.at(kind);
        double ft_before = 0.0;
        double ft_after = 0.0;
        double ft_ms = 0.0;
        if (kind != ControllerKind::kNominal && cfg.adapt.enabled) {
          const FineTuneResult ft = fine_tune(model.residual(), buffer, cfg.adapt);
          ft_before = ft.loss_before;
          ft_after = ft.loss_after;
          ft_ms = ft.wall_ms;
          if (!ft.rejected) model.set_residual(ft.model);
        }
        const auto p0 = std::chrono::steady_clock::now();
        const Eigen::MatrixXd pred =
            predict_open_loop(model, curr.x_meas, win, dt_c, Eigen::MatrixXd());
        const double pred_ms = elapsed_ms(p0);
        double sse = 0.0;
        for (int j = 1; j <= win; ++j) {
          const Eigen::VectorXd& x_true =
              (k + j < steps) ? trace.rows[k + j].x_true : trace.final_x_true;
          sse += (pred.col(j) - x_true).squaredNorm();
        }
        const double rmse_w = std::sqrt(sse / (static_cast<double>(win) * n));
        wout << to_string(kind) << ',' << format_double(window_t) << ',' << format_double(sse)
             << ',' << win << ',' << format_double(rmse_w) << ',' << format_double(ft_before)
             << ',' << format_double(ft_after) << ',' << format_double(ft_ms) << ','
             << format_double(pred_ms) << "\n";
        if (trial == 0) {
          auto& po = pred_out.at(kind);
          for (int j = 0; j <= win; ++j) {
            po << format_double(window_t) << ',' << format_double(window_t + j * dt_c);
            for (int i = 0; i < n; ++i) po << ',' << format_double(pred(i, j));
            po << "\n";
          }
        }
      }
    }

    std::snprintf(name, sizeof(name), "windows_trial%02d.csv", trial);
    {
      std::ofstream out(cfg.output_dir + "/" + name, std::ios::binary);
      if (!out) throw ConfigError("cannot open " + cfg.output_dir + "/" + name + " for writing");
      out << wout.str();
    }
    window_files.push_back(name);
    if (trial == 0) {
      for (auto& [kind, po] : pred_out) {
        std::snprintf(name, sizeof(name), "pred_trial00_%s.csv", to_string(kind).c_str());
        std::ofstream out(cfg.output_dir + "/" + name, std::ios::binary);
        if (!out) throw ConfigError("cannot open " + cfg.output_dir + "/" + name + " for writing");
        out << po.str();
        pred_files[to_string(kind)] = name;
      }
    }
    std::printf("[run] trial %d/%d done\n", trial + 1, cfg.trials);
    std::fflush(stdout);
  }

  json manifest;
  manifest["experiment"] = to_string(cfg.experiment);
  manifest["seed"] = cfg.seed;
  manifest["trials"] = cfg.trials;
  manifest["control_hz"] = cfg.control_hz;
  manifest["duration_s"] = cfg.duration_s;
  manifest["substep_s"] = cfg.substep_s;
  manifest["noise_sigma"] = cfg.noise_sigma;
  manifest["state_dim"] = n;
  manifest["input_dim"] = 0;
  json kinds = json::array();
  for (ControllerKind kind : cfg.controllers) kinds.push_back(to_string(kind));
  manifest["controllers"] = kinds;
  manifest["rollouts"] = rollout_files;
  manifest["windows"] = window_files;
  manifest["predictions"] = pred_files;
  manifest["window_steps"] = win;
  manifest["reference"] = reference_json(cfg.reference);
  manifest["definitions"] = definitions_for(cfg);
  manifest["reference_timings"] = reference_timings_metadata();
  write_json_file(cfg.output_dir + "/manifest.json", manifest);
}

// ---- run: closed-loop experiments ----

void run_closed_loop_trials(const ExperimentConfig& cfg) {
  ensure_dir(cfg.output_dir);
  if (!cfg.ocp) throw ConfigError("experiment requires an ocp block");
  const int n = cfg.plant.state_dim;
  const int m = cfg.plant.input_dim;

  std::optional<MlpModel> meta_model;
  if (has_kind(cfg, ControllerKind::kMetaMlp)) meta_model = load_residual_checkpoint(cfg);

  PlantTask task;
  task.plant = cfg.plant;
  task.task_id = 0;

  const ClosedLoopConfig sim{cfg.duration_s, cfg.control_hz, cfg.substep_s, cfg.noise_sigma};

  json traces = json::object();
  for (ControllerKind kind : cfg.controllers) traces[to_string(kind)] = json::array();

  for (int trial = 0; trial < cfg.trials; ++trial) {
    const Eigen::VectorXd x0 = trial_x0(cfg, trial);
    for (ControllerKind kind : cfg.controllers) {
      std::optional<MlpModel> residual0;
      if (kind == ControllerKind::kResidualMlp) residual0 = fresh_residual(cfg, trial);
      if (kind == ControllerKind::kMetaMlp) residual0 = *meta_model;
      const RolloutTrace trace =
          run_closed_loop(task, kind, residual0, *cfg.ocp, cfg.adapt, cfg.reference, x0, sim,
                          mix_seed(cfg.seed, kTagTrial, static_cast<std::uint64_t>(trial)));
      char name[64];
      std::snprintf(name, sizeof(name), "trial%02d_%s.csv", trial, to_string(kind).c_str());
      write_trace_csv(trace, n, m, cfg.output_dir + "/" + name);
      traces[to_string(kind)].push_back(name);
      std::printf("[run] trial %d/%d %s rows=%zu%s\n", trial + 1, cfg.trials,
                  to_string(kind).c_str(), trace.rows.size(),
                  trace.diverged ? " (diverged)" : "");
      std::fflush(stdout);
    }
  }

  json manifest;
  manifest["experiment"] = to_string(cfg.experiment);
  manifest["seed"] = cfg.seed;
  manifest["trials"] = cfg.trials;
  manifest["control_hz"] = cfg.control_hz;
  manifest["duration_s"] = cfg.duration_s;
  manifest["substep_s"] = cfg.substep_s;
  manifest["noise_sigma"] = cfg.noise_sigma;
  manifest["state_dim"] = n;
  manifest["input_dim"] = m;
  json kinds = json::array();
  for (ControllerKind kind : cfg.controllers) kinds.push_back(to_string(kind));
  manifest["controllers"] = kinds;
  manifest["traces"] = traces;
  manifest["reference"] = reference_json(cfg.reference);
  manifest["definitions"] = definitions_for(cfg);
  manifest["reference_timings"] = reference_timings_metadata();
  write_json_file(cfg.output_dir + "/manifest.json", manifest);
}

// ---- aggregate ----

void aggregate_vdp(const std::string& dir, const json& manifest, json& summary) {
  const int n = manifest.at("state_dim").get<int>();
  std::map<std::string, std::vector<double>> rmse_per_trial;
  std::map<std::string, std::vector<double>> pred_ms_all;
  std::map<std::string, std::vector<double>> ft_ms_all;
  std::map<std::string, int> ft_events;
  std::vector<std::string> kinds;
  for (const auto& k : manifest.at("controllers")) kinds.push_back(k.get<std::string>());

  for (const auto& file_j : manifest.at("windows")) {
    const std::string file = file_j.get<std::string>();
    const auto rows = read_windows_csv(dir + "/" + file);
    std::map<std::string, double> sse_sum;
    std::map<std::string, double> pts_sum;
    for (const auto& r : rows) {
      const std::string k = to_string(r.kind);
      sse_sum[k] += r.sse;
      pts_sum[k] += r.n_points;
      pred_ms_all[k].push_back(r.pred_ms);
      if (r.kind != ControllerKind::kNominal) {
        ft_ms_all[k].push_back(r.ft_ms);
        ft_events[k] += 1;
      }
    }
    for (const auto& k : kinds) {
      if (pts_sum.count(k) == 0 || pts_sum[k] <= 0.0) {
        throw ConfigError(file + ": no window rows for controller '" + k + "'");
      }
      rmse_per_trial[k].push_back(std::sqrt(sse_sum[k] / (pts_sum[k] * n)));
    }
  }

  json metrics;
  for (const auto& k : kinds) {
    const auto& v = rmse_per_trial[k];
    json mk;
    mk["rmse_mean"] = num_or_null(mean_of(v));
    mk["rmse_std"] = num_or_null(std_of(v));
    mk["rmse_per_trial"] = v;
    metrics[k] = mk;
  }
  summary["metrics"] = metrics;

  const bool all3 = rmse_per_trial.count("nominal") && rmse_per_trial.count("residual_mlp") &&
                    rmse_per_trial.count("meta_mlp");
  if (all3) {
    const auto& nom = rmse_per_trial["nominal"];
    const auto& fresh = rmse_per_trial["residual_mlp"];
    const auto& meta = rmse_per_trial["meta_mlp"];
    int ordering = 0;
    for (std::size_t i = 0; i < nom.size(); ++i) {
      if (meta[i] < fresh[i] && fresh[i] < nom[i]) ++ordering;
    }
    json cmp;
    cmp["ordering_meta_lt_fresh_lt_nominal_count"] = ordering;
    cmp["trials"] = static_cast<int>(nom.size());
    cmp["meta_to_nominal_rmse_ratio"] = num_or_null(mean_of(meta) / mean_of(nom));
    summary["comparisons"] = cmp;
  }

  json throughput;
  for (const auto& k : kinds) {
    json tk;
    auto& pm = pred_ms_all[k];
    tk["prediction_ms_median"] = num_or_null(percentile_of(pm, 50.0));
    tk["prediction_ms_p95"] = num_or_null(percentile_of(pm, 95.0));
    const double med = percentile_of(pm, 50.0);
    tk["prediction_hz"] = (std::isfinite(med) && med > 0.0) ? json(1000.0 / med) : json(nullptr);
    if (ft_ms_all.count(k) && !ft_ms_all[k].empty()) {
      tk["ft_ms_median"] = num_or_null(percentile_of(ft_ms_all[k], 50.0));
      tk["ft_ms_p95"] = num_or_null(percentile_of(ft_ms_all[k], 95.0));
      tk["ft_event_count"] = ft_events[k];
    } else {
      tk["ft_ms_median"] = nullptr;
      tk["ft_ms_p95"] = nullptr;
      tk["ft_event_count"] = 0;
    }
    throughput[k] = tk;
  }
  summary["throughput"] = throughput;
}

struct PlanarErr {
  std::vector<double> t;
  std::vector<double> abs_x;
  std::vector<double> abs_z;
  std::vector<double> euclid;
};

PlanarErr planar_errors(const RolloutTrace& trace) {
  PlanarErr e;
  e.t.reserve(trace.rows.size());
  for (const auto& row : trace.rows) {
    const double ex = row.x_true(0) - row.x_ref(0);
    const double ez = row.x_true(2) - row.x_ref(2);
    e.t.push_back(row.t);
    e.abs_x.push_back(std::abs(ex));
    e.abs_z.push_back(std::abs(ez));
    e.euclid.push_back(std::hypot(ex, ez));
  }
  return e;
}

json bins_json(double bin_s, int nbins, const std::vector<std::vector<double>>& abs_x_by_bin,
               const std::vector<std::vector<double>>& abs_z_by_bin,
               const std::vector<std::vector<double>>& euclid_by_bin) {
  json b;
  std::vector<double> t_c, xm, zm, em, es;
  for (int i = 0; i < nbins; ++i) {
    if (euclid_by_bin[i].empty()) continue;
    t_c.push_back((i + 0.5) * bin_s);
    xm.push_back(mean_of(abs_x_by_bin[i]));
    zm.push_back(mean_of(abs_z_by_bin[i]));
    em.push_back(mean_of(euclid_by_bin[i]));
    es.push_back(std_of(euclid_by_bin[i]));
  }
  b["t"] = t_c;
  b["abs_x_mean"] = xm;
  b["abs_z_mean"] = zm;
  b["euclid_mean"] = em;
  b["euclid_std"] = es;
  return b;
}

void aggregate_closed(const std::string& dir, const json& manifest, json& summary,
                      ExperimentKind ekind) {
  const int n = manifest.at("state_dim").get<int>();
  const int m = manifest.at("input_dim").get<int>();
  const double hz = manifest.at("control_hz").get<double>();
  const double duration = manifest.at("duration_s").get<double>();
  const int expected_rows = static_cast<int>(std::llround(duration * hz));
  const json& defs = manifest.at("definitions");

  json metrics;
  json throughput;
  std::map<std::string, json> kind_metrics;

  for (const auto& kind_j : manifest.at("controllers")) {
    const std::string kind = kind_j.get<std::string>();
    const auto& files = manifest.at("traces").at(kind);
    std::vector<double> solve_ms_all, ft_ms_all;
    int ft_event_count = 0;
    int diverged = 0;
    const int trials = static_cast<int>(files.size());

    std::vector<double> settle_times;
    int success_count = 0;

    std::vector<double> steady, t_settle, err_early, err_late;
    int within_count = 0;
    const double bin_s = defs.value("bin_s", 0.2);
    const int nbins = std::max(1, static_cast<int>(std::llround(duration / bin_s)));
    std::vector<std::vector<double>> bin_x(nbins), bin_z(nbins), bin_e(nbins);

    for (const auto& file_j : files) {
      const std::string file = file_j.get<std::string>();
      const RolloutTrace trace = load_trace(dir, file, n, m);
      const bool trial_diverged = static_cast<int>(trace.rows.size()) < expected_rows;
      if (trial_diverged) ++diverged;
      for (const auto& row : trace.rows) {
        solve_ms_all.push_back(row.solve_ms);
        if (row.finetune_event) {
          ft_ms_all.push_back(row.ft_ms);
          ++ft_event_count;
        }
      }

      if (ekind == ExperimentKind::kCartpoleStab) {
        if (!trial_diverged) {
          Eigen::VectorXd band(4);
          band << defs.value("position_band_m", 0.1), defs.value("velocity_band", 0.1),
              defs.value("angle_band_rad", 0.05), defs.value("angle_rate_band", 0.1);
          std::vector<double> ts;
          std::vector<Eigen::VectorXd> errs;
          ts.reserve(trace.rows.size());
          for (const auto& row : trace.rows) {
            ts.push_back(row.t);
            errs.push_back(row.x_true - row.x_ref);
          }
          const SettleScan sc = settle_scan(ts, errs, band);
          if (sc.success) {
            ++success_count;
            settle_times.push_back(sc.settle_time_s);
          }
        }
      } else {
        const PlanarErr pe = planar_errors(trace);
        std::vector<double> bx(nbins, 0.0), bz(nbins, 0.0), be(nbins, 0.0);
        std::vector<int> bc(nbins, 0);
        for (std::size_t i = 0; i < pe.t.size(); ++i) {
          const int b = std::min(nbins - 1, static_cast<int>(pe.t[i] / bin_s + 1e-9));
          bx[b] += pe.abs_x[i];
          bz[b] += pe.abs_z[i];
          be[b] += pe.euclid[i];
          bc[b] += 1;
        }
        for (int b = 0; b < nbins; ++b) {
          if (bc[b] == 0) continue;
          bin_x[b].push_back(bx[b] / bc[b]);
          bin_z[b].push_back(bz[b] / bc[b]);
          bin_e[b].push_back(be[b] / bc[b]);
        }
        if (ekind == ExperimentKind::kQuadStab) {
          const double window = defs.value("steady_state_window_s", 1.0);
          const double radius = defs.value("settle_radius_m", 0.05);
          const double within_s = defs.value("within_s", 4.0);
          double acc = 0.0;
          int cnt = 0;
          for (std::size_t i = 0; i < pe.t.size(); ++i) {
            if (pe.t[i] >= duration - window - 1e-9) {
              acc += pe.euclid[i];
              ++cnt;
            }
          }
          if (cnt > 0 && !trial_diverged) steady.push_back(acc / cnt);
          if (!trial_diverged) {
            std::vector<Eigen::VectorXd> errs;
            errs.reserve(pe.t.size());
            for (double e : pe.euclid) errs.push_back(Eigen::VectorXd::Constant(1, e));
            Eigen::VectorXd band = Eigen::VectorXd::Constant(1, radius);
            const SettleScan sc = settle_scan(pe.t, errs, band);
            if (sc.success) {
              t_settle.push_back(sc.settle_time_s);
              if (sc.settle_time_s <= within_s + 1e-9) ++within_count;
            }
          }
        } else {
          const auto& early_w = defs.at("early_window_s");
          const auto& late_w = defs.at("late_window_s");
          double e_acc = 0.0, l_acc = 0.0;
          int e_cnt = 0, l_cnt = 0;
          for (std::size_t i = 0; i < pe.t.size(); ++i) {
            if (pe.t[i] >= early_w[0].get<double>() && pe.t[i] < early_w[1].get<double>()) {
              e_acc += pe.euclid[i];
              ++e_cnt;
            }
            if (pe.t[i] >= late_w[0].get<double>() && pe.t[i] < late_w[1].get<double>() + 1e-9) {
              l_acc += pe.euclid[i];
              ++l_cnt;
            }
          }
          if (e_cnt > 0) err_early.push_back(e_acc / e_cnt);
          if (l_cnt > 0) err_late.push_back(l_acc / l_cnt);
        }
      }
    }

    json mk;
    mk["trials"] = trials;
    mk["diverged_count"] = diverged;
    if (ekind == ExperimentKind::kCartpoleStab) {
      mk["success_count"] = success_count;
      mk["success_rate"] = trials > 0 ? static_cast<double>(success_count) / trials : 0.0;
      mk["settle_time_mean_s"] = num_or_null(mean_of(settle_times));
      mk["settle_time_std_s"] = settle_times.empty() ? json(nullptr) : json(std_of(settle_times));
      mk["settle_times_s"] = settle_times;
    } else if (ekind == ExperimentKind::kQuadStab) {
      mk["steady_state_err_mean_m"] = num_or_null(mean_of(steady));
      mk["steady_state_err_std_m"] = steady.empty() ? json(nullptr) : json(std_of(steady));
      mk["settle_achieved_count"] = static_cast<int>(t_settle.size());
      mk["time_to_settle_mean_s"] = num_or_null(mean_of(t_settle));
      mk["time_to_settle_std_s"] = t_settle.empty() ? json(nullptr) : json(std_of(t_settle));
      mk["within_window_fraction"] =
          trials > 0 ? static_cast<double>(within_count) / trials : 0.0;
      mk["times_to_settle_s"] = t_settle;
      mk["bins"] = bins_json(defs.value("bin_s", 0.2),
                             std::max(1, static_cast<int>(std::llround(
                                             duration / defs.value("bin_s", 0.2)))),
                             bin_x, bin_z, bin_e);
    } else {
      mk["err_early_mean_m"] = num_or_null(mean_of(err_early));
      mk["err_early_std_m"] = err_early.empty() ? json(nullptr) : json(std_of(err_early));
      mk["err_late_mean_m"] = num_or_null(mean_of(err_late));
      mk["err_late_std_m"] = err_late.empty() ? json(nullptr) : json(std_of(err_late));
      mk["bins"] = bins_json(defs.value("bin_s", 0.2),
                             std::max(1, static_cast<int>(std::llround(
                                             duration / defs.value("bin_s", 0.2)))),
                             bin_x, bin_z, bin_e);
    }
    kind_metrics[kind] = mk;
    json tk = throughput_block(solve_ms_all, ft_ms_all);
    tk["ft_event_count"] = ft_event_count;
    throughput[kind] = tk;
  }

  for (const auto& [k, v] : kind_metrics) metrics[k] = v;
  summary["metrics"] = metrics;
  summary["throughput"] = throughput;

  json cmp;
  const auto metric_num = [&](const std::string& kind, const char* field) -> json {
    if (!metrics.contains(kind) || !metrics[kind].contains(field)) return nullptr;
    return metrics[kind][field];
  };
  if (ekind == ExperimentKind::kCartpoleStab) {
    cmp["meta_settle_time_mean_s"] = metric_num("meta_mlp", "settle_time_mean_s");
    cmp["fresh_settle_time_mean_s"] = metric_num("residual_mlp", "settle_time_mean_s");
  } else if (ekind == ExperimentKind::kQuadStab) {
    cmp["meta_time_to_settle_mean_s"] = metric_num("meta_mlp", "time_to_settle_mean_s");
    cmp["fresh_time_to_settle_mean_s"] = metric_num("residual_mlp", "time_to_settle_mean_s");
    cmp["nominal_steady_state_err_m"] = metric_num("nominal", "steady_state_err_mean_m");
  } else {
    cmp["meta_err_late_mean_m"] = metric_num("meta_mlp", "err_late_mean_m");
    cmp["nominal_err_late_mean_m"] = metric_num("nominal", "err_late_mean_m");
    cmp["meta_err_early_mean_m"] = metric_num("meta_mlp", "err_early_mean_m");
    cmp["fresh_err_early_mean_m"] = metric_num("residual_mlp", "err_early_mean_m");
  }
  summary["comparisons"] = cmp;
}

// ---- plots ----

struct PredSegments {
  std::vector<std::vector<double>> t;
  std::vector<std::vector<double>> x0;
  std::vector<std::vector<double>> x1;
};

PredSegments read_pred_csv(const std::string& path, int n) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + ": empty file");
  PredSegments seg;
  double last_window = std::numeric_limits<double>::quiet_NaN();
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (static_cast<int>(f.size()) != 2 + n) {
      throw ConfigError(path + ": expected " + std::to_string(2 + n) + " fields per row");
    }
    const double w = parse_num(path, f[0]);
    if (seg.t.empty() || w != last_window) {
      seg.t.emplace_back();
      seg.x0.emplace_back();
      seg.x1.emplace_back();
      last_window = w;
    }
    seg.t.back().push_back(parse_num(path, f[1]));
    seg.x0.back().push_back(parse_num(path, f[2]));
    if (n > 1) seg.x1.back().push_back(parse_num(path, f[3]));
  }
  return seg;
}

void plot_vdp(const std::string& dir, const json& manifest) {
  const int n = manifest.at("state_dim").get<int>();
  const std::string rollout = manifest.at("rollouts").at(0).get<std::string>();
  const RolloutTrace trace = load_trace(dir, rollout, n, 0);

  SvgChart phase;
  phase.title = "limit cycle, truth vs 1 s predictions";
  phase.x_label = "x1";
  phase.y_label = "x2";
  phase.equal_axes = true;
  SvgChart times;
  times.title = "x1 trajectory, truth vs 1 s predictions";
  times.x_label = "t [s]";
  times.y_label = "x1";

  SvgSeries truth_p{"true trajectory", "#222222", {}, {}, false};
  SvgSeries truth_t{"true trajectory", "#222222", {}, {}, false};
  for (const auto& row : trace.rows) {
    truth_p.x.push_back(row.x_true(0));
    truth_p.y.push_back(row.x_true(1));
    truth_t.x.push_back(row.t);
    truth_t.y.push_back(row.x_true(0));
  }
  phase.series.push_back(truth_p);
  times.series.push_back(truth_t);

  for (const auto& [kind, file_j] : manifest.at("predictions").items()) {
    const ControllerKind ck = controller_kind_from_string(kind);
    const PredSegments seg = read_pred_csv(dir + "/" + file_j.get<std::string>(), n);
    for (std::size_t s = 0; s < seg.t.size(); ++s) {
      const std::string label = (s == 0) ? kind : "";
      phase.series.push_back(SvgSeries{label, kind_color(ck), seg.x0[s], seg.x1[s], true});
      times.series.push_back(SvgSeries{label, kind_color(ck), seg.t[s], seg.x0[s], true});
    }
  }
  write_svg_chart(phase, dir + "/vdp_phase.svg");
  write_svg_chart(times, dir + "/vdp_timeseries.svg");
}

void plot_cartpole(const std::string& dir, const json& manifest) {
  const int n = manifest.at("state_dim").get<int>();
  const int m = manifest.at("input_dim").get<int>();
  const double hz = manifest.at("control_hz").get<double>();

  SvgChart chart;
  chart.title = "pole angle, mean over trials";
  chart.x_label = "t [s]";
  chart.y_label = "theta [rad]";

  for (const auto& kind_j : manifest.at("controllers")) {
    const std::string kind = kind_j.get<std::string>();
    const ControllerKind ck = controller_kind_from_string(kind);
    std::vector<double> sums, sq_sums;
    std::vector<int> counts;
    for (const auto& file_j : manifest.at("traces").at(kind)) {
      const RolloutTrace trace = load_trace(dir, file_j.get<std::string>(), n, m);
      if (trace.rows.size() > sums.size()) {
        sums.resize(trace.rows.size(), 0.0);
        sq_sums.resize(trace.rows.size(), 0.0);
        counts.resize(trace.rows.size(), 0);
      }
      for (std::size_t i = 0; i < trace.rows.size(); ++i) {
        const double th = trace.rows[i].x_true(2);
        sums[i] += th;
        sq_sums[i] += th * th;
        counts[i] += 1;
      }
    }
    SvgSeries line{kind, kind_color(ck), {}, {}, false};
    SvgBand band{kind_color(ck), {}, {}, {}};
    for (std::size_t i = 0; i < sums.size(); ++i) {
      if (counts[i] == 0) continue;
      const double t = static_cast<double>(i) / hz;
      const double mu = sums[i] / counts[i];
      const double var =
          counts[i] > 1 ? std::max(0.0, (sq_sums[i] - counts[i] * mu * mu) / (counts[i] - 1))
                        : 0.0;
      const double sd = std::sqrt(var);
      line.x.push_back(t);
      line.y.push_back(mu);
      band.x.push_back(t);
      band.y_lo.push_back(mu - sd);
      band.y_hi.push_back(mu + sd);
    }
    chart.bands.push_back(band);
    chart.series.push_back(line);
  }
  write_svg_chart(chart, dir + "/cartpole_theta.svg");
}

void plot_binned(const json& summary, const std::string& field, const std::string& title,
                 const std::string& y_label, bool with_band, const std::string& path) {
  SvgChart chart;
  chart.title = title;
  chart.x_label = "t [s]";
  chart.y_label = y_label;
  for (const auto& [kind, mk] : summary.at("metrics").items()) {
    if (!mk.contains("bins")) continue;
    const ControllerKind ck = controller_kind_from_string(kind);
    const auto& bins = mk.at("bins");
    const auto t = bins.at("t").get<std::vector<double>>();
    const auto v = bins.at(field).get<std::vector<double>>();
    if (with_band && bins.contains("euclid_std") && field == "euclid_mean") {
      const auto sd = bins.at("euclid_std").get<std::vector<double>>();
      SvgBand band{kind_color(ck), t, {}, {}};
      for (std::size_t i = 0; i < v.size(); ++i) {
        band.y_lo.push_back(v[i] - sd[i]);
        band.y_hi.push_back(v[i] + sd[i]);
      }
      chart.bands.push_back(band);
    }
    chart.series.push_back(SvgSeries{kind, kind_color(ck), t, v, false});
  }
  write_svg_chart(chart, path);
}

void plot_quad_stab(const std::string& dir, const json& summary) {
  plot_binned(summary, "abs_x_mean", "mean |x - x_ref| per 0.2 s bin", "|x error| [m]", false,
              dir + "/quad_stab_abs_x.svg");
  plot_binned(summary, "abs_z_mean", "mean |z - z_ref| per 0.2 s bin", "|z error| [m]", false,
              dir + "/quad_stab_abs_z.svg");
  plot_binned(summary, "euclid_mean", "mean planar error per 0.2 s bin", "error [m]", true,
              dir + "/quad_stab_euclid.svg");
}

void plot_quad_track(const std::string& dir, const json& manifest, const json& summary) {
  plot_binned(summary, "euclid_mean", "mean tracking error per 0.2 s bin", "error [m]", true,
              dir + "/quad_track_err.svg");

  const int n = manifest.at("state_dim").get<int>();
  const int m = manifest.at("input_dim").get<int>();
  SvgChart chart;
  chart.title = "x-z trajectories vs reference circle";
  chart.x_label = "x [m]";
  chart.y_label = "z [m]";
  chart.equal_axes = true;

  const json& ref = manifest.at("reference");
  if (ref.value("kind", "") == "circle") {
    const double cx = ref.at("center_x").get<double>();
    const double cz = ref.at("center_z").get<double>();
    const double r = ref.at("radius").get<double>();
    SvgSeries circle{"reference", "#222222", {}, {}, true};
    for (int i = 0; i <= 256; ++i) {
      const double a = 2.0 * M_PI * i / 256.0;
      circle.x.push_back(cx + r * std::cos(a));
      circle.y.push_back(cz + r * std::sin(a));
    }
    chart.series.push_back(circle);
  }

  for (const auto& kind_j : manifest.at("controllers")) {
    const std::string kind = kind_j.get<std::string>();
    const ControllerKind ck = controller_kind_from_string(kind);
    const auto& files = manifest.at("traces").at(kind);
    const int limit = std::min<int>(10, static_cast<int>(files.size()));
    for (int i = 0; i < limit; ++i) {
      const RolloutTrace trace = load_trace(dir, files.at(i).get<std::string>(), n, m);
      SvgSeries s{i == 0 ? kind : "", kind_color(ck), {}, {}, false};
      for (const auto& row : trace.rows) {
        s.x.push_back(row.x_true(0));
        s.y.push_back(row.x_true(2));
      }
      chart.series.push_back(s);
    }
  }
  write_svg_chart(chart, dir + "/quad_track_xz.svg");
}

}  // namespace

double mean_of(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double x : v) acc += x;
  return acc / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double mu = mean_of(v);
  double acc = 0.0;
  for (double x : v) acc += (x - mu) * (x - mu);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

double percentile_of(std::vector<double> v, double p) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double idx = std::clamp(p, 0.0, 100.0) / 100.0 * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(idx);
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = idx - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

SettleScan settle_scan(const std::vector<double>& t, const std::vector<Eigen::VectorXd>& err,
                       const Eigen::VectorXd& band) {
  SettleScan out;
  if (t.empty() || t.size() != err.size()) return out;
  std::size_t first_ok = t.size();
  for (std::size_t i = t.size(); i-- > 0;) {
    bool ok = true;
    for (Eigen::Index c = 0; c < band.size(); ++c) {
      if (std::abs(err[i](c)) > band(c)) {
        ok = false;
        break;
      }
    }
    if (!ok) break;
    first_ok = i;
  }
  if (first_ok < t.size()) {
    out.success = true;
    out.settle_time_s = t[first_ok];
  }
  return out;
}

nlohmann::json throughput_block(const std::vector<double>& solve_ms,
                                const std::vector<double>& ft_ms) {
  json tk;
  tk["solve_ms_median"] = num_or_null(percentile_of(solve_ms, 50.0));
  tk["solve_ms_p95"] = num_or_null(percentile_of(solve_ms, 95.0));
  const double med = percentile_of(solve_ms, 50.0);
  tk["achievable_hz"] = (std::isfinite(med) && med > 0.0) ? json(1000.0 / med) : json(nullptr);
  if (!ft_ms.empty()) {
    tk["ft_ms_median"] = num_or_null(percentile_of(ft_ms, 50.0));
    tk["ft_ms_p95"] = num_or_null(percentile_of(ft_ms, 95.0));
  } else {
    tk["ft_ms_median"] = nullptr;
    tk["ft_ms_p95"] = nullptr;
  }
  return tk;
}

nlohmann::json reference_timings_metadata() {
  json j;
  j["note"] =
      "rates reported by the reference implementation on its original hardware, for context "
      "only";
  j["control_loop_hz"] = json::array({45.0, 50.0});
  j["nominal_prediction_hz"] = 10500.0;
  j["learning_prediction_hz"] = 6200.0;
  return j;
}

// Rescales first-layer columns by inverse feature scale so low-magnitude
// inputs (thrusts vs positions) receive comparable gradient flow.
void balance_first_layer(MlpModel& net, const std::vector<EpisodeSource>& sources) {
  const Eigen::Index dim = net.input_dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(dim);
  long count = 0;
  for (const auto& src : sources) {
    const Eigen::MatrixXd& pool = src.pool_inputs();
    sum += pool.rowwise().sum();
    sum_sq += pool.array().square().rowwise().sum().matrix();
    count += pool.cols();
  }
  if (count < 2) return;
  Eigen::VectorXd scale(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double mean = sum(j) / double(count);
    const double var = sum_sq(j) / double(count) - mean * mean;
    scale(j) = std::sqrt(std::max(var, 1e-12));
  }
  const double ref = std::exp(scale.array().log().mean());
  for (Eigen::Index j = 0; j < dim; ++j) {
    const double factor = std::clamp(ref / scale(j), 0.1, 30.0);
    net.weights[0].col(j) *= factor;
  }
}

std::string run_meta_train(const ExperimentConfig& cfg) {
  if (cfg.meta.arch.empty()) throw ConfigError("meta training requires meta.arch");
  if (cfg.meta.checkpoint.empty()) throw ConfigError("meta training requires meta.checkpoint");
  validate_meta_config(cfg.meta.train);

  const auto tasks = sample_tasks(cfg.plant, cfg.meta.tasks.protocol, cfg.meta.tasks.count,
                                  cfg.meta.tasks.lo, cfg.meta.tasks.hi, cfg.seed);
  const OcpConfig* ocp = cfg.ocp ? &*cfg.ocp : nullptr;
  std::vector<EpisodeSource> sources;
  sources.reserve(tasks.size());
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    sources.emplace_back(tasks[i], cfg.meta.excitation, ocp, &cfg.reference, cfg.seed);
    std::printf("[meta-train] task %zu/%zu pool %d samples\n", i + 1, tasks.size(),
                sources.back().pool_size());
    std::fflush(stdout);
  }

  MlpModel arch = mlp_init(cfg.meta.arch, cfg.meta.activation, mix_seed(cfg.seed, kTagInit));
  balance_first_layer(arch, sources);
  const EpisodeGenerator generator = [&](int task_index, int refresh_round) {
    const std::uint64_t draw_seed =
        mix_seed(cfg.seed, kTagEpisode,
                 static_cast<std::uint64_t>(task_index) * 4096ULL +
                     static_cast<std::uint64_t>(refresh_round));
    return sources[static_cast<std::size_t>(task_index)].draw(cfg.meta.train.k_shot, draw_seed);
  };

  const auto t0 = std::chrono::steady_clock::now();
  auto [theta, log] = meta_train(arch, flatten_params(arch), static_cast<int>(tasks.size()),
                                 generator, cfg.meta.train, cfg.seed);
  const double wall_s = elapsed_ms(t0) / 1000.0;
  std::printf("[meta-train] %d epochs in %.1f s, final query loss %.6g\n", cfg.meta.train.epochs,
              wall_s, log.empty() ? 0.0 : log.back().mean_query_loss);
  std::fflush(stdout);

  save_checkpoint(with_params(arch, theta), cfg.meta.checkpoint);

  const fs::path cp(cfg.meta.checkpoint);
  const fs::path log_path =
      (cp.has_parent_path() ? cp.parent_path() : fs::path(".")) / (cp.stem().string() + "_log.csv");
  std::ofstream out(log_path, std::ios::binary);
  if (!out) throw ConfigError("cannot open " + log_path.string() + " for writing");
  out << "epoch,mean_query_loss,grad_norm,wall_ms\n";
  for (const auto& row : log) {
    out << row.epoch << ',' << format_double(row.mean_query_loss) << ','
        << format_double(row.grad_norm) << ',' << format_double(row.wall_ms) << "\n";
  }
  return cfg.meta.checkpoint;
}

void run_experiment(const ExperimentConfig& cfg) {
  if (cfg.experiment == ExperimentKind::kMetaTrain) {
    run_meta_train(cfg);
    return;
  }
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must be set");
  if (cfg.experiment == ExperimentKind::kVdpPredict) {
    run_vdp_predict_impl(cfg);
  } else {
    run_closed_loop_trials(cfg);
  }
  aggregate_dir(cfg.output_dir);
  plot_dir(cfg.output_dir);
}

nlohmann::json aggregate_dir(const std::string& dir) {
  const json manifest = read_json_file(dir + "/manifest.json");
  const ExperimentKind kind =
      experiment_kind_from_string(manifest.at("experiment").get<std::string>());
  json summary;
  summary["experiment"] = manifest.at("experiment");
  summary["seed"] = manifest.value("seed", 0ULL);
  summary["trials"] = manifest.at("trials");
  summary["controllers"] = manifest.at("controllers");
  summary["definitions"] = manifest.value("definitions", json::object());
  summary["reference_timings"] = manifest.value("reference_timings", reference_timings_metadata());
  switch (kind) {
    case ExperimentKind::kVdpPredict:
      aggregate_vdp(dir, manifest, summary);
      break;
    case ExperimentKind::kCartpoleStab:
    case ExperimentKind::kQuadStab:
    case ExperimentKind::kQuadTrack:
      aggregate_closed(dir, manifest, summary, kind);
      break;
    case ExperimentKind::kMetaTrain:
      throw ConfigError("meta_train runs produce no per-trial outputs to aggregate");
  }
  write_json_file(dir + "/summary.json", summary);
  return summary;
}

void plot_dir(const std::string& dir) {
  const json manifest = read_json_file(dir + "/manifest.json");
  if (!fs::exists(dir + "/summary.json")) aggregate_dir(dir);
  const json summary = read_json_file(dir + "/summary.json");
  switch (experiment_kind_from_string(manifest.at("experiment").get<std::string>())) {
    case ExperimentKind::kVdpPredict:
      plot_vdp(dir, manifest);
      break;
    case ExperimentKind::kCartpoleStab:
      plot_cartpole(dir, manifest);
      break;
    case ExperimentKind::kQuadStab:
      plot_quad_stab(dir, summary);
      break;
    case ExperimentKind::kQuadTrack:
      plot_quad_track(dir, manifest, summary);
      break;
    case ExperimentKind::kMetaTrain:
      throw ConfigError("meta_train runs have nothing to plot");
  }
}

}  // namespace metampc
