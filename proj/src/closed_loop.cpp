#include "metampc/closed_loop.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <utility>

#include "metampc/errors.hpp"
#include "metampc/integrate.hpp"
#include "metampc/rng.hpp"

namespace metampc {

ControllerKind controller_kind_from_string(const std::string& s) {
  if (s == "nominal") return ControllerKind::kNominal;
  if (s == "residual_mlp") return ControllerKind::kResidualMlp;
  if (s == "meta_mlp") return ControllerKind::kMetaMlp;
  throw ConfigError("unknown controller kind '" + s + "'");
}

std::string to_string(ControllerKind k) {
  switch (k) {
    case ControllerKind::kNominal: return "nominal";
    case ControllerKind::kResidualMlp: return "residual_mlp";
    case ControllerKind::kMetaMlp: return "meta_mlp";
  }
  return "?";
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

Eigen::VectorXd add_noise(const Eigen::VectorXd& x, double sigma, std::mt19937_64& rng) {
  if (sigma == 0.0) return x;
  std::normal_distribution<double> gauss(0.0, sigma);
  Eigen::VectorXd noisy = x;
  for (int i = 0; i < noisy.size(); ++i) noisy(i) += gauss(rng);
  return noisy;
}

}  // namespace

RolloutTrace simulate_true(const PlantSpec& spec, const Eigen::VectorXd& x0,
                           const std::vector<Eigen::VectorXd>& controls, double control_hz,
                           double substep_s, double noise_sigma, std::uint64_t seed) {
  if (control_hz <= 0.0) throw ConfigError("simulate: control rate must be positive");
  if (noise_sigma < 0.0) throw ConfigError("simulate: noise sigma must be nonnegative");
  const double dt_c = 1.0 / control_hz;
  const TruePlant plant{spec};
  auto noise_rng = make_rng(mix_seed(seed, kTagNoise));

  RolloutTrace trace;
  Eigen::VectorXd x = x0;
  for (size_t k = 0; k < controls.size(); ++k) {
    TraceRow row;
    row.t = static_cast<double>(k) * dt_c;
    row.x_true = x;
    row.x_meas = add_noise(x, noise_sigma, noise_rng);
    row.u = controls[k];
    row.x_ref = Eigen::VectorXd::Zero(spec.state_dim);
    trace.rows.push_back(std::move(row));
    x = integrate_control_period(plant, x, controls[k], dt_c, substep_s);
    if (x.norm() > 1e6) {
      trace.diverged = true;
      break;
    }
  }
  trace.final_x_true = x;
  trace.final_x_meas = add_noise(x, noise_sigma, noise_rng);
  return trace;
}

RolloutTrace run_closed_loop(const PlantTask& task, ControllerKind kind,
                             std::optional<MlpModel> residual0, const OcpConfig& ocp,
                             const AdaptConfig& adapt, const ReferenceSignal& ref,
                             const Eigen::VectorXd& x0, const ClosedLoopConfig& sim,
                             std::uint64_t seed) {
  const PlantSpec& plant = task.plant;
  if (kind == ControllerKind::kNominal && residual0.has_value()) {
    throw ConfigError("closed loop: nominal controller takes no residual network");
  }
  if (kind != ControllerKind::kNominal && !residual0.has_value()) {
    throw ConfigError("closed loop: learning controller needs an initial residual network");
  }
  validate_adapt_config(adapt, 1.0 / sim.control_hz);

  const double dt_c = 1.0 / sim.control_hz;
  const int steps = static_cast<int>(std::llround(sim.duration_s * sim.control_hz));
  const int update_every = static_cast<int>(std::llround(adapt.t_update_s * sim.control_hz));
  const bool learning = kind != ControllerKind::kNominal;

  AugmentedModel model(plant);
  if (residual0) model.set_residual(std::move(*residual0));
  MpcController controller(std::move(model), ocp, ref);

  const TruePlant true_plant{plant};
  auto noise_rng = make_rng(mix_seed(seed, kTagNoise));
  SampleBuffer buffer(adapt.buffer_capacity);
  std::deque<Eigen::VectorXd> label_window;

  RolloutTrace trace;
  Eigen::VectorXd x_true = x0;
  Eigen::VectorXd x_meas = add_noise(x_true, sim.noise_sigma, noise_rng);
  Eigen::VectorXd x_meas_prev;
  Eigen::VectorXd u_prev;

  for (int k = 0; k < steps; ++k) {
    const double t = k * dt_c;
    TraceRow row;
    row.t = t;
    row.x_true = x_true;
    row.x_meas = x_meas;
    row.x_ref = reference_state_at(ref, t);

    if (learning && k > 0) {
      auto sample = harvest_sample(plant, x_meas_prev, u_prev, x_meas, dt_c, t);
      if (sample) {
        label_window.push_back(sample->label);
        if (static_cast<int>(label_window.size()) > adapt.smooth_window) label_window.pop_front();
        if (adapt.smooth_window > 1) {
          Eigen::VectorXd mean = Eigen::VectorXd::Zero(sample->label.size());
          for (const auto& l : label_window) mean += l;
          sample->label = mean / static_cast<double>(label_window.size());
        }
        buffer.push(std::move(*sample));
      } else {
        ++trace.dropped_samples;
      }
    }

    if (learning && adapt.enabled && k > 0 && k % update_every == 0) {
      if (buffer.size() >= adapt.k_batch) {
        FineTuneResult ft = fine_tune(controller.model().residual(), buffer, adapt);
        row.finetune_event = 1;
        row.ft_loss_before = ft.loss_before;
        row.ft_loss_after = ft.loss_after;
        row.ft_ms = ft.wall_ms;
        if (ft.rejected) {
          ++trace.rejected_finetunes;
        } else {
          controller.model().set_residual(std::move(ft.model));
        }
      } else {
        ++trace.skipped_finetunes;
      }
    }

    MpcTelemetry telemetry;
    const Eigen::VectorXd u = controller.step(t, x_meas, &telemetry);
    row.u = u;
    row.solver_iters = telemetry.iters;
    row.solver_cost = telemetry.cost;
    row.solve_ms = telemetry.solve_ms;
    trace.rows.push_back(std::move(row));

    bool blew_up = false;
    try {
      x_true = integrate_control_period(true_plant, x_true, u, dt_c, sim.substep_s);
    } catch (const NumericError&) {
      blew_up = true;
    }
    if (blew_up || x_true.norm() > 1e6) {
      trace.diverged = true;
      break;
    }
    x_meas_prev = x_meas;
    u_prev = u;
    x_meas = add_noise(x_true, sim.noise_sigma, noise_rng);
  }
  trace.final_x_true = x_true;
  trace.final_x_meas = x_meas;
  return trace;
}

Eigen::MatrixXd predict_open_loop(const AugmentedModel& model, const Eigen::VectorXd& x_start,
                                  int steps, double dt, const Eigen::MatrixXd& controls) {
  const int m = model.spec().input_dim;
  if (m > 0 && controls.cols() != steps) {
    throw ShapeError("predict: control schedule must cover every step");
  }
  Eigen::MatrixXd states(x_start.size(), steps + 1);
  states.col(0) = x_start;
  Eigen::VectorXd x = x_start;
  const Eigen::VectorXd u_empty(0);
  for (int k = 0; k < steps; ++k) {
    const Eigen::VectorXd u = m > 0 ? Eigen::VectorXd(controls.col(k)) : u_empty;
    x = rk4_step(model, x, u, dt);
    states.col(k + 1) = x;
  }
  return states;
}

void write_trace_csv(const RolloutTrace& trace, int state_dim, int input_dim,
                     const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open trace file '" + path + "' for writing");

  out << "t";
  for (int i = 0; i < state_dim; ++i) out << ",x_true" << i;
  for (int i = 0; i < state_dim; ++i) out << ",x_meas" << i;
  for (int i = 0; i < input_dim; ++i) out << ",u" << i;
  for (int i = 0; i < state_dim; ++i) out << ",x_ref" << i;
  out << ",solver_iters,solver_cost,solve_ms,finetune_event,ft_loss_before,ft_loss_after,ft_ms\n";

  for (const auto& row : trace.rows) {
    out << format_double(row.t);
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(row.x_true(i));
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(row.x_meas(i));
    for (int i = 0; i < input_dim; ++i) out << ',' << format_double(row.u(i));
    for (int i = 0; i < state_dim; ++i) out << ',' << format_double(row.x_ref(i));
    out << ',' << row.solver_iters << ',' << format_double(row.solver_cost) << ','
        << format_double(row.solve_ms) << ',' << row.finetune_event << ','
        << format_double(row.ft_loss_before) << ',' << format_double(row.ft_loss_after) << ','
        << format_double(row.ft_ms) << '\n';
  }
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

RolloutTrace read_trace_csv(const std::string& path, int& state_dim, int& input_dim) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("trace file '" + path + "' is empty");

  const auto header = split_csv_line(line);
  int n = 0;
  int m = 0;
  for (const auto& name : header) {
    if (name.rfind("x_true", 0) == 0) ++n;
    if (name.rfind("u", 0) == 0 && name != "u_ref" && name.size() > 1 &&
        std::isdigit(static_cast<unsigned char>(name[1]))) {
      ++m;
    }
  }
  const size_t expected = 1 + 3 * static_cast<size_t>(n) + static_cast<size_t>(m) + 7;
  if (header.size() != expected || n == 0) {
    throw ConfigError("trace file '" + path + "' has an unexpected column layout");
  }

  RolloutTrace trace;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != expected) {
      throw ConfigError("trace file '" + path + "' row " + std::to_string(line_no) +
                        " has " + std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(expected));
    }
    size_t c = 0;
    auto next = [&]() { return std::stod(fields[c++]); };
    TraceRow row;
    row.t = next();
    row.x_true.resize(n);
    for (int i = 0; i < n; ++i) row.x_true(i) = next();
    row.x_meas.resize(n);
    for (int i = 0; i < n; ++i) row.x_meas(i) = next();
    row.u.resize(m);
    for (int i = 0; i < m; ++i) row.u(i) = next();
    row.x_ref.resize(n);
    for (int i = 0; i < n; ++i) row.x_ref(i) = next();
    row.solver_iters = static_cast<int>(next());
    row.solver_cost = next();
    row.solve_ms = next();
    row.finetune_event = static_cast<int>(next());
    row.ft_loss_before = next();
    row.ft_loss_after = next();
    row.ft_ms = next();
    trace.rows.push_back(std::move(row));
  }
  state_dim = n;
  input_dim = m;
  return trace;
}

}  // namespace metampc
