#include "metampc/mlp.hpp"

#include <cmath>
#include <random>

#include "metampc/errors.hpp"
#include "metampc/rng.hpp"

namespace metampc {

namespace {

void check_input_dim(const MlpModel& model, Eigen::Index got) {
  if (got != model.input_dim()) {
    throw ShapeError("mlp: input has dimension " + std::to_string(got) + ", expected " +
                     std::to_string(model.input_dim()));
  }
}

double act_eval(Activation a, double z) {
  return a == Activation::kTanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

double act_deriv(Activation a, double z) {
  if (a == Activation::kTanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

Eigen::MatrixXd apply_act(Activation a, const Eigen::MatrixXd& z) {
  return z.unaryExpr([a](double v) { return act_eval(a, v); });
}

Eigen::MatrixXd apply_act_deriv(Activation a, const Eigen::MatrixXd& z) {
  return z.unaryExpr([a](double v) { return act_deriv(a, v); });
}

}  // namespace

Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::kTanh;
  if (s == "relu") return Activation::kRelu;
  throw ConfigError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) { return a == Activation::kTanh ? "tanh" : "relu"; }

Loss loss_from_string(const std::string& s) {
  if (s == "mae") return Loss::kMae;
  if (s == "mse") return Loss::kMse;
  throw ConfigError("unknown loss '" + s + "'");
}

std::string to_string(Loss l) { return l == Loss::kMae ? "mae" : "mse"; }

Eigen::Index MlpModel::parameter_count() const {
  Eigen::Index n = 0;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    n += Eigen::Index(layer_sizes[l]) * layer_sizes[l + 1] + layer_sizes[l + 1];
  }
  return n;
}

MlpModel mlp_init(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw ConfigError("mlp_init: need at least 2 layers");
  for (int s : layer_sizes) {
    if (s < 1) throw ConfigError("mlp_init: layer sizes must be >= 1");
  }
  MlpModel model;
  model.layer_sizes = layer_sizes;
  model.activation = activation;
  auto rng = make_rng(seed);
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    const double bound = std::sqrt(6.0 / double(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) w(r, c) = dist(rng);
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return model;
}

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& input) {
  check_input_dim(model, input.size());
  thread_local Eigen::VectorXd a, z;
  a = input;
  const std::size_t n_layers = model.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    z.noalias() = model.weights[l] * a;
    z += model.biases[l];
    if (l + 1 < n_layers) {
      a = z.unaryExpr([&](double v) { return act_eval(model.activation, v); });
    } else {
      a = z;
    }
  }
  return a;
}

Eigen::MatrixXd mlp_forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs) {
  check_input_dim(model, inputs.rows());
  Eigen::MatrixXd a = inputs;
  const std::size_t n_layers = model.weights.size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd z = (model.weights[l] * a).colwise() + model.biases[l];
    a = (l + 1 < n_layers) ? apply_act(model.activation, z) : std::move(z);
  }
  return a;
}

double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                Loss loss) {
  if (inputs.cols() == 0) throw std::invalid_argument("mlp_loss: empty batch");
  if (targets.rows() != model.output_dim() || targets.cols() != inputs.cols()) {
    throw ShapeError("mlp_loss: target shape mismatch");
  }
  const Eigen::MatrixXd err = mlp_forward_batch(model, inputs) - targets;
  if (loss == Loss::kMse) return err.array().square().mean();
  return err.array().abs().mean();
}

FlatParams mlp_param_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& targets, Loss loss) {
  if (inputs.cols() == 0) throw std::invalid_argument("mlp_param_gradient: empty batch");
  check_input_dim(model, inputs.rows());
  if (targets.rows() != model.output_dim() || targets.cols() != inputs.cols()) {
    throw ShapeError("mlp_param_gradient: target shape mismatch");
  }

  const std::size_t n_layers = model.weights.size();
  thread_local std::vector<Eigen::MatrixXd> acts;  // acts[l] feeds layer l
  thread_local std::vector<Eigen::MatrixXd> pre;   // pre-activation of layer l
  thread_local std::vector<Eigen::MatrixXd> grad_w;
  thread_local std::vector<Eigen::VectorXd> grad_b;
  thread_local Eigen::MatrixXd delta, delta_next;
  if (acts.size() < n_layers + 1) acts.resize(n_layers + 1);
  if (pre.size() < n_layers) pre.resize(n_layers);
  if (grad_w.size() < n_layers) grad_w.resize(n_layers);
  if (grad_b.size() < n_layers) grad_b.resize(n_layers);

  acts[0] = inputs;
  for (std::size_t l = 0; l < n_layers; ++l) {
    pre[l].noalias() = model.weights[l] * acts[l];
    pre[l].colwise() += model.biases[l];
    if (l + 1 < n_layers) {
      acts[l + 1] = apply_act(model.activation, pre[l]);
    } else {
      acts[l + 1] = pre[l];
    }
  }

  const double denom = double(targets.size());
  if (loss == Loss::kMse) {
    delta = (2.0 / denom) * (acts[n_layers] - targets);
  } else {
    delta = (acts[n_layers] - targets).unaryExpr([&](double e) {
      return e == 0.0 ? 0.0 : (e > 0.0 ? 1.0 : -1.0) / denom;
    });
  }

  for (std::size_t li = n_layers; li-- > 0;) {
    grad_w[li].noalias() = delta * acts[li].transpose();
    grad_b[li] = delta.rowwise().sum();
    if (li > 0) {
      delta_next.noalias() = model.weights[li].transpose() * delta;
      delta = delta_next.cwiseProduct(apply_act_deriv(model.activation, pre[li - 1]));
    }
  }

  FlatParams flat(model.parameter_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (Eigen::Index r = 0; r < grad_w[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < grad_w[l].cols(); ++c) flat(off++) = grad_w[l](r, c);
    }
    flat.segment(off, grad_b[l].size()) = grad_b[l];
    off += grad_b[l].size();
  }
  return flat;
}

Eigen::MatrixXd mlp_input_jacobian(const MlpModel& model, const Eigen::VectorXd& input) {
  check_input_dim(model, input.size());
  const std::size_t n_layers = model.weights.size();
  if (n_layers == 1) return model.weights[0];

  // Forward pass keeps the activation slopes; reverse accumulation keeps the
  // running jacobian at output_dim rows, which is the small dimension here.
  thread_local std::vector<Eigen::VectorXd> slopes;
  thread_local Eigen::VectorXd a, z;
  thread_local Eigen::MatrixXd jac, jac_next;
  if (slopes.size() < n_layers - 1) slopes.resize(n_layers - 1);
  a = input;
  for (std::size_t l = 0; l + 1 < n_layers; ++l) {
    z.noalias() = model.weights[l] * a;
    z += model.biases[l];
    slopes[l] = z.unaryExpr([&](double v) { return act_deriv(model.activation, v); });
    a = z.unaryExpr([&](double v) { return act_eval(model.activation, v); });
  }

  jac = model.weights[n_layers - 1];
  for (std::size_t l = n_layers - 1; l-- > 0;) {
    jac.array().rowwise() *= slopes[l].transpose().array();
    jac_next.noalias() = jac * model.weights[l];
    jac.swap(jac_next);
  }
  return jac;
}

FlatParams hessian_vector_product(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& targets, Loss loss, const FlatParams& v) {
  const FlatParams theta = flatten_params(model);
  if (v.size() != theta.size()) {
    throw ShapeError("hessian_vector_product: v has length " + std::to_string(v.size()) +
                     ", expected " + std::to_string(theta.size()));
  }
  const double eps = 1e-4 * (1.0 + theta.lpNorm<Eigen::Infinity>());
  MlpModel probe = model;
  set_params(probe, theta + eps * v);
  const FlatParams g_plus = mlp_param_gradient(probe, inputs, targets, loss);
  set_params(probe, theta - eps * v);
  const FlatParams g_minus = mlp_param_gradient(probe, inputs, targets, loss);
  return (g_plus - g_minus) / (2.0 * eps);
}

FlatParams flatten_params(const MlpModel& model) {
  FlatParams flat(model.parameter_count());
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    const Eigen::MatrixXd& w = model.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) flat(off++) = w(r, c);
    }
    flat.segment(off, model.biases[l].size()) = model.biases[l];
    off += model.biases[l].size();
  }
  return flat;
}

void set_params(MlpModel& model, const FlatParams& flat) {
  if (flat.size() != model.parameter_count()) {
    throw ShapeError("set_params: flat vector has length " + std::to_string(flat.size()) +
                     ", expected " + std::to_string(model.parameter_count()));
  }
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < model.weights.size(); ++l) {
    Eigen::MatrixXd& w = model.weights[l];
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = flat(off++);
    }
    model.biases[l] = flat.segment(off, model.biases[l].size());
    off += model.biases[l].size();
  }
}

MlpModel with_params(const MlpModel& arch, const FlatParams& flat) {
  MlpModel out = arch;
  set_params(out, flat);
  return out;
}

}  // namespace metampc
