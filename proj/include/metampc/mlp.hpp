#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

namespace metampc {

enum class Activation { kTanh, kRelu };
enum class Loss { kMae, kMse };

Activation activation_from_string(const std::string& s);
std::string to_string(Activation a);
Loss loss_from_string(const std::string& s);
std::string to_string(Loss l);

// Flat view of all trainable parameters in canonical order:
// for each layer l, W_l row-major, then b_l.
using FlatParams = Eigen::VectorXd;

// Feed-forward network with linear output layer. weights[l] has shape
// (layer_sizes[l+1] x layer_sizes[l]).
struct MlpModel {
  std::vector<int> layer_sizes;
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Activation activation = Activation::kTanh;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  Eigen::Index parameter_count() const;
};

// Column-wise batch of labeled regression pairs.
struct LabeledSet {
  Eigen::MatrixXd inputs;   // (input_dim x count)
  Eigen::MatrixXd targets;  // (output_dim x count)
  int count() const { return static_cast<int>(inputs.cols()); }
};

// Uniform fan-based init in [-sqrt(6/(fan_in+fan_out)), +...], zero biases.
MlpModel mlp_init(const std::vector<int>& layer_sizes, Activation activation, std::uint64_t seed);

Eigen::VectorXd mlp_forward(const MlpModel& model, const Eigen::VectorXd& input);

// inputs: (input_dim x B), returns (output_dim x B).
Eigen::MatrixXd mlp_forward_batch(const MlpModel& model, const Eigen::MatrixXd& inputs);

// Mean loss over all B*output_dim elements.
double mlp_loss(const MlpModel& model, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                Loss loss);

// Gradient of mlp_loss w.r.t. all parameters, flattened in canonical order.
// MAE subgradient at exactly-zero error is 0.
FlatParams mlp_param_gradient(const MlpModel& model, const Eigen::MatrixXd& inputs,
                              const Eigen::MatrixXd& targets, Loss loss);

// d output / d input, shape (output_dim x input_dim).
Eigen::MatrixXd mlp_input_jacobian(const MlpModel& model, const Eigen::VectorXd& input);

// H*v by central differences of the gradient, eps = 1e-4*(1+max|theta|).
FlatParams hessian_vector_product(const MlpModel& model, const Eigen::MatrixXd& inputs,
                                  const Eigen::MatrixXd& targets, Loss loss, const FlatParams& v);

FlatParams flatten_params(const MlpModel& model);
void set_params(MlpModel& model, const FlatParams& flat);
MlpModel with_params(const MlpModel& arch, const FlatParams& flat);

}  // namespace metampc
