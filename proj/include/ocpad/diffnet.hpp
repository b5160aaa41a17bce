#pragma once

// Small multi-channel feed-forward network with hand-written backprop.
//
// Topology: one trunk per input channel, the trunk outputs are concatenated
// and passed through the fusion stack, then a linear embedding layer, then a
// single sigmoid output unit reading the embedding.

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ocpad {

enum class Activation { relu, tanh };

std::string_view to_string(Activation a);
Activation parse_activation(std::string_view s);

struct NetworkConfig {
  std::vector<std::string> channels;
  int input_dim_per_channel = 1;
  std::vector<int> trunk_hidden_dims;
  std::vector<int> fusion_hidden_dims;
  int embedding_dim = 10;
  Activation activation = Activation::relu;
  std::uint64_t seed = 0;

  /// Throws ConfigError when any dimension is non-positive or no channel is set.
  void validate() const;
  int trunk_output_dim() const;
  int fusion_input_dim() const;
  int fusion_output_dim() const;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;    // out

  DenseLayer() = default;
  DenseLayer(int in, int out) : weight(Eigen::MatrixXd::Zero(out, in)), bias(Eigen::VectorXd::Zero(out)) {}
};

/// All trainable tensors. The same shape doubles as the gradient container
/// and as Adam moment storage.
struct NetworkParams {
  std::vector<std::vector<DenseLayer>> trunks;  // [channel][layer]
  std::vector<DenseLayer> fusion;
  DenseLayer embedding;
  DenseLayer output;  // 1 x embedding_dim

  /// Zero-valued tensors shaped for `config`.
  static NetworkParams zeros(const NetworkConfig& config);

  /// Visits tensors in declaration order: trunks by channel then layer
  /// (weight, bias), fusion layers, embedding, output.
  void for_each_tensor(const std::function<void(const std::string&, std::span<double>)>& fn);
  void for_each_tensor(const std::function<void(const std::string&, std::span<const double>)>& fn) const;

  std::size_t parameter_count() const;
  bool same_shape(const NetworkParams& other) const;
};

using ParamGradients = NetworkParams;

/// Per-channel input vectors, in the order of NetworkConfig::channels.
using ChannelInputs = std::vector<std::span<const double>>;

inline constexpr double kProbabilityEpsilon = 1e-7;

struct ForwardResult {
  Eigen::VectorXd embedding;
  double probability = 0.5;

  // Cached for backward.
  bool clamped = false;
  std::vector<std::vector<Eigen::VectorXd>> trunk_activations;  // [channel][0 = input, l+1 = layer l output]
  std::vector<Eigen::VectorXd> fusion_activations;              // [0 = concat, l+1 = layer l output]
};

NetworkParams init_network(const NetworkConfig& config);

/// Throws InputError on dimension mismatch or non-finite input.
ForwardResult forward(const NetworkConfig& config, const NetworkParams& params, const ChannelInputs& input);

struct UpstreamGradient {
  double d_probability = 0.0;
  Eigen::VectorXd d_embedding;  // empty means zero
};

/// Gradient of the summed per-sample losses. Accumulates in sample order.
ParamGradients backward(const NetworkConfig& config, const NetworkParams& params,
                        std::span<const ForwardResult> batch, std::span<const UpstreamGradient> upstream);

struct AdamState {
  NetworkParams first_moment;
  NetworkParams second_moment;
  std::int64_t step = 0;

  static AdamState for_params(const NetworkConfig& config);
};

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// One AdamW-style update in place. Weight decay shrinks parameters by
/// (1 - lr * weight_decay) before the Adam step. Throws TrainingError naming
/// the tensor when a gradient is non-finite.
void adam_step(NetworkParams& params, const ParamGradients& gradients, AdamState& state, double lr,
               double weight_decay, const AdamHyper& hyper = {});

struct LossAndGradient {
  double loss = 0.0;
  ParamGradients gradient;
};

using LossClosure = std::function<LossAndGradient(const NetworkParams&)>;

/// Max relative error |a-n| / max(|a|,|n|,1e-8) between the closure's
/// analytic gradient and central differences. Checks every coordinate when
/// the net has at most `max_coordinates` parameters, otherwise a seeded
/// random subsample of that many.
double gradient_check(const NetworkParams& params, const LossClosure& loss, double h,
                      std::size_t max_coordinates = 4000, std::uint64_t seed = 0);

}  // namespace ocpad
