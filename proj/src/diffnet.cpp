#include "ocpad/diffnet.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ocpad/error.hpp"

namespace ocpad {

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "tanh"; }

Activation parse_activation(std::string_view s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  throw ConfigError("unknown activation '" + std::string(s) + "'");
}

void NetworkConfig::validate() const {
  if (channels.empty()) throw ConfigError("network needs at least one channel");
  if (input_dim_per_channel < 1) throw ConfigError("input_dim_per_channel must be >= 1");
  if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
  for (int d : trunk_hidden_dims)
    if (d < 1) throw ConfigError("trunk_hidden_dims entries must be >= 1");
  for (int d : fusion_hidden_dims)
    if (d < 1) throw ConfigError("fusion_hidden_dims entries must be >= 1");
}

int NetworkConfig::trunk_output_dim() const {
  return trunk_hidden_dims.empty() ? input_dim_per_channel : trunk_hidden_dims.back();
}

int NetworkConfig::fusion_input_dim() const {
  return trunk_output_dim() * static_cast<int>(channels.size());
}

int NetworkConfig::fusion_output_dim() const {
  return fusion_hidden_dims.empty() ? fusion_input_dim() : fusion_hidden_dims.back();
}

NetworkParams NetworkParams::zeros(const NetworkConfig& config) {
  config.validate();
  NetworkParams p;
  p.trunks.resize(config.channels.size());
  for (auto& trunk : p.trunks) {
    int in = config.input_dim_per_channel;
    for (int out : config.trunk_hidden_dims) {
      trunk.emplace_back(in, out);
      in = out;
    }
  }
  int in = config.fusion_input_dim();
  for (int out : config.fusion_hidden_dims) {
    p.fusion.emplace_back(in, out);
    in = out;
  }
  p.embedding = DenseLayer(in, config.embedding_dim);
  p.output = DenseLayer(config.embedding_dim, 1);
  return p;
}

namespace {

template <typename Params, typename Fn>
void visit_tensors(Params& p, Fn&& fn) {
  auto layer = [&](const std::string& prefix, auto& l) {
    fn(prefix + ".weight", l.weight.data(), static_cast<std::size_t>(l.weight.size()));
    fn(prefix + ".bias", l.bias.data(), static_cast<std::size_t>(l.bias.size()));
  };
  for (std::size_t c = 0; c < p.trunks.size(); ++c)
    for (std::size_t l = 0; l < p.trunks[c].size(); ++l)
      layer("trunk" + std::to_string(c) + "." + std::to_string(l), p.trunks[c][l]);
  for (std::size_t l = 0; l < p.fusion.size(); ++l) layer("fusion." + std::to_string(l), p.fusion[l]);
  layer("embedding", p.embedding);
  layer("output", p.output);
}

}  // namespace

void NetworkParams::for_each_tensor(const std::function<void(const std::string&, std::span<double>)>& fn) {
  visit_tensors(*this, [&](const std::string& name, double* data, std::size_t n) { fn(name, {data, n}); });
}

void NetworkParams::for_each_tensor(
    const std::function<void(const std::string&, std::span<const double>)>& fn) const {
  visit_tensors(*this, [&](const std::string& name, const double* data, std::size_t n) { fn(name, {data, n}); });
}

std::size_t NetworkParams::parameter_count() const {
  std::size_t n = 0;
  for_each_tensor([&](const std::string&, std::span<const double> t) { n += t.size(); });
  return n;
}

bool NetworkParams::same_shape(const NetworkParams& other) const {
  std::vector<std::pair<std::string, std::size_t>> a, b;
  for_each_tensor([&](const std::string& name, std::span<const double> t) { a.emplace_back(name, t.size()); });
  other.for_each_tensor([&](const std::string& name, std::span<const double> t) { b.emplace_back(name, t.size()); });
  return a == b;
}

NetworkParams init_network(const NetworkConfig& config) {
  NetworkParams p = NetworkParams::zeros(config);
  std::mt19937_64 rng(config.seed);
  auto fill = [&](DenseLayer& l) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.weight.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    // Row-major draw order so the stream does not depend on Eigen storage.
    for (Eigen::Index r = 0; r < l.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weight.cols(); ++c) l.weight(r, c) = dist(rng);
  };
  for (auto& trunk : p.trunks)
    for (auto& l : trunk) fill(l);
  for (auto& l : p.fusion) fill(l);
  fill(p.embedding);
  fill(p.output);
  return p;
}

namespace {

void activate(Activation a, Eigen::VectorXd& v) {
  if (a == Activation::relu)
    v = v.cwiseMax(0.0);
  else
    v = v.array().tanh();
}

// Derivative expressed through the activation output.
Eigen::VectorXd activation_slope(Activation a, const Eigen::VectorXd& out) {
  if (a == Activation::relu) return (out.array() > 0.0).cast<double>();
  return 1.0 - out.array().square();
}

}  // namespace

ForwardResult forward(const NetworkConfig& config, const NetworkParams& params, const ChannelInputs& input) {
  if (input.size() != config.channels.size())
    throw InputError("expected " + std::to_string(config.channels.size()) + " channels, got " +
                     std::to_string(input.size()));
  ForwardResult r;
  r.trunk_activations.resize(input.size());
  Eigen::VectorXd concat(config.fusion_input_dim());
  Eigen::Index offset = 0;
  for (std::size_t c = 0; c < input.size(); ++c) {
    const auto& x = input[c];
    if (static_cast<int>(x.size()) != config.input_dim_per_channel)
      throw InputError("channel '" + config.channels[c] + "' has " + std::to_string(x.size()) +
                       " values, expected " + std::to_string(config.input_dim_per_channel));
    if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); }))
      throw InputError("channel '" + config.channels[c] + "' contains a non-finite value");
    auto& acts = r.trunk_activations[c];
    acts.emplace_back(Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size())));
    for (const auto& layer : params.trunks[c]) {
      Eigen::VectorXd h = layer.weight * acts.back() + layer.bias;
      activate(config.activation, h);
      acts.push_back(std::move(h));
    }
    concat.segment(offset, acts.back().size()) = acts.back();
    offset += acts.back().size();
  }
  r.fusion_activations.push_back(std::move(concat));
  for (const auto& layer : params.fusion) {
    Eigen::VectorXd h = layer.weight * r.fusion_activations.back() + layer.bias;
    activate(config.activation, h);
    r.fusion_activations.push_back(std::move(h));
  }
  r.embedding = params.embedding.weight * r.fusion_activations.back() + params.embedding.bias;
  const double logit = params.output.weight.row(0).dot(r.embedding) + params.output.bias(0);
  const double p = 1.0 / (1.0 + std::exp(-logit));
  r.probability = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  r.clamped = r.probability != p;
  return r;
}

ParamGradients backward(const NetworkConfig& config, const NetworkParams& params,
                        std::span<const ForwardResult> batch, std::span<const UpstreamGradient> upstream) {
  if (batch.empty()) throw InputError("backward on an empty batch");
  if (batch.size() != upstream.size()) throw InputError("batch and upstream gradient counts differ");
  ParamGradients g = NetworkParams::zeros(config);
  const int trunk_out = config.trunk_output_dim();

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const ForwardResult& fr = batch[i];
    const UpstreamGradient& up = upstream[i];
    if (!std::isfinite(up.d_probability) || (up.d_embedding.size() > 0 && !up.d_embedding.allFinite()))
      throw InputError("non-finite upstream gradient at sample " + std::to_string(i));

    const double p = fr.probability;
    const double d_logit = fr.clamped ? 0.0 : up.d_probability * p * (1.0 - p);
    g.output.weight.row(0) += d_logit * fr.embedding.transpose();
    g.output.bias(0) += d_logit;

    Eigen::VectorXd d_emb = d_logit * params.output.weight.row(0).transpose();
    if (up.d_embedding.size() > 0) {
      if (up.d_embedding.size() != d_emb.size()) throw InputError("embedding gradient has wrong dimension");
      d_emb += up.d_embedding;
    }
    g.embedding.weight += d_emb * fr.fusion_activations.back().transpose();
    g.embedding.bias += d_emb;
    Eigen::VectorXd delta = params.embedding.weight.transpose() * d_emb;

    for (std::size_t l = params.fusion.size(); l-- > 0;) {
      delta = delta.cwiseProduct(activation_slope(config.activation, fr.fusion_activations[l + 1]));
      g.fusion[l].weight += delta * fr.fusion_activations[l].transpose();
      g.fusion[l].bias += delta;
      delta = params.fusion[l].weight.transpose() * delta;
    }

    for (std::size_t c = 0; c < params.trunks.size(); ++c) {
      Eigen::VectorXd d = delta.segment(static_cast<Eigen::Index>(c) * trunk_out, trunk_out);
      const auto& acts = fr.trunk_activations[c];
      for (std::size_t l = params.trunks[c].size(); l-- > 0;) {
        d = d.cwiseProduct(activation_slope(config.activation, acts[l + 1]));
        g.trunks[c][l].weight += d * acts[l].transpose();
        g.trunks[c][l].bias += d;
        if (l > 0) d = params.trunks[c][l].weight.transpose() * d;
      }
    }
  }
  return g;
}

AdamState AdamState::for_params(const NetworkConfig& config) {
  return AdamState{NetworkParams::zeros(config), NetworkParams::zeros(config), 0};
}

void adam_step(NetworkParams& params, const ParamGradients& gradients, AdamState& state, double lr,
               double weight_decay, const AdamHyper& hyper) {
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be non-negative");
  if (!params.same_shape(gradients) || !params.same_shape(state.first_moment) ||
      !params.same_shape(state.second_moment))
    throw InputError("optimizer state does not match parameter shapes");

  std::vector<std::span<const double>> grads;
  gradients.for_each_tensor([&](const std::string& name, std::span<const double> t) {
    for (double v : t)
      if (!std::isfinite(v)) throw TrainingError("non-finite gradient in " + name);
    grads.push_back(t);
  });
  std::vector<std::span<double>> m, v;
  state.first_moment.for_each_tensor([&](const std::string&, std::span<double> t) { m.push_back(t); });
  state.second_moment.for_each_tensor([&](const std::string&, std::span<double> t) { v.push_back(t); });

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bias1 = 1.0 - std::pow(hyper.beta1, t);
  const double bias2 = 1.0 - std::pow(hyper.beta2, t);
  const double decay = 1.0 - lr * weight_decay;

  std::size_t k = 0;
  params.for_each_tensor([&](const std::string&, std::span<double> w) {
    auto g = grads[k];
    auto mk = m[k];
    auto vk = v[k];
    for (std::size_t j = 0; j < w.size(); ++j) {
      mk[j] = hyper.beta1 * mk[j] + (1.0 - hyper.beta1) * g[j];
      vk[j] = hyper.beta2 * vk[j] + (1.0 - hyper.beta2) * g[j] * g[j];
      const double m_hat = mk[j] / bias1;
      const double v_hat = vk[j] / bias2;
      w[j] = w[j] * decay - lr * m_hat / (std::sqrt(v_hat) + hyper.epsilon);
    }
    ++k;
  });
}

double gradient_check(const NetworkParams& params, const LossClosure& loss, double h,
                      std::size_t max_coordinates, std::uint64_t seed) {
  if (!(h > 0.0)) throw InputError("finite-difference step must be positive");
  const LossAndGradient analytic = loss(params);

  std::vector<double> flat_grad;
  analytic.gradient.for_each_tensor(
      [&](const std::string&, std::span<const double> t) { flat_grad.insert(flat_grad.end(), t.begin(), t.end()); });

  NetworkParams probe = params;
  std::vector<double*> coords;
  probe.for_each_tensor([&](const std::string&, std::span<double> t) {
    for (double& x : t) coords.push_back(&x);
  });
  if (coords.size() != flat_grad.size()) throw InputError("gradient shape does not match parameters");

  std::vector<std::size_t> order(coords.size());
  std::iota(order.begin(), order.end(), 0);
  if (order.size() > max_coordinates) {
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    order.resize(max_coordinates);
    std::sort(order.begin(), order.end());
  }

  double worst = 0.0;
  for (std::size_t idx : order) {
    double* x = coords[idx];
    const double saved = *x;
    *x = saved + h;
    const double plus = loss(probe).loss;
    *x = saved - h;
    const double minus = loss(probe).loss;
    *x = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double a = flat_grad[idx];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace ocpad
