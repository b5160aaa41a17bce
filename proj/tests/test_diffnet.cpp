#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "ocpad/diffnet.hpp"
#include "ocpad/error.hpp"
#include "ocpad/pipeline.hpp"

using namespace ocpad;

namespace {

NetworkConfig small_config(std::uint64_t seed, Activation a = Activation::tanh) {
  NetworkConfig cfg;
  cfg.channels = {"color", "depth"};
  cfg.input_dim_per_channel = 3;
  cfg.trunk_hidden_dims = {4};
  cfg.fusion_hidden_dims = {5};
  cfg.embedding_dim = 10;
  cfg.activation = a;
  cfg.seed = seed;
  return cfg;
}

std::vector<std::vector<double>> random_input(const NetworkConfig& cfg, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<std::vector<double>> in(cfg.channels.size(), std::vector<double>(cfg.input_dim_per_channel));
  for (auto& ch : in)
    for (double& v : ch) v = n(rng);
  return in;
}

ChannelInputs view(const std::vector<std::vector<double>>& in) {
  ChannelInputs v;
  for (const auto& c : in) v.emplace_back(c);
  return v;
}

std::vector<std::vector<double>> flat_params(const NetworkParams& p) {
  std::vector<std::vector<double>> out;
  p.for_each_tensor([&](const std::string&, std::span<const double> t) { out.emplace_back(t.begin(), t.end()); });
  return out;
}

}  // namespace

TEST_CASE("init_network is deterministic for a fixed seed") {
  const auto cfg = small_config(42);
  CHECK(flat_params(init_network(cfg)) == flat_params(init_network(cfg)));
  CHECK(flat_params(init_network(cfg)) != flat_params(init_network(small_config(43))));
}

TEST_CASE("init_network shapes follow the config") {
  const auto p = init_network(small_config(1));
  CHECK(p.trunks.size() == 2);
  CHECK(p.output.weight.rows() == 1);
  CHECK(p.output.weight.cols() == 10);
  CHECK(p.embedding.weight.rows() == 10);
  CHECK(p.fusion.front().weight.cols() == 8);
  CHECK(p.output.bias(0) == 0.0);
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  CHECK(p.trunks[0][0].weight.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(3.0));
}

TEST_CASE("invalid dimensions are configuration errors") {
  auto cfg = small_config(1);
  cfg.trunk_hidden_dims = {0};
  CHECK_THROWS_AS(init_network(cfg), ConfigError);
  cfg = small_config(1);
  cfg.embedding_dim = 0;
  CHECK_THROWS_AS(init_network(cfg), ConfigError);
  cfg = small_config(1);
  cfg.channels.clear();
  CHECK_THROWS_AS(init_network(cfg), ConfigError);
}

TEST_CASE("all-zero network outputs probability one half and a zero embedding") {
  const auto cfg = small_config(3, Activation::relu);
  const auto p = NetworkParams::zeros(cfg);
  std::mt19937_64 rng(5);
  const auto in = random_input(cfg, rng);
  const auto r = forward(cfg, p, view(in));
  CHECK(r.probability == 0.5);
  CHECK(r.embedding.isZero(0.0));
}

TEST_CASE("forward matches the straight-line oracle") {
  std::mt19937_64 rng(11);
  for (auto act : {Activation::relu, Activation::tanh}) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      const auto cfg = small_config(seed, act);
      const auto p = init_network(cfg);
      const auto in = random_input(cfg, rng);
      const auto r = forward(cfg, p, view(in));
      const auto o = oracle::straight_forward(cfg, p, in);
      CHECK(r.probability == doctest::Approx(o.probability).epsilon(1e-12));
      for (int i = 0; i < cfg.embedding_dim; ++i) CHECK(std::abs(r.embedding(i) - o.embedding[i]) < 1e-12);
    }
  }
}

TEST_CASE("forward is a pure function") {
  const auto cfg = small_config(9);
  const auto p = init_network(cfg);
  std::mt19937_64 rng(1);
  const auto in = random_input(cfg, rng);
  const auto a = forward(cfg, p, view(in));
  const auto b = forward(cfg, p, view(in));
  CHECK(a.probability == b.probability);
  CHECK(a.embedding == b.embedding);
}

TEST_CASE("forward rejects malformed input") {
  const auto cfg = small_config(1);
  const auto p = init_network(cfg);
  std::vector<std::vector<double>> in{{1, 2, 3}, {1, 2}};
  CHECK_THROWS_AS(forward(cfg, p, view(in)), InputError);
  in = {{1, 2, 3}};
  CHECK_THROWS_AS(forward(cfg, p, view(in)), InputError);
  in = {{1, 2, 3}, {1, NAN, 3}};
  CHECK_THROWS_AS(forward(cfg, p, view(in)), InputError);
}

TEST_CASE("probability stays inside the clamp even for saturated nets") {
  const auto cfg = small_config(2);
  auto p = init_network(cfg);
  p.output.weight *= 1e6;
  std::mt19937_64 rng(2);
  for (int i = 0; i < 50; ++i) {
    const auto in = random_input(cfg, rng);
    const double prob = forward(cfg, p, view(in)).probability;
    CHECK(prob >= kProbabilityEpsilon);
    CHECK(prob <= 1.0 - kProbabilityEpsilon);
  }
}

TEST_CASE("backward with zero upstream gradients gives zero gradients") {
  const auto cfg = small_config(4);
  const auto p = init_network(cfg);
  std::mt19937_64 rng(4);
  std::vector<ForwardResult> batch;
  std::vector<std::vector<std::vector<double>>> inputs;
  for (int i = 0; i < 3; ++i) {
    inputs.push_back(random_input(cfg, rng));
    batch.push_back(forward(cfg, p, view(inputs.back())));
  }
  std::vector<UpstreamGradient> up(3);
  const auto g = backward(cfg, p, batch, up);
  g.for_each_tensor([](const std::string&, std::span<const double> t) {
    for (double v : t) CHECK(v == 0.0);
  });
  CHECK_THROWS_AS(backward(cfg, p, std::span<const ForwardResult>{}, std::span<const UpstreamGradient>{}), InputError);
}

TEST_CASE("linear net with squared loss has the closed-form gradient 2(w.x - y)x") {
  NetworkConfig cfg;
  cfg.channels = {"x"};
  cfg.input_dim_per_channel = 3;
  cfg.embedding_dim = 1;
  auto p = NetworkParams::zeros(cfg);
  p.embedding.weight << 0.5, -1.0, 2.0;
  const std::vector<std::vector<double>> in{{1.0, 2.0, -0.5}};
  const double y = 0.25;
  const auto fr = forward(cfg, p, view(in));
  const double wx = 0.5 * 1.0 - 1.0 * 2.0 + 2.0 * -0.5;  // -2.5
  REQUIRE(fr.embedding(0) == doctest::Approx(wx));
  UpstreamGradient up;
  up.d_embedding = Eigen::VectorXd::Constant(1, 2.0 * (fr.embedding(0) - y));
  const auto g = backward(cfg, p, std::span(&fr, 1), std::span(&up, 1));
  for (int j = 0; j < 3; ++j) CHECK(g.embedding.weight(0, j) == doctest::Approx(2.0 * (wx - y) * in[0][j]));
  CHECK(g.embedding.bias(0) == doctest::Approx(2.0 * (wx - y)));
}

TEST_CASE("gradient_check on a linear net with squared loss") {
  NetworkConfig cfg;
  cfg.channels = {"x"};
  cfg.input_dim_per_channel = 4;
  cfg.embedding_dim = 2;
  cfg.seed = 8;
  const auto params = init_network(cfg);
  const std::vector<std::vector<double>> in{{0.3, -1.2, 0.7, 2.0}};
  const Eigen::Vector2d target(0.5, -0.25);
  auto closure = [&](const NetworkParams& p) {
    const auto fr = forward(cfg, p, view(in));
    const Eigen::VectorXd r = fr.embedding - target;
    UpstreamGradient up;
    up.d_embedding = 2.0 * r;
    return LossAndGradient{r.squaredNorm(), backward(cfg, p, std::span(&fr, 1), std::span(&up, 1))};
  };
  CHECK(gradient_check(params, closure, 1e-5) < 1e-7);
  CHECK_THROWS_AS(gradient_check(params, closure, 0.0), InputError);
}

TEST_CASE("combined objective gradient matches finite differences") {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto cfg = small_config(100 + seed);
    const auto params = init_network(cfg);
    std::vector<std::vector<std::vector<double>>> raw;
    std::vector<Label> labels;
    for (int i = 0; i < 6; ++i) {
      raw.push_back(random_input(cfg, rng));
      labels.push_back(i % 2 ? Label::attack : Label::bonafide);
    }
    std::vector<ChannelInputs> inputs;
    for (const auto& r : raw) inputs.push_back(view(r));
    BonafideCenter c{forward(cfg, params, inputs[0]).embedding * 0.5, 0.5, true};
    LossConfig loss;
    loss.lambda = 0.5;
    loss.margin = 1.5;
    auto closure = [&](const NetworkParams& p) {
      auto obj = combined_objective(cfg, p, inputs, labels, c, loss);
      return LossAndGradient{obj.loss, std::move(obj.gradient)};
    };
    CHECK(gradient_check(params, closure, 1e-5) < 1e-4);
  }
}

TEST_CASE("adam: zero gradient and zero decay leave parameters unchanged") {
  const auto cfg = small_config(5);
  auto p = init_network(cfg);
  const auto before = flat_params(p);
  auto state = AdamState::for_params(cfg);
  adam_step(p, NetworkParams::zeros(cfg), state, 1e-3, 0.0);
  CHECK(flat_params(p) == before);
}

TEST_CASE("adam: the first step moves each coordinate by about lr against the gradient sign") {
  NetworkConfig cfg;
  cfg.channels = {"x"};
  cfg.input_dim_per_channel = 1;
  cfg.embedding_dim = 1;
  auto p = NetworkParams::zeros(cfg);
  p.output.bias(0) = 1.0;
  auto g = NetworkParams::zeros(cfg);
  g.output.bias(0) = 0.37;
  g.embedding.bias(0) = -2.0;
  auto state = AdamState::for_params(cfg);
  const double lr = 1e-3;
  adam_step(p, g, state, lr, 0.0);
  // m_hat = g, v_hat = g^2  =>  step = lr * g / (|g| + 1e-8)
  CHECK(p.output.bias(0) == doctest::Approx(1.0 - lr * 0.37 / (0.37 + 1e-8)).epsilon(1e-14));
  CHECK(p.embedding.bias(0) == doctest::Approx(lr * 2.0 / (2.0 + 1e-8)).epsilon(1e-14));
  CHECK(state.step == 1);
}

TEST_CASE("adam: lr = 0 leaves parameters unchanged") {
  const auto cfg = small_config(6);
  auto p = init_network(cfg);
  const auto before = flat_params(p);
  auto g = init_network(small_config(7));
  auto state = AdamState::for_params(cfg);
  adam_step(p, g, state, 0.0, 1e-5);
  CHECK(flat_params(p) == before);
}

TEST_CASE("adam: decoupled weight decay shrinks before the step") {
  NetworkConfig cfg;
  cfg.channels = {"x"};
  cfg.input_dim_per_channel = 1;
  cfg.embedding_dim = 1;
  auto p = NetworkParams::zeros(cfg);
  p.embedding.weight(0, 0) = 2.0;
  auto state = AdamState::for_params(cfg);
  adam_step(p, NetworkParams::zeros(cfg), state, 0.1, 0.5);
  CHECK(p.embedding.weight(0, 0) == doctest::Approx(2.0 * (1.0 - 0.05)));
}

TEST_CASE("adam: non-finite gradients name the tensor") {
  const auto cfg = small_config(5);
  auto p = init_network(cfg);
  auto g = NetworkParams::zeros(cfg);
  g.fusion[0].bias(1) = INFINITY;
  auto state = AdamState::for_params(cfg);
  try {
    adam_step(p, g, state, 1e-3, 0.0);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    CHECK(std::string(e.what()).find("fusion.0.bias") != std::string::npos);
  }
}
