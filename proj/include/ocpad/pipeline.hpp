#pragma once

// End-to-end training and evaluation: mini-batch training with the combined
// objective and bonafide-center updates, dev-loss model selection, embedding
// extraction, one-class GMM fitting and ISO-style evaluation.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocpad/diffnet.hpp"
#include "ocpad/gmm.hpp"
#include "ocpad/losses.hpp"
#include "ocpad/metrics.hpp"
#include "ocpad/protocol.hpp"

namespace ocpad {

struct TrainConfig {
  int epochs = 50;
  int batch_size = 32;
  double lr = 1e-4;
  double weight_decay = 1e-5;
  LossConfig loss;
  /// Hidden sizes, embedding size and activation. Channels, input size and
  /// seed are filled in by resolve_network().
  NetworkConfig network;
  std::uint64_t seed = 0;
  std::optional<std::vector<std::string>> channel_subset;
  /// Per-channel MAD normalization factor; 0 feeds raw values.
  double mad_k = 0.0;

  void validate() const;
  /// Network config bound to the dataset's channels (or the subset).
  NetworkConfig resolve_network(const Dataset& data) const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
  double bonafide_spread = 0.0;  // mean distance of train bonafide embeddings to the center
};

struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  NetworkConfig network;
  NetworkParams params;
  BonafideCenter center;
  TrainConfig train;
  std::vector<EpochRecord> history;
  int selected_epoch = 0;
};

/// Network inputs for a sample set, preprocessed once and held as owned
/// vectors. Only the configured channels are read.
class PreparedInputs {
 public:
  PreparedInputs(const NetworkConfig& network, double mad_k, const Dataset& data, std::span<const std::int64_t> ids);

  std::size_t size() const { return rows_.size(); }
  ChannelInputs at(std::size_t i) const;
  Label label(std::size_t i) const { return labels_[i]; }
  std::int64_t id(std::size_t i) const { return ids_[i]; }

 private:
  std::vector<std::vector<std::vector<double>>> rows_;
  std::vector<Label> labels_;
  std::vector<std::int64_t> ids_;
};

struct BatchObjective {
  double loss = 0.0;  // mean combined loss over the batch
  ParamGradients gradient;
  std::vector<ForwardResult> forward;
};

/// Mean over the batch of (1 - lambda) BCE + lambda OCCL and its gradient.
/// The one-class term is skipped while `center` is uninitialized.
BatchObjective combined_objective(const NetworkConfig& net, const NetworkParams& params,
                                  std::span<const ChannelInputs> inputs, std::span<const Label> labels,
                                  const BonafideCenter& center, const LossConfig& loss);

/// Throws TrainingError when the train fold lacks a class or a batch loss is
/// non-finite.
Checkpoint train(const ProtocolSplit& split, const Dataset& data, const TrainConfig& cfg);

std::vector<std::int64_t> all_sample_ids(const Dataset& data);

/// Embeddings in the order of `ids`.
std::vector<std::pair<std::int64_t, Eigen::VectorXd>> extract_embeddings(const Checkpoint& ckpt, const Dataset& data,
                                                                         std::span<const std::int64_t> ids);

/// Fits on the bonafide samples of the train fold only.
EmResult fit_one_class(const Checkpoint& ckpt, const ProtocolSplit& split, const Dataset& data, const EmConfig& em);

struct MetricsReport {
  std::string protocol;
  std::string scorer;  // "gmm" or "probability"
  double target_bpcer = 0.01;
  double threshold = 0.0;
  ErrorRates dev;
  ErrorRates eval;
  double eer = 0.0;
  double eer_threshold = 0.0;
  std::vector<DetPoint> det;  // eval set
};

/// Scores dev and eval by GMM log-likelihood, picks the threshold on dev.
MetricsReport evaluate(const Checkpoint& ckpt, const GmmParams& gmm, const ProtocolSplit& split, const Dataset& data,
                       double target_bpcer = 0.01);

/// Same protocol, but scores by the network's output probability.
MetricsReport evaluate_probability(const Checkpoint& ckpt, const ProtocolSplit& split, const Dataset& data,
                                   double target_bpcer = 0.01);

MetricsReport evaluate_scores(const ScoredSet& dev, const ScoredSet& eval, double target_bpcer);

/// Everything `run-protocol` needs.
struct RunConfig {
  GeneratorConfig generator;
  TrainConfig train;
  EmConfig em;
  std::string protocol = "grandtest";
  std::uint64_t split_seed = 0;
  double target_bpcer = 0.01;
};

struct RunArtifacts {
  std::vector<std::filesystem::path> files;
  MetricsReport report;
};

/// generate -> train -> fit GMM -> evaluate, writing dataset, checkpoint,
/// GMM, embeddings CSV, DET CSV, report JSON and report table into `out_dir`.
RunArtifacts run_protocol(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace ocpad
