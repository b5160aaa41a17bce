#include "ocpad/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <unordered_map>

#include "ocpad/error.hpp"
#include "ocpad/serialization.hpp"

namespace ocpad {

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
  if (!(mad_k >= 0.0)) throw ConfigError("mad_k must be non-negative");
  loss.validate();
  if (channel_subset && channel_subset->empty()) throw ConfigError("channel subset is empty");
}

NetworkConfig TrainConfig::resolve_network(const Dataset& data) const {
  NetworkConfig net = network;
  net.seed = seed;
  net.channels.clear();
  if (channel_subset) {
    for (const auto& name : *channel_subset) {
      if (!data.channel(name)) throw ConfigError("channel '" + name + "' is not in the dataset");
      if (std::find(net.channels.begin(), net.channels.end(), name) != net.channels.end())
        throw ConfigError("channel '" + name + "' listed twice");
      net.channels.push_back(name);
    }
  } else {
    for (const auto& c : data.channels) net.channels.push_back(c.name);
  }
  if (net.channels.empty()) throw ConfigError("dataset has no channels");
  const int dim = data.channel(net.channels.front())->dim;
  for (const auto& name : net.channels)
    if (data.channel(name)->dim != dim)
      throw ConfigError("selected channels must share one dimension; '" + name + "' differs");
  net.input_dim_per_channel = dim;
  net.validate();
  return net;
}

namespace {

std::unordered_map<std::int64_t, std::size_t> index_by_id(const Dataset& data) {
  std::unordered_map<std::int64_t, std::size_t> index;
  index.reserve(data.samples.size());
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (!index.emplace(data.samples[i].id, i).second)
      throw InputError("duplicate sample id " + std::to_string(data.samples[i].id));
  return index;
}

}  // namespace

PreparedInputs::PreparedInputs(const NetworkConfig& network, double mad_k, const Dataset& data,
                               std::span<const std::int64_t> ids) {
  const auto index = index_by_id(data);
  rows_.reserve(ids.size());
  for (std::int64_t id : ids) {
    auto it = index.find(id);
    if (it == index.end()) throw InputError("unknown sample id " + std::to_string(id));
    const Sample& s = data.samples[it->second];
    std::vector<std::vector<double>> row;
    row.reserve(network.channels.size());
    for (const auto& name : network.channels) {
      auto ch = s.channels.find(name);
      if (ch == s.channels.end()) throw InputError("sample " + std::to_string(id) + " lacks channel '" + name + "'");
      if (static_cast<int>(ch->second.size()) != network.input_dim_per_channel)
        throw InputError("sample " + std::to_string(id) + ": channel '" + name + "' has wrong dimension");
      if (mad_k > 0.0) {
        std::vector<double> v = mad_normalize(ch->second, mad_k);
        for (double& x : v) x = (x - 128.0) / 128.0;
        row.push_back(std::move(v));
      } else {
        row.push_back(ch->second);
      }
    }
    rows_.push_back(std::move(row));
    labels_.push_back(s.label);
    ids_.push_back(id);
  }
}

ChannelInputs PreparedInputs::at(std::size_t i) const {
  ChannelInputs in;
  in.reserve(rows_[i].size());
  for (const auto& v : rows_[i]) in.emplace_back(v);
  return in;
}

namespace {

struct SetLoss {
  double loss = 0.0;
  double spread = 0.0;  // over bonafide only
};

// Mean combined loss of a fold under a frozen center.
SetLoss fold_loss(const NetworkConfig& net, const NetworkParams& params, const BonafideCenter& center,
                  const LossConfig& loss_cfg, const PreparedInputs& inputs) {
  SetLoss out;
  std::size_t bonafide = 0;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const ForwardResult fr = forward(net, params, inputs.at(i));
    const double bce = bce_loss(fr.probability, inputs.label(i)).loss;
    const double occl = center.initialized ? occl_loss(fr.embedding, center, inputs.label(i), loss_cfg.margin).loss : 0.0;
    out.loss += combined_loss(bce, occl, loss_cfg.lambda);
    if (inputs.label(i) == Label::bonafide && center.initialized) {
      out.spread += distance_to_center(fr.embedding, center);
      ++bonafide;
    }
  }
  if (inputs.size() > 0) out.loss /= static_cast<double>(inputs.size());
  if (bonafide > 0) out.spread /= static_cast<double>(bonafide);
  return out;
}

BonafideCenter reference_center(const NetworkConfig& net, const NetworkParams& params, const PreparedInputs& inputs,
                                double alpha) {
  std::vector<Eigen::VectorXd> emb;
  for (std::size_t i = 0; i < inputs.size(); ++i)
    if (inputs.label(i) == Label::bonafide) emb.push_back(forward(net, params, inputs.at(i)).embedding);
  BonafideCenter c{Eigen::VectorXd::Zero(net.embedding_dim), alpha, false};
  return update_center(c, emb);
}

}  // namespace

BatchObjective combined_objective(const NetworkConfig& net, const NetworkParams& params,
                                  std::span<const ChannelInputs> inputs, std::span<const Label> labels,
                                  const BonafideCenter& center, const LossConfig& loss) {
  if (inputs.empty()) throw InputError("empty batch");
  if (inputs.size() != labels.size()) throw InputError("inputs and labels differ in length");
  const double inv_b = 1.0 / static_cast<double>(inputs.size());
  const bool one_class = center.initialized && loss.lambda != 0.0;

  BatchObjective obj;
  obj.forward.reserve(inputs.size());
  std::vector<UpstreamGradient> up(inputs.size());
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    obj.forward.push_back(forward(net, params, inputs[k]));
    const ForwardResult& fr = obj.forward.back();
    const ScalarLoss bce = bce_loss(fr.probability, labels[k]);
    up[k].d_probability = (1.0 - loss.lambda) * bce.d_probability * inv_b;
    double occl = 0.0;
    if (one_class) {
      const EmbeddingLoss o = occl_loss(fr.embedding, center, labels[k], loss.margin);
      occl = o.loss;
      up[k].d_embedding = loss.lambda * inv_b * o.d_embedding;
    }
    obj.loss += combined_loss(bce.loss, occl, loss.lambda);
  }
  obj.loss *= inv_b;
  obj.gradient = backward(net, params, obj.forward, up);
  return obj;
}

Checkpoint train(const ProtocolSplit& split, const Dataset& data, const TrainConfig& cfg) {
  cfg.validate();
  const NetworkConfig net = cfg.resolve_network(data);
  const PreparedInputs train_in(net, cfg.mad_k, data, split.train);
  const PreparedInputs dev_in(net, cfg.mad_k, data, split.dev);

  std::size_t n_bonafide = 0;
  for (std::size_t i = 0; i < train_in.size(); ++i) n_bonafide += train_in.label(i) == Label::bonafide;
  if (n_bonafide == 0 || n_bonafide == train_in.size())
    throw TrainingError("train fold must contain both bonafide and attack samples");

  NetworkParams params = init_network(net);
  AdamState adam = AdamState::for_params(net);
  BonafideCenter center{Eigen::VectorXd::Zero(net.embedding_dim), cfg.loss.alpha, false};

  Checkpoint best;
  best.network = net;
  best.train = cfg;

  {
    const BonafideCenter ref = reference_center(net, params, train_in, cfg.loss.alpha);
    EpochRecord rec;
    rec.epoch = 0;
    const SetLoss on_train = fold_loss(net, params, ref, cfg.loss, train_in);
    rec.train_loss = on_train.loss;
    rec.bonafide_spread = on_train.spread;
    rec.dev_loss = fold_loss(net, params, ref, cfg.loss, dev_in).loss;
    best.history.push_back(rec);
    best.params = params;
    best.center = ref;
    best.selected_epoch = 0;
  }
  double best_dev = best.history.front().dev_loss;

  std::vector<std::size_t> order(train_in.size());
  std::size_t batch_index = 0;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(cfg.seed ^ static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(order[i - 1], order[pick(rng)]);
    }

    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size), ++batch_index) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<ChannelInputs> inputs;
      std::vector<Label> labels;
      for (std::size_t k = start; k < end; ++k) {
        inputs.push_back(train_in.at(order[k]));
        labels.push_back(train_in.label(order[k]));
      }
      // The center starts at the first bonafide batch mean.
      if (!center.initialized) {
        std::vector<Eigen::VectorXd> first;
        for (std::size_t k = 0; k < inputs.size(); ++k)
          if (labels[k] == Label::bonafide) first.push_back(forward(net, params, inputs[k]).embedding);
        center = update_center(center, first);
      }

      BatchObjective obj = combined_objective(net, params, inputs, labels, center, cfg.loss);
      if (!std::isfinite(obj.loss))
        throw TrainingError("non-finite loss at batch " + std::to_string(batch_index) + " (epoch " +
                            std::to_string(epoch) + ")");
      adam_step(params, obj.gradient, adam, cfg.lr, cfg.weight_decay);

      std::vector<Eigen::VectorXd> bonafide_emb;
      for (std::size_t k = 0; k < labels.size(); ++k)
        if (labels[k] == Label::bonafide) bonafide_emb.push_back(std::move(obj.forward[k].embedding));
      center = update_center(center, bonafide_emb);

      const double batch_loss = obj.loss;
      epoch_loss += batch_loss;
      ++batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = epoch_loss / static_cast<double>(batches);
    rec.dev_loss = fold_loss(net, params, center, cfg.loss, dev_in).loss;
    rec.bonafide_spread = fold_loss(net, params, center, cfg.loss, train_in).spread;
    best.history.push_back(rec);
    if (rec.dev_loss < best_dev) {
      best_dev = rec.dev_loss;
      best.params = params;
      best.center = center;
      best.selected_epoch = epoch;
    }
  }
  return best;
}

std::vector<std::int64_t> all_sample_ids(const Dataset& data) {
  std::vector<std::int64_t> ids;
  ids.reserve(data.samples.size());
  for (const auto& s : data.samples) ids.push_back(s.id);
  return ids;
}

std::vector<std::pair<std::int64_t, Eigen::VectorXd>> extract_embeddings(const Checkpoint& ckpt, const Dataset& data,
                                                                         std::span<const std::int64_t> ids) {
  const PreparedInputs in(ckpt.network, ckpt.train.mad_k, data, ids);
  std::vector<std::pair<std::int64_t, Eigen::VectorXd>> out;
  out.reserve(in.size());
  for (std::size_t i = 0; i < in.size(); ++i)
    out.emplace_back(in.id(i), forward(ckpt.network, ckpt.params, in.at(i)).embedding);
  return out;
}

EmResult fit_one_class(const Checkpoint& ckpt, const ProtocolSplit& split, const Dataset& data, const EmConfig& em) {
  const auto index = index_by_id(data);
  std::vector<std::int64_t> bonafide;
  for (std::int64_t id : split.train) {
    auto it = index.find(id);
    if (it == index.end()) throw InputError("unknown sample id " + std::to_string(id));
    if (data.samples[it->second].label == Label::bonafide) bonafide.push_back(id);
  }
  std::vector<Eigen::VectorXd> emb;
  for (auto& [id, e] : extract_embeddings(ckpt, data, bonafide)) emb.push_back(std::move(e));
  return fit_em(emb, em);
}

namespace {

ScoredSet score_fold(const Checkpoint& ckpt, const Dataset& data, std::span<const std::int64_t> ids,
                     const GmmScorer* gmm) {
  const PreparedInputs in(ckpt.network, ckpt.train.mad_k, data, ids);
  ScoredSet set;
  for (std::size_t i = 0; i < in.size(); ++i) {
    const ForwardResult fr = forward(ckpt.network, ckpt.params, in.at(i));
    set.scores.push_back(gmm ? gmm->log_likelihood(fr.embedding) : fr.probability);
    set.labels.push_back(in.label(i));
  }
  return set;
}

}  // namespace

MetricsReport evaluate_scores(const ScoredSet& dev, const ScoredSet& eval, double target_bpcer) {
  MetricsReport r;
  r.target_bpcer = target_bpcer;
  r.threshold = select_threshold(dev, target_bpcer);
  r.dev = compute_rates(dev, r.threshold);
  r.eval = compute_rates(eval, r.threshold);
  const EerResult e = equal_error_rate(eval);
  r.eer = e.eer;
  r.eer_threshold = e.threshold;
  r.det = det_points(eval);
  return r;
}

MetricsReport evaluate(const Checkpoint& ckpt, const GmmParams& gmm, const ProtocolSplit& split, const Dataset& data,
                       double target_bpcer) {
  const GmmScorer scorer(gmm);
  MetricsReport r = evaluate_scores(score_fold(ckpt, data, split.dev, &scorer),
                                    score_fold(ckpt, data, split.eval, &scorer), target_bpcer);
  r.protocol = split.name;
  r.scorer = "gmm";
  return r;
}

MetricsReport evaluate_probability(const Checkpoint& ckpt, const ProtocolSplit& split, const Dataset& data,
                                   double target_bpcer) {
  MetricsReport r = evaluate_scores(score_fold(ckpt, data, split.dev, nullptr),
                                    score_fold(ckpt, data, split.eval, nullptr), target_bpcer);
  r.protocol = split.name;
  r.scorer = "probability";
  return r;
}

RunArtifacts run_protocol(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const Dataset data = generate_synthetic(cfg.generator);
  const ProtocolSplit split = split_protocol(data, ProtocolSpec::parse(cfg.protocol), cfg.split_seed);
  const Checkpoint ckpt = train(split, data, cfg.train);
  const EmResult em = fit_one_class(ckpt, split, data, cfg.em);

  RunArtifacts out;
  out.report = evaluate(ckpt, em.gmm, split, data, cfg.target_bpcer);

  auto emit = [&](const char* name, const std::string& contents) {
    const auto path = out_dir / name;
    write_text_file(path, contents);
    out.files.push_back(path);
  };
  emit("data.ocds", format_dataset(data));
  emit("model.ocnn", encode_checkpoint(ckpt));
  emit("model.ocgm", encode_gmm(em.gmm));
  emit("embeddings.csv", format_embeddings_csv(extract_embeddings(ckpt, data, all_sample_ids(data))));
  emit("det.csv", format_det_csv(out.report.det));
  emit("report.json", to_json(out.report).dump(2) + "\n");
  emit("report.txt", format_report_table(out.report));
  return out;
}

}  // namespace ocpad
