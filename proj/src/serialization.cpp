#include "ocpad/serialization.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <initializer_list>
#include <sstream>

#include "ocpad/error.hpp"

namespace ocpad {

// --- config JSON ---------------------------------------------------------------

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw ConfigError(where + ": unknown key '" + key + "'");
  }
}

template <typename Fn>
auto config_guard(const std::string& where, Fn&& fn) {
  try {
    return fn();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

}  // namespace

nlohmann::json to_json(const NetworkConfig& cfg) {
  return {{"channels", cfg.channels},
          {"input_dim_per_channel", cfg.input_dim_per_channel},
          {"trunk_hidden_dims", cfg.trunk_hidden_dims},
          {"fusion_hidden_dims", cfg.fusion_hidden_dims},
          {"embedding_dim", cfg.embedding_dim},
          {"activation", std::string(to_string(cfg.activation))},
          {"seed", cfg.seed}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  return config_guard("network config", [&] {
    check_keys(j,
               {"channels", "input_dim_per_channel", "trunk_hidden_dims", "fusion_hidden_dims", "embedding_dim",
                "activation", "seed"},
               "network config");
    NetworkConfig cfg;
    cfg.channels = j.value("channels", cfg.channels);
    cfg.input_dim_per_channel = j.value("input_dim_per_channel", cfg.input_dim_per_channel);
    cfg.trunk_hidden_dims = j.value("trunk_hidden_dims", cfg.trunk_hidden_dims);
    cfg.fusion_hidden_dims = j.value("fusion_hidden_dims", cfg.fusion_hidden_dims);
    cfg.embedding_dim = j.value("embedding_dim", cfg.embedding_dim);
    cfg.activation = parse_activation(j.value("activation", std::string("relu")));
    cfg.seed = j.value("seed", cfg.seed);
    return cfg;
  });
}

nlohmann::json to_json(const TrainConfig& cfg) {
  nlohmann::json j = {{"epochs", cfg.epochs},
                      {"batch_size", cfg.batch_size},
                      {"lr", cfg.lr},
                      {"weight_decay", cfg.weight_decay},
                      {"seed", cfg.seed},
                      {"lambda", cfg.loss.lambda},
                      {"margin", cfg.loss.margin},
                      {"alpha", cfg.loss.alpha},
                      {"mad_k", cfg.mad_k},
                      {"network",
                       {{"trunk_hidden_dims", cfg.network.trunk_hidden_dims},
                        {"fusion_hidden_dims", cfg.network.fusion_hidden_dims},
                        {"embedding_dim", cfg.network.embedding_dim},
                        {"activation", std::string(to_string(cfg.network.activation))}}}};
  j["channels"] = cfg.channel_subset ? nlohmann::json(*cfg.channel_subset) : nlohmann::json(nullptr);
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  return config_guard("train config", [&] {
    check_keys(j,
               {"epochs", "batch_size", "lr", "weight_decay", "seed", "lambda", "margin", "alpha", "mad_k", "network",
                "channels"},
               "train config");
    TrainConfig cfg;
    cfg.epochs = j.value("epochs", cfg.epochs);
    cfg.batch_size = j.value("batch_size", cfg.batch_size);
    cfg.lr = j.value("lr", cfg.lr);
    cfg.weight_decay = j.value("weight_decay", cfg.weight_decay);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.loss.lambda = j.value("lambda", cfg.loss.lambda);
    cfg.loss.margin = j.value("margin", cfg.loss.margin);
    cfg.loss.alpha = j.value("alpha", cfg.loss.alpha);
    cfg.mad_k = j.value("mad_k", cfg.mad_k);
    if (j.contains("network")) cfg.network = network_config_from_json(j.at("network"));
    if (j.contains("channels") && !j.at("channels").is_null())
      cfg.channel_subset = j.at("channels").get<std::vector<std::string>>();
    cfg.validate();
    return cfg;
  });
}

nlohmann::json to_json(const EmConfig& cfg) {
  return {{"components", cfg.components},
          {"max_iters", cfg.max_iters},
          {"rel_tol", cfg.rel_tol},
          {"cov_reg", cfg.cov_reg},
          {"seed", cfg.seed},
          {"init", cfg.init == EmInit::kmeans ? "kmeans" : "random_points"}};
}

EmConfig em_config_from_json(const nlohmann::json& j) {
  return config_guard("em config", [&] {
    check_keys(j, {"components", "max_iters", "rel_tol", "cov_reg", "seed", "init"}, "em config");
    EmConfig cfg;
    cfg.components = j.value("components", cfg.components);
    cfg.max_iters = j.value("max_iters", cfg.max_iters);
    cfg.rel_tol = j.value("rel_tol", cfg.rel_tol);
    cfg.cov_reg = j.value("cov_reg", cfg.cov_reg);
    cfg.seed = j.value("seed", cfg.seed);
    const std::string init = j.value("init", std::string("kmeans"));
    if (init == "kmeans")
      cfg.init = EmInit::kmeans;
    else if (init == "random_points")
      cfg.init = EmInit::random_points;
    else
      throw ConfigError("em config: unknown init '" + init + "'");
    cfg.validate();
    return cfg;
  });
}

nlohmann::json to_json(const RunConfig& cfg) {
  return {{"generator", to_json(cfg.generator)},
          {"train", to_json(cfg.train)},
          {"em", to_json(cfg.em)},
          {"protocol", cfg.protocol},
          {"split_seed", cfg.split_seed},
          {"target_bpcer", cfg.target_bpcer}};
}

RunConfig run_config_from_json(const nlohmann::json& j) {
  return config_guard("run config", [&] {
    check_keys(j, {"generator", "train", "em", "protocol", "split_seed", "target_bpcer"}, "run config");
    RunConfig cfg;
    cfg.generator = generator_config_from_json(j.at("generator"));
    if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
    if (j.contains("em")) cfg.em = em_config_from_json(j.at("em"));
    cfg.protocol = j.value("protocol", cfg.protocol);
    ProtocolSpec::parse(cfg.protocol);
    cfg.split_seed = j.value("split_seed", cfg.split_seed);
    cfg.target_bpcer = j.value("target_bpcer", cfg.target_bpcer);
    if (!(cfg.target_bpcer > 0.0 && cfg.target_bpcer < 1.0)) throw ConfigError("target_bpcer must lie in (0,1)");
    return cfg;
  });
}

// --- binary encoding -----------------------------------------------------------

namespace {

template <typename T>
T to_little(T v) {
  if constexpr (std::endian::native == std::endian::big) {
    unsigned char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(b[i], b[sizeof(T) - 1 - i]);
    std::memcpy(&v, b, sizeof(T));
  }
  return v;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  void u32(std::uint32_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void u64(std::uint64_t v) {
    v = to_little(v);
    bytes(&v, sizeof v);
  }
  void blob(const std::string& s) {
    u64(s.size());
    bytes(s.data(), s.size());
  }
  void tensor(std::span<const double> values) {
    u64(values.size());
    for (double d : values) u64(std::bit_cast<std::uint64_t>(d));
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  Reader(const std::string& data, std::string what) : data_(data), what_(std::move(what)) {}

  void expect_magic(std::string_view magic) {
    if (remaining() < magic.size() || std::string_view(data_).substr(pos_, magic.size()) != magic)
      throw LoadError(what_ + ": bad magic, expected '" + std::string(magic) + "'");
    pos_ += magic.size();
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v, "u32");
    return to_little(v);
  }
  std::uint64_t u64() {
    std::uint64_t v;
    raw(&v, sizeof v, "u64");
    return to_little(v);
  }
  std::string blob() {
    const std::uint64_t n = u64();
    if (n > remaining()) throw LoadError(what_ + ": length field " + std::to_string(n) + " exceeds file size");
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  void tensor(std::span<double> out, const std::string& name) {
    const std::uint64_t n = u64();
    if (n != out.size())
      throw LoadError(what_ + ": tensor '" + name + "' has length " + std::to_string(n) + ", expected " +
                      std::to_string(out.size()));
    if (n * sizeof(double) > remaining()) throw LoadError(what_ + ": truncated tensor '" + name + "'");
    for (double& d : out) d = std::bit_cast<double>(u64());
  }
  void expect_end() const {
    if (remaining() != 0) throw LoadError(what_ + ": " + std::to_string(remaining()) + " trailing bytes");
  }

 private:
  std::size_t remaining() const { return data_.size() - pos_; }
  void raw(void* p, std::size_t n, const char* field) {
    if (n > remaining()) throw LoadError(what_ + ": truncated while reading " + field);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }

  const std::string& data_;
  std::string what_;
  std::size_t pos_ = 0;
};

void check_version(std::uint32_t got, std::uint32_t want, const std::string& what) {
  if (got != want)
    throw LoadError(what + " format version " + std::to_string(got) + " is not supported (this build reads version " +
                    std::to_string(want) + ")");
}

nlohmann::json parse_header(const std::string& text, const std::string& what) {
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(what + ": corrupt header: " + e.what());
  }
}

}  // namespace

std::string encode_checkpoint(const Checkpoint& ckpt) {
  nlohmann::json header;
  header["network"] = to_json(ckpt.network);
  header["train"] = to_json(ckpt.train);
  header["selected_epoch"] = ckpt.selected_epoch;
  header["center"] = {{"alpha", ckpt.center.alpha}, {"initialized", ckpt.center.initialized}};
  header["history"] = nlohmann::json::array();
  for (const auto& h : ckpt.history)
    header["history"].push_back({{"epoch", h.epoch},
                                 {"train_loss", h.train_loss},
                                 {"dev_loss", h.dev_loss},
                                 {"bonafide_spread", h.bonafide_spread}});
  header["tensors"] = nlohmann::json::array();
  ckpt.params.for_each_tensor([&](const std::string& name, std::span<const double> t) {
    header["tensors"].push_back({{"name", name}, {"size", t.size()}});
  });

  Writer w;
  w.bytes("OCCL", 4);
  w.u32(Checkpoint::kFormatVersion);
  w.blob(header.dump());
  ckpt.params.for_each_tensor([&](const std::string&, std::span<const double> t) { w.tensor(t); });
  w.tensor({ckpt.center.center.data(), static_cast<std::size_t>(ckpt.center.center.size())});
  return w.take();
}

Checkpoint decode_checkpoint(const std::string& bytes) {
  const std::string what = "checkpoint";
  Reader r(bytes, what);
  r.expect_magic("OCCL");
  check_version(r.u32(), Checkpoint::kFormatVersion, what);
  const nlohmann::json header = parse_header(r.blob(), what);

  Checkpoint ckpt;
  try {
    ckpt.network = network_config_from_json(header.at("network"));
    ckpt.train = train_config_from_json(header.at("train"));
    ckpt.selected_epoch = header.at("selected_epoch").get<int>();
    ckpt.center.alpha = header.at("center").at("alpha").get<double>();
    ckpt.center.initialized = header.at("center").at("initialized").get<bool>();
    for (const auto& h : header.at("history"))
      ckpt.history.push_back({h.at("epoch").get<int>(), h.at("train_loss").get<double>(), h.at("dev_loss").get<double>(),
                              h.at("bonafide_spread").get<double>()});
    ckpt.params = NetworkParams::zeros(ckpt.network);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(what + ": corrupt header: " + e.what());
  } catch (const ConfigError& e) {
    throw LoadError(what + ": invalid header: " + e.what());
  }
  ckpt.params.for_each_tensor([&](const std::string& name, std::span<double> t) { r.tensor(t, name); });
  ckpt.center.center = Eigen::VectorXd::Zero(ckpt.network.embedding_dim);
  r.tensor({ckpt.center.center.data(), static_cast<std::size_t>(ckpt.center.center.size())}, "center");
  r.expect_end();
  return ckpt;
}

std::string encode_gmm(const GmmParams& gmm) {
  const int k = gmm.components();
  const int d = gmm.dim();
  Writer w;
  w.bytes("OCGM", 4);
  w.u32(kGmmFormatVersion);
  w.blob(nlohmann::json{{"components", k}, {"dim", d}}.dump());
  w.tensor({gmm.weights.data(), static_cast<std::size_t>(k)});
  for (const auto& m : gmm.means) w.tensor({m.data(), static_cast<std::size_t>(d)});
  for (const auto& c : gmm.covariances) {
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row = c;
    w.tensor({row.data(), static_cast<std::size_t>(row.size())});
  }
  return w.take();
}

GmmParams decode_gmm(const std::string& bytes) {
  const std::string what = "GMM file";
  Reader r(bytes, what);
  r.expect_magic("OCGM");
  check_version(r.u32(), kGmmFormatVersion, what);
  const nlohmann::json header = parse_header(r.blob(), what);
  int k = 0, d = 0;
  try {
    k = header.at("components").get<int>();
    d = header.at("dim").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(what + ": corrupt header: " + e.what());
  }
  if (k < 1 || d < 1 || k > 100000 || d > 100000) throw LoadError(what + ": implausible shape in header");

  GmmParams gmm;
  gmm.weights.resize(k);
  r.tensor({gmm.weights.data(), static_cast<std::size_t>(k)}, "weights");
  for (int j = 0; j < k; ++j) {
    Eigen::VectorXd m(d);
    r.tensor({m.data(), static_cast<std::size_t>(d)}, "mean " + std::to_string(j));
    gmm.means.push_back(std::move(m));
  }
  for (int j = 0; j < k; ++j) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> row(d, d);
    r.tensor({row.data(), static_cast<std::size_t>(row.size())}, "covariance " + std::to_string(j));
    gmm.covariances.emplace_back(row);
  }
  r.expect_end();
  return gmm;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  write_text_file(path, encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(read_text_file(path)); }

void save_gmm(const GmmParams& gmm, const std::filesystem::path& path) { write_text_file(path, encode_gmm(gmm)); }

GmmParams load_gmm(const std::filesystem::path& path) { return decode_gmm(read_text_file(path)); }

// --- files ---------------------------------------------------------------------

void write_text_file(const std::filesystem::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

nlohmann::json read_json_file(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("'" + path.string() + "' is not valid JSON: " + e.what());
  }
}

}  // namespace ocpad
