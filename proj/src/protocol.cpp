#include "ocpad/protocol.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "ocpad/error.hpp"

namespace ocpad {

std::string_view to_string(Label y) { return y == Label::bonafide ? "bonafide" : "attack"; }

std::string_view to_string(Group g) {
  switch (g) {
    case Group::train:
      return "train";
    case Group::dev:
      return "dev";
    case Group::eval:
      return "eval";
  }
  return "train";
}

Label parse_label(std::string_view s) {
  if (s == "bonafide") return Label::bonafide;
  if (s == "attack") return Label::attack;
  throw InputError("unknown label '" + std::string(s) + "'");
}

Group parse_group(std::string_view s) {
  if (s == "train") return Group::train;
  if (s == "dev") return Group::dev;
  if (s == "eval") return Group::eval;
  throw InputError("unknown group '" + std::string(s) + "'");
}

const ChannelSpec* Dataset::channel(const std::string& name) const {
  auto it = std::find_if(channels.begin(), channels.end(), [&](const ChannelSpec& c) { return c.name == name; });
  return it == channels.end() ? nullptr : &*it;
}

void Dataset::validate() const {
  for (const auto& s : samples) {
    const std::string where = "sample " + std::to_string(s.id);
    if ((s.label == Label::attack) != s.attack_type.has_value())
      throw InputError(where + ": attack_type must be present exactly for attacks");
    if (s.channels.size() != channels.size()) throw InputError(where + ": wrong number of channels");
    for (const auto& c : channels) {
      auto it = s.channels.find(c.name);
      if (it == s.channels.end()) throw InputError(where + ": missing channel '" + c.name + "'");
      if (static_cast<int>(it->second.size()) != c.dim)
        throw InputError(where + ": channel '" + c.name + "' has wrong dimension");
    }
  }
}

// --- generator ---------------------------------------------------------------

namespace {

std::vector<double> channel_mean(const ClusterSpec& cluster, const ChannelSpec& ch) {
  auto it = cluster.mean.find(ch.name);
  if (it == cluster.mean.end()) return std::vector<double>(ch.dim, 0.0);
  if (it->second.size() == 1) return std::vector<double>(ch.dim, it->second.front());
  return it->second;
}

double channel_scale(const ClusterSpec& cluster, const ChannelSpec& ch) {
  auto it = cluster.scale.find(ch.name);
  return it == cluster.scale.end() ? 1.0 : it->second;
}

void validate_cluster(const ClusterSpec& c, const std::vector<ChannelSpec>& channels, const std::string& what) {
  if (c.count < 1) throw ConfigError(what + ": count must be positive");
  if (c.identities < 1) throw ConfigError(what + ": identities must be positive");
  if (!(c.identity_scale >= 0.0)) throw ConfigError(what + ": identity_scale must be non-negative");
  for (const auto& [name, mean] : c.mean) {
    auto it = std::find_if(channels.begin(), channels.end(), [&](const ChannelSpec& s) { return s.name == name; });
    if (it == channels.end()) throw ConfigError(what + ": mean given for unknown channel '" + name + "'");
    if (mean.size() != 1 && static_cast<int>(mean.size()) != it->dim)
      throw ConfigError(what + ": mean for '" + name + "' must have 1 or " + std::to_string(it->dim) + " values");
  }
  for (const auto& [name, scale] : c.scale) {
    if (std::none_of(channels.begin(), channels.end(), [&](const ChannelSpec& s) { return s.name == name; }))
      throw ConfigError(what + ": scale given for unknown channel '" + name + "'");
    if (!(scale >= 0.0)) throw ConfigError(what + ": scale must be non-negative");
  }
}

ClusterSpec cluster_from_json(const nlohmann::json& j, const char* identity_key) {
  ClusterSpec c;
  c.count = j.at("count").get<int>();
  c.identities = j.value(identity_key, 1);
  c.identity_scale = j.value("identity_scale", 0.0);
  if (j.contains("mean"))
    for (const auto& [name, v] : j.at("mean").items())
      c.mean[name] = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
  if (j.contains("scale"))
    for (const auto& [name, v] : j.at("scale").items()) c.scale[name] = v.get<double>();
  return c;
}

nlohmann::json cluster_to_json(const ClusterSpec& c, const char* identity_key) {
  nlohmann::json j;
  j["count"] = c.count;
  j[identity_key] = c.identities;
  j["identity_scale"] = c.identity_scale;
  j["mean"] = nlohmann::json::object();
  for (const auto& [name, v] : c.mean) j["mean"][name] = v;
  j["scale"] = nlohmann::json::object();
  for (const auto& [name, v] : c.scale) j["scale"][name] = v;
  return j;
}

}  // namespace

void GeneratorConfig::validate() const {
  if (channels.empty()) throw ConfigError("generator needs at least one channel");
  std::set<std::string> names;
  for (const auto& c : channels) {
    if (c.name.empty() || c.name.find_first_of(",;:|= \t") != std::string::npos)
      throw ConfigError("invalid channel name '" + c.name + "'");
    if (c.dim < 1) throw ConfigError("channel '" + c.name + "' needs a positive dimension");
    if (!names.insert(c.name).second) throw ConfigError("duplicate channel '" + c.name + "'");
  }
  validate_cluster(bonafide, channels, "bonafide");
  std::set<std::string> types;
  for (const auto& a : attacks) {
    if (a.type.empty() || a.type == "-" || a.type.find_first_of(",;:|= \t") != std::string::npos)
      throw ConfigError("invalid attack type '" + a.type + "'");
    if (a.family.empty() || a.family.find_first_of(",;:|= \t") != std::string::npos)
      throw ConfigError("invalid family tag for attack '" + a.type + "'");
    if (!types.insert(a.type).second) throw ConfigError("duplicate attack type '" + a.type + "'");
    validate_cluster(a.cluster, channels, "attack '" + a.type + "'");
  }
}

GeneratorConfig generator_config_from_json(const nlohmann::json& j) {
  try {
    GeneratorConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.at("channels")) cfg.channels.push_back({c.at("name").get<std::string>(), c.at("dim").get<int>()});
    cfg.bonafide = cluster_from_json(j.at("bonafide"), "identities");
    if (j.contains("attacks"))
      for (const auto& a : j.at("attacks"))
        cfg.attacks.push_back({a.at("type").get<std::string>(), a.at("family").get<std::string>(),
                               cluster_from_json(a, "instruments")});
    cfg.validate();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
}

nlohmann::json to_json(const GeneratorConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["channels"] = nlohmann::json::array();
  for (const auto& c : cfg.channels) j["channels"].push_back({{"name", c.name}, {"dim", c.dim}});
  j["bonafide"] = cluster_to_json(cfg.bonafide, "identities");
  j["attacks"] = nlohmann::json::array();
  for (const auto& a : cfg.attacks) {
    nlohmann::json aj = cluster_to_json(a.cluster, "instruments");
    aj["type"] = a.type;
    aj["family"] = a.family;
    j["attacks"].push_back(aj);
  }
  return j;
}

Dataset generate_synthetic(const GeneratorConfig& cfg) {
  cfg.validate();
  Dataset data;
  data.channels = cfg.channels;
  for (const auto& a : cfg.attacks) data.attack_families[a.type] = a.family;

  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::int64_t next_id = 0;
  std::int64_t next_identity = 0;

  auto emit = [&](const ClusterSpec& cluster, Label label, const std::optional<std::string>& type) {
    std::vector<std::map<std::string, std::vector<double>>> offsets(cluster.identities);
    for (auto& off : offsets)
      for (const auto& ch : cfg.channels) {
        auto& v = off[ch.name];
        v.resize(ch.dim);
        for (double& x : v) x = cluster.identity_scale * normal(rng);
      }
    for (int i = 0; i < cluster.count; ++i) {
      Sample s;
      s.id = next_id++;
      const int who = i % cluster.identities;
      s.identity = next_identity + who;
      s.label = label;
      s.attack_type = type;
      for (const auto& ch : cfg.channels) {
        const auto mean = channel_mean(cluster, ch);
        const double scale = channel_scale(cluster, ch);
        std::vector<double> v(ch.dim);
        for (int d = 0; d < ch.dim; ++d) v[d] = mean[d] + offsets[who][ch.name][d] + scale * normal(rng);
        s.channels[ch.name] = std::move(v);
      }
      data.samples.push_back(std::move(s));
    }
    next_identity += cluster.identities;
  };

  emit(cfg.bonafide, Label::bonafide, std::nullopt);
  for (const auto& a : cfg.attacks) emit(a.cluster, Label::attack, a.type);

  const ProtocolSplit split = split_protocol(data, ProtocolSpec{}, cfg.seed);
  std::unordered_map<std::int64_t, Group> group_of;
  for (auto id : split.train) group_of[id] = Group::train;
  for (auto id : split.dev) group_of[id] = Group::dev;
  for (auto id : split.eval) group_of[id] = Group::eval;
  for (auto& s : data.samples) s.group = group_of.at(s.id);
  return data;
}

// --- MAD normalization ---------------------------------------------------------

namespace {

double median_of(std::vector<double> v) {
  const std::size_t n = v.size();
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(v.begin(), mid, v.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

std::vector<double> mad_normalize(std::span<const double> values, double k) {
  if (values.empty()) throw InputError("cannot normalize an empty vector");
  if (!(k > 0.0)) throw ConfigError("MAD scale factor must be positive");
  const double med = median_of({values.begin(), values.end()});
  std::vector<double> dev(values.size());
  std::transform(values.begin(), values.end(), dev.begin(), [&](double v) { return std::abs(v - med); });
  const double mad = median_of(dev);
  std::vector<double> out(values.size(), 128.0);
  if (mad == 0.0) return out;
  for (std::size_t i = 0; i < values.size(); ++i)
    out[i] = std::clamp(128.0 + 128.0 * (values[i] - med) / (k * mad), 0.0, 255.0);
  return out;
}

// --- protocols -----------------------------------------------------------------

ProtocolSpec ProtocolSpec::parse(const std::string& name) {
  if (name == "grandtest") return {ProtocolKind::grandtest, ""};
  if (name == "unseen_family_A") return {ProtocolKind::unseen_family, "2D"};
  if (name == "unseen_family_B") return {ProtocolKind::unseen_family, "3D"};
  const auto colon = name.find(':');
  if (colon != std::string::npos && colon + 1 < name.size()) {
    const std::string head = name.substr(0, colon);
    const std::string arg = name.substr(colon + 1);
    if (head == "unseen_family") return {ProtocolKind::unseen_family, arg};
    if (head == "leave_one_out") return {ProtocolKind::leave_one_out, arg};
  }
  throw ConfigError("unknown protocol '" + name + "'");
}

std::string ProtocolSpec::name() const {
  switch (kind) {
    case ProtocolKind::grandtest:
      return "grandtest";
    case ProtocolKind::unseen_family:
      if (held_out == "2D") return "unseen_family_A";
      if (held_out == "3D") return "unseen_family_B";
      return "unseen_family:" + held_out;
    case ProtocolKind::leave_one_out:
      return "leave_one_out:" + held_out;
  }
  return "grandtest";
}

const std::vector<std::int64_t>& ProtocolSplit::fold(Group g) const {
  switch (g) {
    case Group::train:
      return train;
    case Group::dev:
      return dev;
    case Group::eval:
      return eval;
  }
  return train;
}

ProtocolSplit split_protocol(const Dataset& data, const ProtocolSpec& protocol, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::unordered_map<std::int64_t, int> fold_of;

  auto deal = [&](std::vector<std::int64_t> ids) {
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    ids.erase(std::remove_if(ids.begin(), ids.end(), [&](std::int64_t id) { return fold_of.count(id) > 0; }),
              ids.end());
    for (std::size_t i = ids.size(); i > 1; --i) {
      std::uniform_int_distribution<std::size_t> pick(0, i - 1);
      std::swap(ids[i - 1], ids[pick(rng)]);
    }
    for (std::size_t i = 0; i < ids.size(); ++i) fold_of[ids[i]] = static_cast<int>(i % 3);
  };

  std::vector<std::int64_t> bonafide_ids;
  std::map<std::string, std::vector<std::int64_t>> attack_ids;
  for (const auto& s : data.samples) {
    if (s.label == Label::bonafide)
      bonafide_ids.push_back(s.identity);
    else
      attack_ids[s.attack_type.value_or("")].push_back(s.identity);
  }
  deal(std::move(bonafide_ids));
  for (auto& [type, ids] : attack_ids) deal(std::move(ids));

  auto family_of = [&](const Sample& s) -> std::string {
    auto it = data.attack_families.find(s.attack_type.value_or(""));
    return it == data.attack_families.end() ? std::string{} : it->second;
  };
  auto is_held_out = [&](const Sample& s) {
    if (s.label != Label::attack) return false;
    if (protocol.kind == ProtocolKind::unseen_family) return family_of(s) == protocol.held_out;
    if (protocol.kind == ProtocolKind::leave_one_out) return s.attack_type == protocol.held_out;
    return false;
  };

  if (protocol.kind != ProtocolKind::grandtest &&
      std::none_of(data.samples.begin(), data.samples.end(), is_held_out)) {
    const char* what = protocol.kind == ProtocolKind::unseen_family ? "attack family '" : "attack type '";
    throw SplitError(std::string(what) + protocol.held_out + "' does not occur in the data");
  }

  ProtocolSplit split;
  split.name = protocol.name();
  for (const auto& s : data.samples) {
    const int fold = fold_of.at(s.identity);
    const bool held = is_held_out(s);
    if (protocol.kind != ProtocolKind::grandtest) {
      if (fold < 2 && held) continue;
      if (fold == 2 && s.label == Label::attack && !held) continue;
    }
    (fold == 0 ? split.train : fold == 1 ? split.dev : split.eval).push_back(s.id);
  }
  return split;
}

// --- .ocds text format -----------------------------------------------------------
//
// #ocds 1 channels=color:4;depth:4 families=print:2D;rigid_mask:3D
// id,identity,group,label,attack_type,color:v|v|v|v;depth:v|v|v|v

namespace {

constexpr std::string_view kMagic = "#ocds";

void append_number(std::string& out, double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, end);
}

std::vector<std::string_view> split_on(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

template <typename T>
T parse_number(std::string_view s, std::size_t line, const char* what) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty())
    throw ParseError(line, std::string("invalid ") + what + " '" + std::string(s) + "'");
  return v;
}

}  // namespace

std::string format_dataset(const Dataset& data) {
  data.validate();
  std::string out(kMagic);
  out += " 1 channels=";
  for (std::size_t i = 0; i < data.channels.size(); ++i) {
    if (i) out += ';';
    out += data.channels[i].name + ":" + std::to_string(data.channels[i].dim);
  }
  out += " families=";
  bool first = true;
  for (const auto& [type, family] : data.attack_families) {
    if (!first) out += ';';
    first = false;
    out += type + ":" + family;
  }
  out += '\n';
  for (const auto& s : data.samples) {
    out += std::to_string(s.id) + "," + std::to_string(s.identity) + "," + std::string(to_string(s.group)) + "," +
           std::string(to_string(s.label)) + "," + s.attack_type.value_or("-") + ",";
    for (std::size_t c = 0; c < data.channels.size(); ++c) {
      if (c) out += ';';
      out += data.channels[c].name + ":";
      const auto& v = s.channels.at(data.channels[c].name);
      for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += '|';
        append_number(out, v[i]);
      }
    }
    out += '\n';
  }
  return out;
}

Dataset parse_dataset(const std::string& text) {
  Dataset data;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::string_view sv(line);

    if (!have_header) {
      const auto fields = split_on(sv, ' ');
      if (fields.size() != 4 || fields[0] != kMagic) throw ParseError(lineno, "missing '#ocds' header");
      if (fields[1] != "1") throw ParseError(lineno, "unsupported format version " + std::string(fields[1]));
      if (!fields[2].starts_with("channels=") || !fields[3].starts_with("families="))
        throw ParseError(lineno, "header needs channels= and families=");
      const auto ch = fields[2].substr(9);
      if (ch.empty()) throw ParseError(lineno, "header lists no channels");
      for (auto item : split_on(ch, ';')) {
        const auto kv = split_on(item, ':');
        if (kv.size() != 2 || kv[0].empty()) throw ParseError(lineno, "bad channel spec '" + std::string(item) + "'");
        const int dim = parse_number<int>(kv[1], lineno, "channel dimension");
        if (dim < 1) throw ParseError(lineno, "channel dimension must be positive");
        data.channels.push_back({std::string(kv[0]), dim});
      }
      const auto fam = fields[3].substr(9);
      if (!fam.empty())
        for (auto item : split_on(fam, ';')) {
          const auto kv = split_on(item, ':');
          if (kv.size() != 2 || kv[0].empty() || kv[1].empty())
            throw ParseError(lineno, "bad family spec '" + std::string(item) + "'");
          data.attack_families[std::string(kv[0])] = std::string(kv[1]);
        }
      have_header = true;
      continue;
    }

    const auto fields = split_on(sv, ',');
    if (fields.size() != 6) throw ParseError(lineno, "expected 6 comma-separated fields");
    Sample s;
    s.id = parse_number<std::int64_t>(fields[0], lineno, "id");
    s.identity = parse_number<std::int64_t>(fields[1], lineno, "identity");
    try {
      s.group = parse_group(fields[2]);
      s.label = parse_label(fields[3]);
    } catch (const InputError& e) {
      throw ParseError(lineno, e.what());
    }
    if (fields[4] != "-") s.attack_type = std::string(fields[4]);
    if ((s.label == Label::attack) != s.attack_type.has_value())
      throw ParseError(lineno, "attack_type must be given for attacks and '-' for bonafide");

    for (auto item : split_on(fields[5], ';')) {
      const auto colon = item.find(':');
      if (colon == std::string_view::npos) throw ParseError(lineno, "channel block without ':'");
      const std::string name(item.substr(0, colon));
      const ChannelSpec* spec = data.channel(name);
      if (!spec) throw ParseError(lineno, "unknown channel '" + name + "'");
      if (s.channels.count(name)) throw ParseError(lineno, "channel '" + name + "' given twice");
      std::vector<double> values;
      for (auto tok : split_on(item.substr(colon + 1), '|')) values.push_back(parse_number<double>(tok, lineno, "value"));
      if (static_cast<int>(values.size()) != spec->dim)
        throw ParseError(lineno, "channel '" + name + "' has " + std::to_string(values.size()) + " values, expected " +
                                     std::to_string(spec->dim));
      s.channels[name] = std::move(values);
    }
    if (s.channels.size() != data.channels.size()) throw ParseError(lineno, "sample is missing channels");
    data.samples.push_back(std::move(s));
  }
  return data;
}

void save_dataset(const Dataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open '" + path.string() + "' for writing");
  out << format_dataset(data);
  if (!out) throw InputError("failed writing '" + path.string() + "'");
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open dataset '" + path.string() + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_dataset(buf.str());
}

}  // namespace ocpad
