#pragma once

// Synthetic multi-channel data, the `.ocds` dataset text format, MAD
// normalization and identity-disjoint protocol splits.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "ocpad/types.hpp"

namespace ocpad {

struct Sample {
  std::int64_t id = 0;
  std::int64_t identity = 0;
  std::map<std::string, std::vector<double>> channels;
  Label label = Label::bonafide;
  std::optional<std::string> attack_type;  // present iff label == attack
  Group group = Group::train;

  bool operator==(const Sample&) const = default;
};

struct ChannelSpec {
  std::string name;
  int dim = 1;

  bool operator==(const ChannelSpec&) const = default;
};

struct Dataset {
  std::vector<ChannelSpec> channels;
  std::map<std::string, std::string> attack_families;  // attack_type -> family tag ("2D", "3D", ...)
  std::vector<Sample> samples;

  bool operator==(const Dataset&) const = default;

  const ChannelSpec* channel(const std::string& name) const;
  /// Throws InputError when a sample breaks the label/attack_type or
  /// channel-dimension invariants.
  void validate() const;
};

/// Distribution of one class cluster. Means are per channel, either a
/// full vector or a single value broadcast across the channel.
struct ClusterSpec {
  std::map<std::string, std::vector<double>> mean;
  std::map<std::string, double> scale;
  int count = 0;
  int identities = 1;         // subjects for bonafide, instruments for attacks
  double identity_scale = 0;  // spread of the per-identity offset
};

struct AttackSpec {
  std::string type;
  std::string family;
  ClusterSpec cluster;
};

struct GeneratorConfig {
  std::vector<ChannelSpec> channels;
  ClusterSpec bonafide;
  std::vector<AttackSpec> attacks;
  std::uint64_t seed = 0;

  void validate() const;
};

GeneratorConfig generator_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GeneratorConfig& cfg);

/// Samples are generated class by class (bonafide first, then attacks in
/// config order). Groups are set from the grandtest split under cfg.seed.
Dataset generate_synthetic(const GeneratorConfig& cfg);

/// clamp(128 + 128 (v - median) / (k MAD), 0, 255); all 128 when MAD = 0.
std::vector<double> mad_normalize(std::span<const double> values, double k = 4.0);

enum class ProtocolKind { grandtest, unseen_family, leave_one_out };

struct ProtocolSpec {
  ProtocolKind kind = ProtocolKind::grandtest;
  std::string held_out;  // family for unseen_family, attack type for leave_one_out

  /// Accepts "grandtest", "unseen_family_A" (2D held out), "unseen_family_B"
  /// (3D held out), "unseen_family:<tag>" and "leave_one_out:<type>".
  static ProtocolSpec parse(const std::string& name);
  std::string name() const;
};

struct ProtocolSplit {
  std::string name;
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> dev;
  std::vector<std::int64_t> eval;

  const std::vector<std::int64_t>& fold(Group g) const;
};

/// Identities are shuffled with `seed` and dealt round-robin into the three
/// folds, separately for bonafide subjects and for each attack type's
/// instruments. Unseen protocols then drop the held-out attacks from train
/// and dev and keep only bonafide plus held-out attacks in eval.
ProtocolSplit split_protocol(const Dataset& data, const ProtocolSpec& protocol, std::uint64_t seed);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
/// Empty file gives an empty dataset. Malformed lines raise ParseError with
/// the 1-based line number.
Dataset load_dataset(const std::filesystem::path& path);

std::string format_dataset(const Dataset& data);
Dataset parse_dataset(const std::string& text);

}  // namespace ocpad
