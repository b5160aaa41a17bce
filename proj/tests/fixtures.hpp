#pragma once

// Small synthetic setups shared by the test binaries.

#include <string>

#include "ocpad/protocol.hpp"

namespace fixture {

inline ocpad::ClusterSpec cluster(int count, int identities, std::map<std::string, std::vector<double>> mean,
                                  double scale = 1.0, double identity_scale = 0.2) {
  ocpad::ClusterSpec c;
  c.count = count;
  c.identities = identities;
  c.mean = std::move(mean);
  for (const auto& [name, _] : c.mean) c.scale[name] = scale;
  c.identity_scale = identity_scale;
  return c;
}

/// Two channels (color, depth), two 2D and two 3D attack types.
inline ocpad::GeneratorConfig two_family(std::uint64_t seed, int bonafide = 120, int per_attack = 40) {
  ocpad::GeneratorConfig g;
  g.seed = seed;
  g.channels = {{"color", 3}, {"depth", 3}};
  g.bonafide = cluster(bonafide, 12, {{"color", {0.0}}, {"depth", {0.0}}});
  g.attacks = {
      {"print", "2D", cluster(per_attack, 6, {{"color", {0.5}}, {"depth", {-4.0}}})},
      {"replay", "2D", cluster(per_attack, 6, {{"color", {-0.5}}, {"depth", {-4.5}}})},
      {"rigid_mask", "3D", cluster(per_attack, 6, {{"color", {3.0}}, {"depth", {1.0}}})},
      {"fake_head", "3D", cluster(per_attack, 6, {{"color", {3.5}}, {"depth", {-1.0}}})},
  };
  return g;
}

}  // namespace fixture
