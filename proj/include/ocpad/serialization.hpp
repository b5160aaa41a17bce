#pragma once

// Binary model files and JSON/CSV views of configs and results.
//
// Checkpoint (.ocnn): "OCCL", u32 version, u64 length + JSON header, then
// every tensor as u64 count + little-endian f64 values in declaration order,
// then the bonafide center the same way.
//
// GMM (.ocgm): "OCGM", u32 version, u64 length + JSON header, then weights,
// K means and K row-major covariances in the same tensor encoding.

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"
#include "ocpad/pipeline.hpp"

namespace ocpad {

inline constexpr std::uint32_t kGmmFormatVersion = 1;

std::string encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::string& bytes);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string encode_gmm(const GmmParams& gmm);
GmmParams decode_gmm(const std::string& bytes);
void save_gmm(const GmmParams& gmm, const std::filesystem::path& path);
GmmParams load_gmm(const std::filesystem::path& path);

nlohmann::json to_json(const NetworkConfig& cfg);
NetworkConfig network_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const EmConfig& cfg);
EmConfig em_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MetricsReport& report);
/// Aligned table with rates as percentages at one decimal.
std::string format_report_table(const MetricsReport& report);

/// `id,e1,...,eN` with 17 significant digits.
std::string format_embeddings_csv(std::span<const std::pair<std::int64_t, Eigen::VectorXd>> rows);
std::vector<std::pair<std::int64_t, Eigen::VectorXd>> parse_embeddings_csv(const std::string& text);

/// `threshold,apcer,bpcer`.
std::string format_det_csv(std::span<const DetPoint> points);

nlohmann::json read_json_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& contents);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace ocpad
