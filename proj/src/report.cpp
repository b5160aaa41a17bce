#include <cstdio>
#include <sstream>

#include "ocpad/error.hpp"
#include "ocpad/serialization.hpp"

namespace ocpad {

namespace {

nlohmann::json rates_json(const ErrorRates& r) { return {{"apcer", r.apcer}, {"bpcer", r.bpcer}, {"acer", r.acer}}; }

std::string percent(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f", 100.0 * rate);
  return buf;
}

std::string g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["protocol"] = report.protocol;
  j["scorer"] = report.scorer;
  j["target_bpcer"] = report.target_bpcer;
  j["threshold"] = report.threshold;
  j["dev"] = rates_json(report.dev);
  j["eval"] = rates_json(report.eval);
  j["eer"] = report.eer;
  j["eer_threshold"] = report.eer_threshold;
  j["det_points"] = nlohmann::json::array();
  for (const auto& p : report.det)
    j["det_points"].push_back({{"threshold", p.threshold}, {"apcer", p.apcer}, {"bpcer", p.bpcer}});
  return j;
}

std::string format_report_table(const MetricsReport& r) {
  std::ostringstream out;
  char line[256];
  out << "protocol: " << r.protocol << "   scorer: " << r.scorer << "   threshold @ dev BPCER "
      << percent(r.target_bpcer) << "%: " << g17(r.threshold) << "\n";
  std::snprintf(line, sizeof line, "%-10s| %-22s| %-22s\n", "", "dev (%)", "eval (%)");
  out << line;
  std::snprintf(line, sizeof line, "%-10s| %6s %6s %7s | %6s %6s %7s\n", "", "APCER", "BPCER", "ACER", "APCER", "BPCER",
                "ACER");
  out << line;
  std::snprintf(line, sizeof line, "%-10s| %6s %6s %7s | %6s %6s %7s\n", r.scorer.c_str(), percent(r.dev.apcer).c_str(),
                percent(r.dev.bpcer).c_str(), percent(r.dev.acer).c_str(), percent(r.eval.apcer).c_str(),
                percent(r.eval.bpcer).c_str(), percent(r.eval.acer).c_str());
  out << line;
  out << "eval EER: " << percent(r.eer) << "%\n";
  return out.str();
}

std::string format_embeddings_csv(std::span<const std::pair<std::int64_t, Eigen::VectorXd>> rows) {
  std::string out = "id";
  const Eigen::Index dim = rows.empty() ? 0 : rows.front().second.size();
  for (Eigen::Index i = 1; i <= dim; ++i) out += ",e" + std::to_string(i);
  out += '\n';
  for (const auto& [id, e] : rows) {
    out += std::to_string(id);
    for (Eigen::Index i = 0; i < e.size(); ++i) out += "," + g17(e(i));
    out += '\n';
  }
  return out;
}

std::vector<std::pair<std::int64_t, Eigen::VectorXd>> parse_embeddings_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<std::pair<std::int64_t, Eigen::VectorXd>> rows;
  std::size_t lineno = 0;
  std::size_t dim = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string f;
    while (std::getline(ss, f, ',')) fields.push_back(f);
    if (lineno == 1) {
      if (fields.empty() || fields[0] != "id") throw ParseError(lineno, "embeddings CSV must start with 'id'");
      dim = fields.size() - 1;
      continue;
    }
    if (fields.size() != dim + 1) throw ParseError(lineno, "wrong number of columns");
    try {
      Eigen::VectorXd e(static_cast<Eigen::Index>(dim));
      for (std::size_t i = 0; i < dim; ++i) e(static_cast<Eigen::Index>(i)) = std::stod(fields[i + 1]);
      rows.emplace_back(std::stoll(fields[0]), std::move(e));
    } catch (const std::logic_error&) {
      throw ParseError(lineno, "invalid number");
    }
  }
  return rows;
}

std::string format_det_csv(std::span<const DetPoint> points) {
  std::string out = "threshold,apcer,bpcer\n";
  for (const auto& p : points) out += g17(p.threshold) + "," + g17(p.apcer) + "," + g17(p.bpcer) + "\n";
  return out;
}

}  // namespace ocpad
