#pragma once

// Independent reference computations used only by the tests. Each one takes
// the most direct route (plain loops, explicit inverse, exhaustive sweeps)
// and shares no code path with the library implementation it checks.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ocpad/diffnet.hpp"
#include "ocpad/types.hpp"

namespace oracle {

// --- network -------------------------------------------------------------------

inline double act(ocpad::Activation a, double v) { return a == ocpad::Activation::relu ? (v > 0 ? v : 0.0) : std::tanh(v); }

inline std::vector<double> dense(const ocpad::DenseLayer& l, const std::vector<double>& x, bool activate,
                                 ocpad::Activation a) {
  std::vector<double> y(static_cast<std::size_t>(l.weight.rows()));
  for (Eigen::Index r = 0; r < l.weight.rows(); ++r) {
    double s = l.bias(r);
    for (Eigen::Index c = 0; c < l.weight.cols(); ++c) s += l.weight(r, c) * x[static_cast<std::size_t>(c)];
    y[static_cast<std::size_t>(r)] = activate ? act(a, s) : s;
  }
  return y;
}

struct Straight {
  std::vector<double> embedding;
  double probability;
};

inline Straight straight_forward(const ocpad::NetworkConfig& cfg, const ocpad::NetworkParams& p,
                                 const std::vector<std::vector<double>>& input) {
  std::vector<double> concat;
  for (std::size_t c = 0; c < input.size(); ++c) {
    std::vector<double> h = input[c];
    for (const auto& l : p.trunks[c]) h = dense(l, h, true, cfg.activation);
    concat.insert(concat.end(), h.begin(), h.end());
  }
  for (const auto& l : p.fusion) concat = dense(l, concat, true, cfg.activation);
  Straight out;
  out.embedding = dense(p.embedding, concat, false, cfg.activation);
  const double logit = dense(p.output, out.embedding, false, cfg.activation)[0];
  out.probability = std::clamp(1.0 / (1.0 + std::exp(-logit)), 1e-7, 1.0 - 1e-7);
  return out;
}

// --- metrics -------------------------------------------------------------------

struct Rates {
  double apcer, bpcer, acer;
};

inline Rates rates(const std::vector<double>& s, const std::vector<ocpad::Label>& y, double tau) {
  double na = 0, nb = 0, fa = 0, fr = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] == ocpad::Label::attack) {
      ++na;
      if (s[i] >= tau) ++fa;
    } else {
      ++nb;
      if (s[i] < tau) ++fr;
    }
  }
  Rates r{fa / na, fr / nb, 0.0};
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

// Every behaviour-distinct threshold: below all scores, each midpoint, above all.
inline std::vector<double> all_thresholds(std::vector<double> s) {
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  std::vector<double> t{std::nextafter(s.front(), -std::numeric_limits<double>::infinity())};
  for (std::size_t i = 0; i + 1 < s.size(); ++i) t.push_back(s[i] + (s[i + 1] - s[i]) / 2.0);
  t.push_back(std::nextafter(s.back(), std::numeric_limits<double>::infinity()));
  return t;
}

inline double select_threshold(const std::vector<double>& s, const std::vector<ocpad::Label>& y, double target) {
  double best = -std::numeric_limits<double>::infinity();
  for (double t : all_thresholds(s)) {
    // bpcer computed directly (attacks may be absent).
    double nb = 0, fr = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (y[i] == ocpad::Label::bonafide) {
        ++nb;
        if (s[i] < t) ++fr;
      }
    if (fr / nb <= target && t > best) best = t;
  }
  return best;
}

struct Eer {
  double eer, threshold;
};

inline Eer eer(const std::vector<double>& s, const std::vector<ocpad::Label>& y) {
  Eer best{0, 0};
  double gap = std::numeric_limits<double>::infinity(), sum = gap;
  for (double t : all_thresholds(s)) {
    const Rates r = rates(s, y, t);
    const double g = std::abs(r.apcer - r.bpcer);
    if (g < gap || (g == gap && r.apcer + r.bpcer < sum)) {
      gap = g;
      sum = r.apcer + r.bpcer;
      best = {(r.apcer + r.bpcer) / 2.0, t};
    }
  }
  return best;
}

// --- Gaussian mixtures ---------------------------------------------------------

inline double naive_gaussian_density(const Eigen::VectorXd& x, const Eigen::VectorXd& mu, const Eigen::MatrixXd& cov) {
  const double d = static_cast<double>(x.size());
  const Eigen::VectorXd diff = x - mu;
  const double quad = diff.dot(cov.inverse() * diff);
  return std::exp(-0.5 * quad) / std::sqrt(std::pow(2.0 * std::numbers::pi, d) * cov.determinant());
}

inline double naive_mixture_log_likelihood(const Eigen::VectorXd& w, const std::vector<Eigen::VectorXd>& mu,
                                           const std::vector<Eigen::MatrixXd>& cov, const Eigen::VectorXd& x) {
  double p = 0.0;
  for (Eigen::Index k = 0; k < w.size(); ++k) p += w(k) * naive_gaussian_density(x, mu[k], cov[k]);
  return std::log(p);
}

struct GaussianMle {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

inline GaussianMle gaussian_mle(const std::vector<Eigen::VectorXd>& data) {
  const auto n = static_cast<double>(data.size());
  const Eigen::Index d = data.front().size();
  Eigen::MatrixXd m(d, static_cast<Eigen::Index>(data.size()));
  for (std::size_t i = 0; i < data.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = data[i];
  GaussianMle out;
  out.mean = m.rowwise().mean();
  const Eigen::MatrixXd c = m.colwise() - out.mean;
  out.cov = (c * c.transpose()) / n;
  return out;
}

// --- helpers -------------------------------------------------------------------

inline std::filesystem::path temp_dir(const std::string& tag) {
  static std::mt19937_64 rng{std::random_device{}()};
  auto dir = std::filesystem::temp_directory_path() / ("ocpad_" + tag + "_" + std::to_string(rng()));
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
