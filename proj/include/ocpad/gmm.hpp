#pragma once

// One-class Gaussian mixture with full covariances, fitted by EM on
// bonafide embeddings only. The detection score is the log-likelihood.

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace ocpad {

enum class EmInit { kmeans, random_points };

struct EmConfig {
  int components = 5;
  int max_iters = 200;
  double rel_tol = 1e-6;
  double cov_reg = 1e-6;
  std::uint64_t seed = 0;
  EmInit init = EmInit::kmeans;

  void validate() const;
};

struct GmmParams {
  Eigen::VectorXd weights;
  std::vector<Eigen::VectorXd> means;
  std::vector<Eigen::MatrixXd> covariances;

  int components() const { return static_cast<int>(weights.size()); }
  int dim() const { return means.empty() ? 0 : static_cast<int>(means.front().size()); }
};

struct EmResult {
  GmmParams gmm;
  std::vector<double> trace;  // mean log-likelihood after each EM iteration
  int iterations = 0;
  bool converged = false;
};

/// Throws FitError when N < K or a covariance cannot be factored, and
/// InputError on non-finite or ragged input.
EmResult fit_em(std::span<const Eigen::VectorXd> data, const EmConfig& cfg);

double log_likelihood(const GmmParams& gmm, const Eigen::VectorXd& x);
Eigen::VectorXd responsibilities(const GmmParams& gmm, const Eigen::VectorXd& x);

/// Factors every covariance once; use for scoring many points.
class GmmScorer {
 public:
  explicit GmmScorer(const GmmParams& gmm);

  double log_likelihood(const Eigen::VectorXd& x) const;
  Eigen::VectorXd responsibilities(const Eigen::VectorXd& x) const;
  /// ln(w_k) + ln N(x; mu_k, Sigma_k) for every k.
  Eigen::VectorXd component_log_densities(const Eigen::VectorXd& x) const;

 private:
  GmmParams gmm_;
  std::vector<Eigen::LLT<Eigen::MatrixXd>> chol_;
  Eigen::VectorXd log_norm_;  // ln w_k - 1/2 (d ln 2pi + ln|Sigma_k|)
};

}  // namespace ocpad
