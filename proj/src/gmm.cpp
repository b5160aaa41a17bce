#include "ocpad/gmm.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include "ocpad/error.hpp"

namespace ocpad {

void EmConfig::validate() const {
  if (components < 1) throw ConfigError("GMM needs at least one component");
  if (max_iters < 1) throw ConfigError("max_iters must be >= 1");
  if (!(rel_tol > 0.0)) throw ConfigError("rel_tol must be positive");
  if (!(cov_reg > 0.0)) throw ConfigError("cov_reg must be positive");
}

namespace {

double log_sum_exp(const Eigen::VectorXd& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  return m + std::log((v.array() - m).exp().sum());
}

void check_dim(const GmmParams& gmm, const Eigen::VectorXd& x) {
  if (x.size() != gmm.dim())
    throw InputError("point has dimension " + std::to_string(x.size()) + ", GMM has " + std::to_string(gmm.dim()));
}

}  // namespace

GmmScorer::GmmScorer(const GmmParams& gmm) : gmm_(gmm) {
  const int k = gmm.components();
  if (k < 1 || static_cast<int>(gmm.means.size()) != k || static_cast<int>(gmm.covariances.size()) != k)
    throw InputError("GMM component arrays are inconsistent");
  const double d = gmm.dim();
  log_norm_.resize(k);
  chol_.reserve(k);
  for (int j = 0; j < k; ++j) {
    chol_.emplace_back(gmm.covariances[j]);
    if (chol_.back().info() != Eigen::Success)
      throw FitError("covariance of component " + std::to_string(j) + " is not positive-definite");
    const double log_det = 2.0 * chol_.back().matrixL().toDenseMatrix().diagonal().array().log().sum();
    log_norm_(j) = std::log(gmm.weights(j)) - 0.5 * (d * std::log(2.0 * std::numbers::pi) + log_det);
  }
}

Eigen::VectorXd GmmScorer::component_log_densities(const Eigen::VectorXd& x) const {
  check_dim(gmm_, x);
  Eigen::VectorXd out(gmm_.components());
  for (int j = 0; j < gmm_.components(); ++j) {
    const Eigen::VectorXd z = chol_[j].matrixL().solve(x - gmm_.means[j]);
    out(j) = log_norm_(j) - 0.5 * z.squaredNorm();
  }
  return out;
}

double GmmScorer::log_likelihood(const Eigen::VectorXd& x) const { return log_sum_exp(component_log_densities(x)); }

Eigen::VectorXd GmmScorer::responsibilities(const Eigen::VectorXd& x) const {
  const Eigen::VectorXd l = component_log_densities(x);
  const double m = l.maxCoeff();
  Eigen::VectorXd r = (l.array() - m).exp();
  return r / r.sum();
}

double log_likelihood(const GmmParams& gmm, const Eigen::VectorXd& x) { return GmmScorer(gmm).log_likelihood(x); }

Eigen::VectorXd responsibilities(const GmmParams& gmm, const Eigen::VectorXd& x) {
  return GmmScorer(gmm).responsibilities(x);
}

namespace {

Eigen::MatrixXd biased_covariance(std::span<const Eigen::VectorXd> data, const Eigen::VectorXd& mean) {
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(mean.size(), mean.size());
  for (const auto& x : data) {
    const Eigen::VectorXd d = x - mean;
    cov.noalias() += d * d.transpose();
  }
  return cov / static_cast<double>(data.size());
}

Eigen::VectorXd sample_mean(std::span<const Eigen::VectorXd> data) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(data.front().size());
  for (const auto& x : data) m += x;
  return m / static_cast<double>(data.size());
}

void symmetrize(Eigen::MatrixXd& m) { m = 0.5 * (m + m.transpose()).eval(); }

std::vector<Eigen::VectorXd> kmeans_centers(std::span<const Eigen::VectorXd> data, int k, std::mt19937_64& rng) {
  const std::size_t n = data.size();
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<Eigen::VectorXd> centers{data[pick(rng)]};
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  while (static_cast<int>(centers.size()) < k) {
    std::size_t far = 0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], (data[i] - centers.back()).squaredNorm());
      if (nearest[i] > nearest[far]) far = i;
    }
    centers.push_back(data[far]);
  }

  std::vector<int> assign(n, 0);
  for (int iter = 0; iter < 10; ++iter) {
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (int j = 0; j < k; ++j) {
        const double d = (data[i] - centers[j]).squaredNorm();
        if (d < best) {
          best = d;
          assign[i] = j;
        }
      }
    }
    std::vector<Eigen::VectorXd> sums(k, Eigen::VectorXd::Zero(data.front().size()));
    std::vector<int> counts(k, 0);
    for (std::size_t i = 0; i < n; ++i) {
      sums[assign[i]] += data[i];
      ++counts[assign[i]];
    }
    for (int j = 0; j < k; ++j)
      if (counts[j] > 0) centers[j] = sums[j] / counts[j];
  }
  return centers;
}

GmmParams initial_mixture(std::span<const Eigen::VectorXd> data, const EmConfig& cfg, const Eigen::MatrixXd& global_cov) {
  const int k = cfg.components;
  const std::size_t n = data.size();
  const Eigen::Index d = data.front().size();
  const Eigen::MatrixXd reg = cfg.cov_reg * Eigen::MatrixXd::Identity(d, d);
  std::mt19937_64 rng(cfg.seed);

  GmmParams g;
  if (cfg.init == EmInit::random_points) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (int j = 0; j < k; ++j) {
      std::uniform_int_distribution<std::size_t> pick(j, n - 1);
      std::swap(idx[j], idx[pick(rng)]);
      g.means.push_back(data[idx[j]]);
      g.covariances.push_back(global_cov + reg);
    }
    g.weights = Eigen::VectorXd::Constant(k, 1.0 / k);
    return g;
  }

  g.means = kmeans_centers(data, k, rng);
  std::vector<std::vector<Eigen::VectorXd>> members(k);
  for (const auto& x : data) {
    int best = 0;
    for (int j = 1; j < k; ++j)
      if ((x - g.means[j]).squaredNorm() < (x - g.means[best]).squaredNorm()) best = j;
    members[best].push_back(x);
  }
  g.weights.resize(k);
  for (int j = 0; j < k; ++j) {
    const auto& m = members[j];
    g.covariances.push_back((m.size() >= 2 ? biased_covariance(m, g.means[j]) : global_cov) + reg);
    g.weights(j) = std::max<double>(static_cast<double>(m.size()), 1.0);
  }
  g.weights /= g.weights.sum();
  return g;
}

}  // namespace

EmResult fit_em(std::span<const Eigen::VectorXd> data, const EmConfig& cfg) {
  cfg.validate();
  const std::size_t n = data.size();
  const int k = cfg.components;
  if (n < static_cast<std::size_t>(k))
    throw FitError("need at least " + std::to_string(k) + " points for " + std::to_string(k) +
                   " components, got " + std::to_string(n));
  const Eigen::Index d = data.front().size();
  if (d < 1) throw InputError("points must have at least one dimension");
  for (const auto& x : data) {
    if (x.size() != d) throw InputError("points have inconsistent dimensions");
    if (!x.allFinite()) throw InputError("non-finite value in GMM training data");
  }

  const Eigen::VectorXd global_mean = sample_mean(data);
  const Eigen::MatrixXd global_cov = biased_covariance(data, global_mean);
  const Eigen::MatrixXd reg = cfg.cov_reg * Eigen::MatrixXd::Identity(d, d);

  EmResult result;
  result.gmm = initial_mixture(data, cfg, global_cov);

  Eigen::MatrixXd resp(n, k);
  Eigen::VectorXd point_ll(n);
  auto e_step = [&]() {
    GmmScorer scorer(result.gmm);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const Eigen::VectorXd l = scorer.component_log_densities(data[i]);
      const double lse = log_sum_exp(l);
      point_ll(i) = lse;
      resp.row(i) = (l.array() - lse).exp().transpose();
      total += lse;
    }
    return total / static_cast<double>(n);
  };

  double prev = e_step();
  result.trace.push_back(prev);
  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    // M-step.
    Eigen::Index worst_point = 0;
    point_ll.minCoeff(&worst_point);
    for (int j = 0; j < k; ++j) {
      const double mass = resp.col(j).sum();
      if (mass < 1e-8 * static_cast<double>(n)) {
        result.gmm.means[j] = data[worst_point];
        result.gmm.covariances[j] = global_cov + reg;
        result.gmm.weights(j) = 1.0 / static_cast<double>(n);
        continue;
      }
      Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
      for (std::size_t i = 0; i < n; ++i) mean += resp(i, j) * data[i];
      mean /= mass;
      Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
      for (std::size_t i = 0; i < n; ++i) {
        const Eigen::VectorXd diff = data[i] - mean;
        cov.noalias() += resp(i, j) * diff * diff.transpose();
      }
      cov /= mass;
      symmetrize(cov);
      result.gmm.means[j] = std::move(mean);
      result.gmm.covariances[j] = cov + reg;
      result.gmm.weights(j) = mass / static_cast<double>(n);
    }
    result.gmm.weights /= result.gmm.weights.sum();

    const double ll = e_step();
    result.trace.push_back(ll);
    result.iterations = iter + 1;
    if (std::abs(ll - prev) <= cfg.rel_tol * std::abs(prev)) {
      result.converged = true;
      break;
    }
    prev = ll;
  }
  return result;
}

}  // namespace ocpad
