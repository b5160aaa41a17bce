#include "ocpad/losses.hpp"

#include <cmath>
#include <string>

#include "ocpad/error.hpp"

namespace ocpad {

void LossConfig::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda must lie in [0,1]");
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0,1]");
}

ScalarLoss bce_loss(double p, Label y) {
  if (!(p > 0.0 && p < 1.0)) throw InputError("probability " + std::to_string(p) + " outside (0,1)");
  if (y == Label::bonafide) return {-std::log(p), -1.0 / p};
  return {-std::log1p(-p), 1.0 / (1.0 - p)};
}

double distance_to_center(const Eigen::VectorXd& x, const BonafideCenter& c) {
  if (x.size() != c.center.size())
    throw InputError("embedding has dimension " + std::to_string(x.size()) + ", center has " +
                     std::to_string(c.center.size()));
  return (x - c.center).norm();
}

EmbeddingLoss occl_loss(const Eigen::VectorXd& x, const BonafideCenter& c, Label y, double margin) {
  if (!(margin > 0.0)) throw ConfigError("margin must be positive");
  const double d = distance_to_center(x, c);
  EmbeddingLoss r;
  if (y == Label::bonafide) {
    r.loss = 0.5 * d * d;
    r.d_embedding = x - c.center;
    return r;
  }
  r.d_embedding = Eigen::VectorXd::Zero(x.size());
  if (d >= margin) return r;
  const double gap = margin - d;
  r.loss = 0.5 * gap * gap;
  if (d > 0.0) r.d_embedding = (-gap / d) * (x - c.center);
  return r;
}

double combined_loss(double bce, double occl, double lambda) {
  if (lambda == 0.0) return bce;
  return (1.0 - lambda) * bce + lambda * occl;
}

BonafideCenter update_center(const BonafideCenter& c, std::span<const Eigen::VectorXd> bonafide_embeddings) {
  if (bonafide_embeddings.empty()) return c;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(bonafide_embeddings.front().size());
  for (const auto& e : bonafide_embeddings) {
    if (e.size() != mean.size()) throw InputError("bonafide embeddings have inconsistent dimensions");
    mean += e;
  }
  mean /= static_cast<double>(bonafide_embeddings.size());

  BonafideCenter next = c;
  if (!c.initialized) {
    next.center = mean;
    next.initialized = true;
    return next;
  }
  if (mean.size() != c.center.size()) throw InputError("embedding dimension does not match center");
  next.center = (1.0 - c.alpha) * c.center + c.alpha * mean;
  return next;
}

double center_loss(std::span<const Eigen::VectorXd> embeddings, std::span<const int> labels,
                   const std::map<int, Eigen::VectorXd>& class_centers) {
  if (embeddings.size() != labels.size()) throw InputError("embeddings and labels differ in length");
  double total = 0.0;
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    auto it = class_centers.find(labels[i]);
    if (it == class_centers.end()) throw InputError("no center for label " + std::to_string(labels[i]));
    if (it->second.size() != embeddings[i].size()) throw InputError("center dimension mismatch");
    total += (embeddings[i] - it->second).squaredNorm();
  }
  return 0.5 * total;
}

}  // namespace ocpad
