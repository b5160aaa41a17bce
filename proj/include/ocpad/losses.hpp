#pragma once

#include <map>
#include <span>

#include <Eigen/Dense>

#include "ocpad/types.hpp"

namespace ocpad {

struct LossConfig {
  double lambda = 0.5;  // weight of the one-class term
  double margin = 3.0;
  double alpha = 0.5;  // center smoothing

  void validate() const;
};

/// Running center of the bonafide embeddings.
struct BonafideCenter {
  Eigen::VectorXd center;
  double alpha = 0.5;
  bool initialized = false;
};

struct ScalarLoss {
  double loss = 0.0;
  double d_probability = 0.0;
};

struct EmbeddingLoss {
  double loss = 0.0;
  Eigen::VectorXd d_embedding;
};

/// Binary cross-entropy with y = 1 for bonafide. Requires 0 < p < 1.
ScalarLoss bce_loss(double p, Label y);

double distance_to_center(const Eigen::VectorXd& x, const BonafideCenter& c);

/// One-class contrastive loss: bonafide samples are pulled to the center
/// (1/2 d^2), attacks closer than `margin` are pushed out (1/2 max(0, m-d)^2).
/// The attack gradient at d = 0 is defined as zero.
EmbeddingLoss occl_loss(const Eigen::VectorXd& x, const BonafideCenter& c, Label y, double margin);

/// (1 - lambda) * bce + lambda * occl. Returns `bce` bit-exactly at lambda = 0.
double combined_loss(double bce, double occl, double lambda);

/// EMA toward the mean of `bonafide_embeddings`:
/// c <- (1 - alpha) c + alpha * mean. No-op for an empty batch; an
/// uninitialized center jumps straight to the mean.
BonafideCenter update_center(const BonafideCenter& c, std::span<const Eigen::VectorXd> bonafide_embeddings);

/// 1/2 sum_i |x_i - c_{y_i}|^2 (classic center loss, kept as a baseline).
double center_loss(std::span<const Eigen::VectorXd> embeddings, std::span<const int> labels,
                   const std::map<int, Eigen::VectorXd>& class_centers);

}  // namespace ocpad
