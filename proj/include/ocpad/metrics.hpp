#pragma once

// ISO/IEC 30107-3 style error rates. Decision rule everywhere:
// score >= threshold  =>  classified bonafide.

#include <span>
#include <vector>

#include "ocpad/types.hpp"

namespace ocpad {

struct ScoredSet {
  std::vector<double> scores;  // higher = more bonafide-like
  std::vector<Label> labels;

  std::size_t count(Label y) const;
};

struct ErrorRates {
  double apcer = 0.0;
  double bpcer = 0.0;
  double acer = 0.0;
};

ErrorRates compute_rates(const ScoredSet& set, double threshold);

/// Candidate thresholds: a value just below the minimum score, the midpoints
/// of adjacent unique scores, and a value just above the maximum. Ascending.
std::vector<double> candidate_thresholds(std::span<const double> scores);

/// Largest candidate threshold whose BPCER on `dev` is <= target_bpcer.
double select_threshold(const ScoredSet& dev, double target_bpcer);

struct EerResult {
  double eer = 0.0;
  double threshold = 0.0;
};

/// Candidate minimizing |APCER - BPCER|; ties go to the smaller
/// APCER + BPCER, then to the lower threshold.
EerResult equal_error_rate(const ScoredSet& set);

struct DetPoint {
  double threshold = 0.0;
  double apcer = 0.0;
  double bpcer = 0.0;
};

/// One point per candidate threshold, ascending in threshold.
std::vector<DetPoint> det_points(const ScoredSet& set);

}  // namespace ocpad
