#include "ocpad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "ocpad/error.hpp"

namespace ocpad {

std::size_t ScoredSet::count(Label y) const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), y)); }

namespace {

void check_set(const ScoredSet& set) {
  if (set.scores.size() != set.labels.size()) throw MetricError("scores and labels differ in length");
  if (set.scores.empty()) throw MetricError("empty score set");
  for (double s : set.scores)
    if (std::isnan(s)) throw MetricError("NaN score");
}

void require_class(const ScoredSet& set, Label y) {
  if (set.count(y) == 0) throw MetricError("score set contains no " + std::string(to_string(y)) + " samples");
}

// Sorted per-class scores for O(log n) rate queries.
struct SortedScores {
  std::vector<double> bonafide;
  std::vector<double> attack;

  explicit SortedScores(const ScoredSet& set) {
    for (std::size_t i = 0; i < set.scores.size(); ++i)
      (set.labels[i] == Label::bonafide ? bonafide : attack).push_back(set.scores[i]);
    std::sort(bonafide.begin(), bonafide.end());
    std::sort(attack.begin(), attack.end());
  }

  double bpcer(double tau) const {
    const auto below = std::lower_bound(bonafide.begin(), bonafide.end(), tau) - bonafide.begin();
    return static_cast<double>(below) / static_cast<double>(bonafide.size());
  }

  double apcer(double tau) const {
    const auto below = std::lower_bound(attack.begin(), attack.end(), tau) - attack.begin();
    return static_cast<double>(static_cast<std::ptrdiff_t>(attack.size()) - below) / static_cast<double>(attack.size());
  }
};

}  // namespace

ErrorRates compute_rates(const ScoredSet& set, double threshold) {
  check_set(set);
  require_class(set, Label::attack);
  require_class(set, Label::bonafide);
  const SortedScores sorted(set);
  ErrorRates r;
  r.apcer = sorted.apcer(threshold);
  r.bpcer = sorted.bpcer(threshold);
  r.acer = (r.apcer + r.bpcer) / 2.0;
  return r;
}

std::vector<double> candidate_thresholds(std::span<const double> scores) {
  std::vector<double> u(scores.begin(), scores.end());
  std::sort(u.begin(), u.end());
  u.erase(std::unique(u.begin(), u.end()), u.end());
  std::vector<double> out;
  if (u.empty()) return out;
  out.reserve(u.size() + 1);
  out.push_back(std::nextafter(u.front(), -std::numeric_limits<double>::infinity()));
  for (std::size_t i = 0; i + 1 < u.size(); ++i) out.push_back(u[i] + (u[i + 1] - u[i]) / 2.0);
  out.push_back(std::nextafter(u.back(), std::numeric_limits<double>::infinity()));
  return out;
}

double select_threshold(const ScoredSet& dev, double target_bpcer) {
  check_set(dev);
  require_class(dev, Label::bonafide);
  if (!(target_bpcer > 0.0 && target_bpcer < 1.0)) throw MetricError("target BPCER must lie in (0,1)");
  const SortedScores sorted(dev);
  const auto candidates = candidate_thresholds(dev.scores);
  // BPCER is non-decreasing in the threshold; the first candidate always has BPCER 0.
  double best = candidates.front();
  for (double tau : candidates) {
    if (sorted.bpcer(tau) > target_bpcer) break;
    best = tau;
  }
  return best;
}

EerResult equal_error_rate(const ScoredSet& set) {
  check_set(set);
  require_class(set, Label::attack);
  require_class(set, Label::bonafide);
  const SortedScores sorted(set);
  EerResult best;
  double best_gap = std::numeric_limits<double>::infinity();
  double best_sum = std::numeric_limits<double>::infinity();
  for (double tau : candidate_thresholds(set.scores)) {
    const double a = sorted.apcer(tau);
    const double b = sorted.bpcer(tau);
    const double gap = std::abs(a - b);
    const double sum = a + b;
    if (gap < best_gap || (gap == best_gap && sum < best_sum)) {
      best_gap = gap;
      best_sum = sum;
      best = {(a + b) / 2.0, tau};
    }
  }
  return best;
}

std::vector<DetPoint> det_points(const ScoredSet& set) {
  check_set(set);
  require_class(set, Label::attack);
  require_class(set, Label::bonafide);
  const SortedScores sorted(set);
  std::vector<DetPoint> out;
  for (double tau : candidate_thresholds(set.scores)) out.push_back({tau, sorted.apcer(tau), sorted.bpcer(tau)});
  return out;
}

}  // namespace ocpad
