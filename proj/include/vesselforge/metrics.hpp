#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "vesselforge/error.hpp"
#include "vesselforge/patch.hpp"
#include "vesselforge/raster.hpp"

namespace vf {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  bool operator==(const RocPoint&) const = default;
};

struct Roc {
  std::vector<RocPoint> points;
  double auc = 0.0;
};

struct MetricsReport {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  double accuracy = 0.0;
  double sensitivity = 0.0;
  double specificity = 0.0;
  double auc = std::numeric_limits<double>::quiet_NaN();
  std::vector<RocPoint> roc;
  double threshold = 0.5;

  std::uint64_t total() const { return tp + fp + tn + fn; }

  /// Recomputes the ratios from the counts; an empty class gives NaN.
  void finalize_rates() {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    accuracy = total() ? static_cast<double>(tp + tn) / static_cast<double>(total()) : nan;
    sensitivity = (tp + fn) ? static_cast<double>(tp) / static_cast<double>(tp + fn) : nan;
    specificity = (tn + fp) ? static_cast<double>(tn) / static_cast<double>(tn + fp) : nan;
  }
};

/// Confusion counts over FOV pixels, predicting vessel where p >= threshold.
inline MetricsReport confusion_at(const ProbMap& probs, const FovMask& gt, const FovMask& fov, double threshold = 0.5) {
  require(probs.width == gt.width && probs.height == gt.height && fov.width == gt.width && fov.height == gt.height,
          Errc::DimensionMismatch, "probability map, ground truth and FOV sizes differ");
  MetricsReport m;
  m.threshold = threshold;
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (!fov.data[i]) continue;
    const bool pred = probs.data[i] >= threshold;
    const bool truth = gt.data[i] != 0;
    if (pred && truth) ++m.tp;
    else if (pred) ++m.fp;
    else if (truth) ++m.fn;
    else ++m.tn;
  }
  m.finalize_rates();
  return m;
}

/// ROC by sweeping the threshold down through every distinct score: each
/// group of equal scores flips to positive together, giving one point. The
/// curve runs from (0,0) (threshold above the max) to (1,1) (below the min);
/// AUC is the trapezoidal area.
template <class Score>
Roc roc_auc(std::span<const Score> scores, std::span<const std::uint8_t> labels) {
  require(scores.size() == labels.size(), Errc::DimensionMismatch, "score and label counts differ");
  std::uint64_t pos = 0;
  for (auto l : labels) pos += l ? 1 : 0;
  const std::uint64_t neg = labels.size() - pos;
  require(pos > 0 && neg > 0, Errc::DegenerateClasses, "ROC needs at least one positive and one negative");

  std::vector<std::uint32_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
  });

  Roc roc;
  roc.points.push_back({0.0, 0.0});
  std::uint64_t tp = 0, fp = 0;
  double area2 = 0.0;  // twice the area, in units of 1/(pos*neg)
  std::size_t i = 0;
  while (i < order.size()) {
    const Score s = scores[order[i]];
    const std::uint64_t tp0 = tp, fp0 = fp;
    while (i < order.size() && scores[order[i]] == s) {
      if (labels[order[i]]) ++tp;
      else ++fp;
      ++i;
    }
    area2 += static_cast<double>(fp - fp0) * static_cast<double>(tp + tp0);
    roc.points.push_back({static_cast<double>(fp) / neg, static_cast<double>(tp) / pos});
  }
  roc.auc = area2 / (2.0 * static_cast<double>(pos) * static_cast<double>(neg));
  return roc;
}

/// Gathers the FOV pixels of one image into score/label arrays.
inline void collect_fov(const ProbMap& probs, const FovMask& gt, const FovMask& fov, std::vector<float>& scores,
                        std::vector<std::uint8_t>& labels) {
  require(probs.width == gt.width && probs.height == gt.height && fov.width == gt.width && fov.height == gt.height,
          Errc::DimensionMismatch, "probability map, ground truth and FOV sizes differ");
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    if (!fov.data[i]) continue;
    scores.push_back(probs.data[i]);
    labels.push_back(gt.data[i] ? 1 : 0);
  }
}

inline Roc roc_auc(const ProbMap& probs, const FovMask& gt, const FovMask& fov) {
  std::vector<float> s;
  std::vector<std::uint8_t> l;
  collect_fov(probs, gt, fov, s, l);
  return roc_auc<float>(s, l);
}

/// Keeps at most `max_points` ROC points (always the first and last), for
/// compact reports and plots.
inline std::vector<RocPoint> thin_roc(const std::vector<RocPoint>& pts, std::size_t max_points) {
  if (pts.size() <= max_points || max_points < 2) return pts;
  std::vector<RocPoint> out;
  out.reserve(max_points);
  const double step = static_cast<double>(pts.size() - 1) / static_cast<double>(max_points - 1);
  for (std::size_t k = 0; k < max_points; ++k)
    out.push_back(pts[static_cast<std::size_t>(std::llround(k * step))]);
  return out;
}

}  // namespace vf
