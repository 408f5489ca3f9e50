#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "evsal/event_core.hpp"
#include "evsal/image.hpp"

namespace evsal {

using SaliencyMap = Image;

/// Distinct in-bounds fixation pixels. Duplicates collapse on construction.
class FixationSet {
 public:
  FixationSet(SensorGeometry geometry, std::vector<std::pair<std::size_t, std::size_t>> xy);

  const SensorGeometry& geometry() const { return geometry_; }
  /// (x, y) pairs sorted row-major.
  const std::vector<std::pair<std::size_t, std::size_t>>& points() const { return points_; }
  bool empty() const { return points_.empty(); }
  std::size_t size() const { return points_.size(); }

 private:
  SensorGeometry geometry_;
  std::vector<std::pair<std::size_t, std::size_t>> points_;
};

/// Metric bundle; an empty optional marks a metric whose preconditions
/// failed for this input (for example CC against a constant map).
struct MetricReport {
  std::optional<double> auc_j;
  std::optional<double> cc;
  std::optional<double> sim;
  std::optional<double> nss;
};

inline constexpr double kDistributionEps = 1e-9;

/// (map - min + eps) / sum(map - min + eps).
SaliencyMap normalize_to_distribution(const SaliencyMap& map, double eps = kDistributionEps);

/// Pearson correlation of the flattened maps. Throws ZeroVariance.
double cc(const SaliencyMap& pred, const SaliencyMap& gt);

/// Histogram intersection of the two maps after normalize_to_distribution.
double sim(const SaliencyMap& pred, const SaliencyMap& gt, double eps = kDistributionEps);

/// Mean z-score (population sigma) of pred at fixations; 0 for constant maps.
double nss(const SaliencyMap& pred, const FixationSet& fix);

/// ROC area with thresholds at fixation saliency values, ">=" ties, and
/// non-fixation pixels as negatives.
double auc_judd(const SaliencyMap& pred, const FixationSet& fix);

MetricReport evaluate_all(const SaliencyMap& pred, const SaliencyMap& gt,
                          const FixationSet& fix);

/// True when the map's values are all equal up to rounding noise.
bool is_constant(const SaliencyMap& map);

}  // namespace evsal
