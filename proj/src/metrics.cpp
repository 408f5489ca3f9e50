#include "evsal/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <tuple>

#include "evsal/error.hpp"

namespace evsal {

FixationSet::FixationSet(SensorGeometry geometry,
                         std::vector<std::pair<std::size_t, std::size_t>> xy)
    : geometry_(geometry), points_(std::move(xy)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    const auto [x, y] = points_[i];
    if (x >= geometry_.width || y >= geometry_.height) {
      throw Error(ErrorKind::OutOfBounds, "fixation outside the map", i);
    }
  }
  std::sort(points_.begin(), points_.end(), [](const auto& a, const auto& b) {
    return std::tie(a.second, a.first) < std::tie(b.second, b.first);
  });
  points_.erase(std::unique(points_.begin(), points_.end()), points_.end());
}

namespace {

void require_same_shape(const SaliencyMap& a, const SaliencyMap& b) {
  if (a.width != b.width || a.height != b.height || a.values.size() != b.values.size()) {
    throw Error(ErrorKind::ShapeMismatch,
                std::to_string(a.width) + "x" + std::to_string(a.height) + " vs " +
                    std::to_string(b.width) + "x" + std::to_string(b.height));
  }
}

void require_fixations_match(const SaliencyMap& map, const FixationSet& fix) {
  if (fix.geometry().width != map.width || fix.geometry().height != map.height) {
    throw Error(ErrorKind::ShapeMismatch, "fixation geometry differs from map");
  }
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

bool is_constant(const SaliencyMap& map) {
  if (map.values.empty()) return true;
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  return *lo == *hi;
}

SaliencyMap normalize_to_distribution(const SaliencyMap& map, double eps) {
  SaliencyMap out = map;
  if (map.values.empty()) return out;
  const double lo = *std::min_element(map.values.begin(), map.values.end());
  double total = 0.0;
  for (double& v : out.values) {
    v = v - lo + eps;
    total += v;
  }
  for (double& v : out.values) v /= total;
  return out;
}

double cc(const SaliencyMap& pred, const SaliencyMap& gt) {
  require_same_shape(pred, gt);
  if (is_constant(pred) || is_constant(gt)) {
    throw Error(ErrorKind::ZeroVariance, "correlation undefined for a constant map");
  }
  const double mp = mean_of(pred.values);
  const double mg = mean_of(gt.values);
  double cov = 0.0, vp = 0.0, vg = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred.values[i] - mp;
    const double b = gt.values[i] - mg;
    cov += a * b;
    vp += a * a;
    vg += b * b;
  }
  return std::clamp(cov / (std::sqrt(vp) * std::sqrt(vg)), -1.0, 1.0);
}

double sim(const SaliencyMap& pred, const SaliencyMap& gt, double eps) {
  require_same_shape(pred, gt);
  const SaliencyMap p = normalize_to_distribution(pred, eps);
  const SaliencyMap q = normalize_to_distribution(gt, eps);
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::min(p.values[i], q.values[i]);
  return std::clamp(s, 0.0, 1.0);
}

double nss(const SaliencyMap& pred, const FixationSet& fix) {
  require_fixations_match(pred, fix);
  if (fix.empty()) throw Error(ErrorKind::EmptyFixations, "NSS needs at least one fixation");
  if (is_constant(pred)) return 0.0;
  const double mu = mean_of(pred.values);
  double var = 0.0;
  for (double v : pred.values) var += (v - mu) * (v - mu);
  const double sigma = std::sqrt(var / static_cast<double>(pred.size()));
  double acc = 0.0;
  for (const auto& [x, y] : fix.points()) acc += (pred(y, x) - mu) / sigma;
  return acc / static_cast<double>(fix.size());
}

double auc_judd(const SaliencyMap& pred, const FixationSet& fix) {
  require_fixations_match(pred, fix);
  if (fix.empty()) throw Error(ErrorKind::EmptyFixations, "AUC-Judd needs fixations");
  if (fix.size() >= pred.size()) {
    throw Error(ErrorKind::NoNegatives, "every pixel is a fixation");
  }

  std::vector<char> is_fix(pred.size(), 0);
  std::vector<double> positives;
  positives.reserve(fix.size());
  for (const auto& [x, y] : fix.points()) {
    is_fix[y * pred.width + x] = 1;
    positives.push_back(pred(y, x));
  }
  std::vector<double> negatives;
  negatives.reserve(pred.size() - fix.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!is_fix[i]) negatives.push_back(pred.values[i]);
  }
  std::sort(positives.begin(), positives.end(), std::greater<>());
  std::sort(negatives.begin(), negatives.end(), std::greater<>());

  const auto n_pos = static_cast<double>(positives.size());
  const auto n_neg = static_cast<double>(negatives.size());
  double area = 0.0;
  double prev_fpr = 0.0, prev_tpr = 0.0;
  std::size_t tp = 0, fp = 0;
  for (const double theta : positives) {
    while (tp < positives.size() && positives[tp] >= theta) ++tp;
    while (fp < negatives.size() && negatives[fp] >= theta) ++fp;
    const double tpr = static_cast<double>(tp) / n_pos;
    const double fpr = static_cast<double>(fp) / n_neg;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
  return std::clamp(area, 0.0, 1.0);
}

MetricReport evaluate_all(const SaliencyMap& pred, const SaliencyMap& gt,
                          const FixationSet& fix) {
  require_same_shape(pred, gt);
  require_fixations_match(pred, fix);
  MetricReport r;
  if (!fix.empty() && fix.size() < pred.size()) r.auc_j = auc_judd(pred, fix);
  if (!is_constant(pred) && !is_constant(gt)) r.cc = cc(pred, gt);
  r.sim = sim(pred, gt);
  if (!fix.empty()) r.nss = nss(pred, fix);
  return r;
}

}  // namespace evsal
