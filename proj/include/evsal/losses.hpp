#pragma once

#include "evsal/metrics.hpp"
#include "evsal/tape.hpp"

namespace evsal {

struct LossWeights {
  double alpha1 = 0.5;  // CC
  double alpha2 = 0.7;  // BCE
  double eps = kDistributionEps;

  void validate() const;
};

// Each loss treats the last two axes of pred and gt as one map, computes the
// per-map term, and averages over all leading axes. gt is a plain tensor and
// receives no gradient.

/// KL(gt || pred) after normalize_to_distribution on both maps.
Var loss_kl(const Var& pred, const Tensor& gt, double eps = kDistributionEps);
/// Negated Pearson correlation; 0 with zero gradient when either map is
/// constant.
Var loss_cc(const Var& pred, const Tensor& gt);
/// Pixel-mean binary cross entropy with 0 * log 0 := 0. Throws RangeViolation
/// if pred leaves [0, 1] or a term with nonzero weight is infinite.
Var loss_bce(const Var& pred, const Tensor& gt);
/// Mean over maps of KL + alpha1 * CC + alpha2 * BCE.
Var combined_loss(const Var& pred, const Tensor& gt, const LossWeights& w = {});

// Single-map conveniences.
double loss_kl(const SaliencyMap& pred, const SaliencyMap& gt, double eps = kDistributionEps);
double loss_cc(const SaliencyMap& pred, const SaliencyMap& gt);
double loss_bce(const SaliencyMap& pred, const SaliencyMap& gt);
double combined_loss(const SaliencyMap& pred, const SaliencyMap& gt, const LossWeights& w = {});

}  // namespace evsal
