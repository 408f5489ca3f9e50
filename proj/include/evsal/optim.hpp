#pragma once

#include <span>

#include "evsal/tape.hpp"

namespace evsal {

struct AdamWConfig {
  double lr = 0.006;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled weight decay, then a bias-corrected Adam update. Frozen
/// parameters are skipped. Throws MissingGradient if a trainable parameter's
/// gradient does not match its value.
void adamw_step(std::span<Parameter* const> params, const AdamWConfig& cfg);

}  // namespace evsal
