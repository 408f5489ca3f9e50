#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "evsal/tape.hpp"

namespace evsal {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
  // Location of the worst coordinate.
  std::string where;
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  // Probes whose interval [x - h, x + h] contained a kink (a branch of
  // leaky_relu or the KL minimum flipped) and were repeated with h / 10.
  std::size_t refined = 0;
  // Probes still straddling a kink at the smallest step; not compared.
  std::size_t skipped = 0;
};

/// Relative error with denominator max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

/// Scalar function of one tensor, built on the given tape.
using TensorFn = std::function<Var(Tape&, const Var&)>;

/// Compares the reverse-mode gradient of f at x with central differences
/// (f(x + h e_i) - f(x - h e_i)) / 2h on every coordinate. A probe whose
/// evaluations disagree on the tape's branch signature is retried with h / 10
/// and h / 100.
GradCheckResult grad_check(const TensorFn& f, const Tensor& x, double h = 1e-5);

enum class Difference {
  // (f(x + h) - f(x - h)) / 2h, retried at h / 10 and h / 100 across kinks.
  Central,
  // Central differences from h down by halves, Richardson-extrapolated;
  // the estimate with the smallest tableau error is used.
  Ridders,
};

/// Scalar loss over bound parameters, built on the given tape.
using LossFn = std::function<Var(Tape&)>;

/// Finite-difference check of parameter gradients. With
/// samples_per_tensor == 0 every coordinate is checked; otherwise that many
/// coordinates per parameter tensor are drawn with the given seed.
GradCheckResult grad_check_params(const LossFn& loss, const std::vector<Parameter*>& params,
                                  double h = 1e-5, std::size_t samples_per_tensor = 0,
                                  std::uint64_t seed = 0, Difference method = Difference::Central);

}  // namespace evsal
