#include "evsal/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

#include "evsal/error.hpp"

namespace evsal {

double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

namespace {

constexpr int kRefinements = 2;

double checked_value(const Var& v) {
  const double y = v.value().item();
  if (!std::isfinite(y)) throw Error(ErrorKind::NonFiniteValue, "objective is not finite");
  return y;
}

struct Sample {
  double value;
  std::uint64_t signature;
};

// Central difference of eval around the current point, shrinking h while the
// branch signature of either side differs from the one at the point.
template <typename Set, typename Eval>
std::optional<double> central_difference(Set&& set, Eval&& eval, double x, double h,
                                         std::uint64_t signature, GradCheckResult& r) {
  for (int attempt = 0; attempt <= kRefinements; ++attempt, h /= 10.0) {
    set(x + h);
    const Sample up = eval();
    set(x - h);
    const Sample down = eval();
    set(x);
    if (up.signature == signature && down.signature == signature) {
      return (up.value - down.value) / (2.0 * h);
    }
    if (attempt == 0) ++r.refined;
  }
  ++r.skipped;
  return std::nullopt;
}

// Ridders' extrapolation: central differences at steps h, h/2, h/4, ...
// combined in a Richardson tableau; returns the entry with the smallest
// internal error estimate. Steps whose evaluations cross a kink are skipped
// before the tableau starts and end it afterwards.
template <typename Set, typename Eval>
std::optional<double> ridders(Set&& set, Eval&& eval, double x, double h, std::uint64_t signature,
                              GradCheckResult& r) {
  constexpr int kLevels = 8;
  constexpr double kShrink = 2.0;
  constexpr double kSafe = 2.0;
  double table[kLevels][kLevels] = {};
  double err = std::numeric_limits<double>::infinity();
  std::optional<double> best;
  int level = 0;
  bool crossed = false;
  for (int step = 0; step < kLevels; ++step, h /= kShrink) {
    set(x + h);
    const Sample up = eval();
    set(x - h);
    const Sample down = eval();
    set(x);
    if (up.signature != signature || down.signature != signature) {
      if (level > 0) break;
      crossed = true;
      continue;
    }
    table[0][level] = (up.value - down.value) / (2.0 * h);
    if (level > 0) {
      double fac = kShrink * kShrink;
      for (int j = 1; j <= level; ++j) {
        table[j][level] = (table[j - 1][level] * fac - table[j - 1][level - 1]) / (fac - 1.0);
        fac *= kShrink * kShrink;
        const double e = std::max(std::abs(table[j][level] - table[j - 1][level]),
                                  std::abs(table[j][level] - table[j - 1][level - 1]));
        if (e <= err) {
          err = e;
          best = table[j][level];
        }
      }
      if (std::abs(table[level][level] - table[level - 1][level - 1]) >= kSafe * err) break;
    }
    ++level;
  }
  if (crossed) ++r.refined;
  if (!best) ++r.skipped;
  return best;
}

void note(GradCheckResult& r, const std::string& where, std::size_t i, double a, double n) {
  const double e = relative_error(a, n);
  ++r.checked;
  if (e > r.max_rel_error || r.checked == 1) {
    r.max_rel_error = std::max(r.max_rel_error, e);
    r.where = where;
    r.index = i;
    r.analytic = a;
    r.numeric = n;
  }
}

}  // namespace

GradCheckResult grad_check(const TensorFn& f, const Tensor& x, double h) {
  if (!x.all_finite()) throw Error(ErrorKind::NonFiniteValue, "input is not finite");
  Tensor analytic;
  std::uint64_t signature = 0;
  {
    Tape tape;
    const Var xv = tape.leaf(x);
    const Var y = f(tape, xv);
    checked_value(y);
    tape.backward(y);
    analytic = tape.grad(xv);
    signature = tape.branch_signature();
  }
  GradCheckResult r;
  Tensor probe = x;
  auto eval = [&] {
    Tape tape(false);
    const double y = checked_value(f(tape, tape.leaf(probe)));
    return Sample{y, tape.branch_signature()};
  };
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const auto n = central_difference([&](double v) { probe[i] = v; }, eval, x[i], h, signature, r);
    if (n) note(r, "x", i, analytic[i], *n);
  }
  return r;
}

GradCheckResult grad_check_params(const LossFn& loss, const std::vector<Parameter*>& params,
                                  double h, std::size_t samples_per_tensor, std::uint64_t seed,
                                  Difference method) {
  for (Parameter* p : params) p->zero_grad();
  std::uint64_t signature = 0;
  {
    Tape tape;
    const Var y = loss(tape);
    checked_value(y);
    tape.backward(y);
    signature = tape.branch_signature();
  }
  std::vector<Tensor> analytic;
  analytic.reserve(params.size());
  for (Parameter* p : params) analytic.push_back(p->grad);

  auto eval = [&] {
    Tape tape(false);
    const double y = checked_value(loss(tape));
    return Sample{y, tape.branch_signature()};
  };
  std::mt19937_64 rng(seed);
  GradCheckResult r;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Parameter& p = *params[k];
    if (!p.trainable) continue;
    std::vector<std::size_t> coords(p.value.numel());
    std::iota(coords.begin(), coords.end(), 0);
    if (samples_per_tensor > 0 && samples_per_tensor < coords.size()) {
      std::shuffle(coords.begin(), coords.end(), rng);
      coords.resize(samples_per_tensor);
      std::sort(coords.begin(), coords.end());
    }
    for (std::size_t i : coords) {
      auto set = [&](double v) { p.value[i] = v; };
      const auto n = method == Difference::Ridders
                         ? ridders(set, eval, p.value[i], h, signature, r)
                         : central_difference(set, eval, p.value[i], h, signature, r);
      if (n) note(r, p.name, i, analytic[k][i], *n);
    }
  }
  return r;
}

}  // namespace evsal
