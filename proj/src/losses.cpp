#include "evsal/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "evsal/error.hpp"
#include "evsal/ops.hpp"

namespace evsal {

void LossWeights::validate() const {
  if (!(alpha1 >= 0) || !(alpha2 >= 0)) {
    throw Error(ErrorKind::InvalidConfig, "loss weights must be non-negative");
  }
  if (!(eps > 0)) throw Error(ErrorKind::InvalidConfig, "distribution floor must be positive");
}

namespace {

struct MapLayout {
  std::size_t maps;
  std::size_t pixels;
};

MapLayout layout_of(const Var& pred, const Tensor& gt) {
  const Shape& s = pred.shape();
  if (s != gt.shape()) {
    throw Error(ErrorKind::ShapeMismatch, "prediction " + shape_string(s) + " vs ground truth " +
                                              shape_string(gt.shape()));
  }
  if (s.size() < 2 || s[s.size() - 1] * s[s.size() - 2] == 0) {
    throw Error(ErrorKind::ShapeMismatch, "maps need two non-empty spatial axes");
  }
  const std::size_t pixels = s[s.size() - 1] * s[s.size() - 2];
  return {pred.value().numel() / pixels, pixels};
}

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw Error(ErrorKind::DetachedNode, "loss of an empty variable");
  return *v.tape();
}

// Distribution of one map: a_i = x_i - min + eps, with the argmin position.
struct Shifted {
  std::vector<double> a;
  double total = 0.0;
  std::size_t argmin = 0;
};

Shifted shift(const double* x, std::size_t n, double eps) {
  Shifted s;
  s.argmin = static_cast<std::size_t>(std::min_element(x, x + n) - x);
  const double lo = x[s.argmin];
  s.a.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    s.a[i] = x[i] - lo + eps;
    s.total += s.a[i];
  }
  return s;
}

}  // namespace

Var loss_kl(const Var& pred, const Tensor& gt, double eps) {
  const MapLayout l = layout_of(pred, gt);
  const Tensor& p = pred.value();
  double total = 0.0;
  for (std::size_t m = 0; m < l.maps; ++m) {
    const Shifted q = shift(p.ptr() + m * l.pixels, l.pixels, eps);
    const Shifted y = shift(gt.ptr() + m * l.pixels, l.pixels, eps);
    tape_of(pred).note_branch(q.argmin);
    double kl = 0.0;
    for (std::size_t i = 0; i < l.pixels; ++i) {
      const double pi = y.a[i] / y.total;
      const double qi = q.a[i] / q.total;
      if (pi > 0) kl += pi * std::log(pi / qi);
    }
    total += kl;
  }
  const double maps = static_cast<double>(l.maps);
  return tape_of(pred).record(Tensor::scalar(total / maps), {pred},
                              [gt, l, eps, maps](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    const double go = c.grad_out.item() / maps;
    const Tensor& p = c.in(0);
    for (std::size_t m = 0; m < l.maps; ++m) {
      const Shifted q = shift(p.ptr() + m * l.pixels, l.pixels, eps);
      const Shifted y = shift(gt.ptr() + m * l.pixels, l.pixels, eps);
      double* gm = g->ptr() + m * l.pixels;
      double through_min = 0.0;
      for (std::size_t i = 0; i < l.pixels; ++i) {
        const double pi = y.a[i] / y.total;
        const double d = go * (1.0 / q.total - pi / q.a[i]);
        gm[i] += d;
        through_min += d;
      }
      gm[q.argmin] -= through_min;
    }
  });
}

Var loss_cc(const Var& pred, const Tensor& gt) {
  const MapLayout l = layout_of(pred, gt);
  const Tensor& p = pred.value();
  struct Stats {
    bool degenerate;
    double r, saa, sbb;
  };
  auto stats = [l](const double* a, const double* b, std::vector<double>& ac,
                   std::vector<double>& bc) {
    const std::size_t n = l.pixels;
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      ma += a[i];
      mb += b[i];
    }
    ma /= static_cast<double>(n);
    mb /= static_cast<double>(n);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    ac.resize(n);
    bc.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      ac[i] = a[i] - ma;
      bc[i] = b[i] - mb;
      sab += ac[i] * bc[i];
      saa += ac[i] * ac[i];
      sbb += bc[i] * bc[i];
    }
    const bool flat_a = std::all_of(a, a + n, [&](double v) { return v == a[0]; });
    const bool flat_b = std::all_of(b, b + n, [&](double v) { return v == b[0]; });
    if (flat_a || flat_b || saa == 0 || sbb == 0) return Stats{true, 0.0, saa, sbb};
    return Stats{false, sab / std::sqrt(saa * sbb), saa, sbb};
  };
  double total = 0.0;
  std::vector<double> ac, bc;
  for (std::size_t m = 0; m < l.maps; ++m) {
    const Stats s = stats(p.ptr() + m * l.pixels, gt.ptr() + m * l.pixels, ac, bc);
    total -= s.r;
  }
  const double maps = static_cast<double>(l.maps);
  return tape_of(pred).record(Tensor::scalar(total / maps), {pred},
                              [gt, l, stats, maps](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    const double go = c.grad_out.item() / maps;
    std::vector<double> ac, bc;
    for (std::size_t m = 0; m < l.maps; ++m) {
      const Stats s = stats(c.in(0).ptr() + m * l.pixels, gt.ptr() + m * l.pixels, ac, bc);
      if (s.degenerate) continue;
      const double inv = 1.0 / std::sqrt(s.saa * s.sbb);
      double* gm = g->ptr() + m * l.pixels;
      for (std::size_t i = 0; i < l.pixels; ++i) {
        gm[i] -= go * (bc[i] * inv - s.r * ac[i] / s.saa);
      }
    }
  });
}

Var loss_bce(const Var& pred, const Tensor& gt) {
  layout_of(pred, gt);
  const Tensor& p = pred.value();
  const std::size_t n = p.numel();
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double yhat = p[i];
    const double y = gt[i];
    if (!(yhat >= 0.0 && yhat <= 1.0)) {
      throw Error(ErrorKind::RangeViolation, "prediction " + std::to_string(yhat) +
                                                 " outside [0, 1]", i);
    }
    if (!(y >= 0.0 && y <= 1.0)) {
      throw Error(ErrorKind::RangeViolation, "target " + std::to_string(y) + " outside [0, 1]", i);
    }
    if ((y != 0.0 && yhat == 0.0) || (y != 1.0 && yhat == 1.0)) {
      throw Error(ErrorKind::RangeViolation, "prediction saturates against its target", i);
    }
    double term = 0.0;
    if (y != 0.0) term -= y * std::log(yhat);
    if (y != 1.0) term -= (1.0 - y) * std::log(1.0 - yhat);
    total += term;
  }
  const double count = static_cast<double>(n);
  return tape_of(pred).record(Tensor::scalar(total / count), {pred},
                              [gt, count](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    const double go = c.grad_out.item() / count;
    const Tensor& p = c.in(0);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      const double y = gt[i];
      double d = 0.0;
      if (y != 0.0) d -= y / p[i];
      if (y != 1.0) d += (1.0 - y) / (1.0 - p[i]);
      (*g)[i] += go * d;
    }
  });
}

Var combined_loss(const Var& pred, const Tensor& gt, const LossWeights& w) {
  w.validate();
  Var total = loss_kl(pred, gt, w.eps);
  total = ops::add(total, ops::scale(loss_cc(pred, gt), w.alpha1));
  return ops::add(total, ops::scale(loss_bce(pred, gt), w.alpha2));
}

namespace {

template <typename Fn>
double on_maps(const SaliencyMap& pred, const SaliencyMap& gt, Fn&& fn) {
  Tape tape(false);
  const Var p = tape.constant(Tensor({pred.height, pred.width}, pred.values));
  return fn(p, Tensor({gt.height, gt.width}, gt.values)).value().item();
}

}  // namespace

double loss_kl(const SaliencyMap& pred, const SaliencyMap& gt, double eps) {
  return on_maps(pred, gt, [eps](const Var& p, const Tensor& g) { return loss_kl(p, g, eps); });
}
double loss_cc(const SaliencyMap& pred, const SaliencyMap& gt) {
  return on_maps(pred, gt, [](const Var& p, const Tensor& g) { return loss_cc(p, g); });
}
double loss_bce(const SaliencyMap& pred, const SaliencyMap& gt) {
  return on_maps(pred, gt, [](const Var& p, const Tensor& g) { return loss_bce(p, g); });
}
double combined_loss(const SaliencyMap& pred, const SaliencyMap& gt, const LossWeights& w) {
  return on_maps(pred, gt, [&w](const Var& p, const Tensor& g) { return combined_loss(p, g, w); });
}

}  // namespace evsal
