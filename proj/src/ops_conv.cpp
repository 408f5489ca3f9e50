#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "evsal/error.hpp"
#include "evsal/kernels.hpp"
#include "evsal/ops.hpp"

namespace evsal::ops {

namespace {

struct ConvGeometry {
  std::size_t n, cin, cout;
  std::array<std::size_t, 3> in;   // T, H, W
  std::array<std::size_t, 3> k;    // kt, kh, kw
  std::array<std::size_t, 3> out;  // To, Ho, Wo
  std::array<std::size_t, 3> stride;
  std::array<std::size_t, 3> pad;

  std::size_t in_volume() const { return in[0] * in[1] * in[2]; }
  std::size_t out_volume() const { return out[0] * out[1] * out[2]; }
  std::size_t k_volume() const { return k[0] * k[1] * k[2]; }
};

// Output positions o in [lo, hi) whose input coordinate o*s + tap - p is in
// [0, extent).
std::pair<std::size_t, std::size_t> valid_range(std::size_t out, std::size_t extent,
                                                std::size_t tap, std::size_t s,
                                                std::size_t p) {
  std::size_t lo = 0;
  if (p > tap) lo = (p - tap + s - 1) / s;
  // o*s + tap - p <= extent - 1  =>  o <= (extent - 1 + p - tap) / s
  if (extent + p < tap + 1) return {0, 0};
  const std::size_t hi = std::min(out, (extent - 1 + p - tap) / s + 1);
  return {std::min(lo, hi), hi};
}

ConvGeometry conv_geometry(const Shape& xs, const Shape& ws,
                           const std::array<std::size_t, 3>& stride,
                           const std::array<std::size_t, 3>& pad) {
  if (xs.size() != 5 || ws.size() != 5) {
    throw Error(ErrorKind::ShapeMismatch, "conv3d expects rank-5 input and weight");
  }
  if (xs[1] != ws[1]) {
    throw Error(ErrorKind::ShapeMismatch, "conv input channels " + std::to_string(xs[1]) +
                                              " vs weight " + std::to_string(ws[1]));
  }
  ConvGeometry g{xs[0], xs[1], ws[0], {xs[2], xs[3], xs[4]}, {ws[2], ws[3], ws[4]}, {}, stride, pad};
  for (int a = 0; a < 3; ++a) {
    if (stride[a] == 0) throw Error(ErrorKind::BadSize, "zero stride");
    if (g.k[a] == 0 || g.in[a] + 2 * pad[a] < g.k[a]) {
      throw Error(ErrorKind::KernelTooLarge, "kernel " + shape_string(ws) +
                                                 " does not fit padded input " + shape_string(xs));
    }
    g.out[a] = (g.in[a] + 2 * pad[a] - g.k[a]) / stride[a] + 1;
  }
  return g;
}

// Visits every (output row, input row) pair touched by one kernel tap.
// fn(out_row_offset, in_row_offset, ow_lo, count) with offsets relative to the
// channel planes.
template <typename Fn>
void for_each_row(const ConvGeometry& g, std::size_t dt, std::size_t dh, std::size_t dw, Fn&& fn) {
  const auto [t_lo, t_hi] = valid_range(g.out[0], g.in[0], dt, g.stride[0], g.pad[0]);
  const auto [h_lo, h_hi] = valid_range(g.out[1], g.in[1], dh, g.stride[1], g.pad[1]);
  const auto [w_lo, w_hi] = valid_range(g.out[2], g.in[2], dw, g.stride[2], g.pad[2]);
  if (w_lo >= w_hi) return;
  for (std::size_t ot = t_lo; ot < t_hi; ++ot) {
    const std::size_t it = ot * g.stride[0] + dt - g.pad[0];
    for (std::size_t oh = h_lo; oh < h_hi; ++oh) {
      const std::size_t ih = oh * g.stride[1] + dh - g.pad[1];
      fn((ot * g.out[1] + oh) * g.out[2], (it * g.in[1] + ih) * g.in[2], w_lo, w_hi - w_lo);
    }
  }
}

// Unfolded input of sample n: row (ci * k_volume + tap) holds the input value
// each output position reads through that tap, zero where it falls in padding.
std::vector<double> unfold(const ConvGeometry& g, const double* x) {
  const std::size_t ov = g.out_volume();
  std::vector<double> cols(g.cin * g.k_volume() * ov, 0.0);
  const std::size_t sw = g.stride[2];
  const std::size_t pw = g.pad[2];
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const double* xplane = x + ci * g.in_volume();
    std::size_t tap = 0;
    for (std::size_t dt = 0; dt < g.k[0]; ++dt) {
      for (std::size_t dh = 0; dh < g.k[1]; ++dh) {
        for (std::size_t dw = 0; dw < g.k[2]; ++dw, ++tap) {
          double* row = cols.data() + (ci * g.k_volume() + tap) * ov;
          for_each_row(g, dt, dh, dw, [&](std::size_t orow, std::size_t irow, std::size_t lo, std::size_t cnt) {
            const double* xi = xplane + irow + lo * sw + dw - pw;
            double* o = row + orow + lo;
            for (std::size_t i = 0; i < cnt; ++i) o[i] = xi[i * sw];
          });
        }
      }
    }
  }
  return cols;
}

// Adds unfolded gradients back onto the input positions they were read from.
void fold_add(const ConvGeometry& g, const std::vector<double>& cols, double* gx) {
  const std::size_t ov = g.out_volume();
  const std::size_t sw = g.stride[2];
  const std::size_t pw = g.pad[2];
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    double* gplane = gx + ci * g.in_volume();
    std::size_t tap = 0;
    for (std::size_t dt = 0; dt < g.k[0]; ++dt) {
      for (std::size_t dh = 0; dh < g.k[1]; ++dh) {
        for (std::size_t dw = 0; dw < g.k[2]; ++dw, ++tap) {
          const double* row = cols.data() + (ci * g.k_volume() + tap) * ov;
          for_each_row(g, dt, dh, dw, [&](std::size_t orow, std::size_t irow, std::size_t lo, std::size_t cnt) {
            double* gi = gplane + irow + lo * sw + dw - pw;
            const double* r = row + orow + lo;
            for (std::size_t i = 0; i < cnt; ++i) gi[i * sw] += r[i];
          });
        }
      }
    }
  }
}

Tensor conv_forward(const ConvGeometry& g, const Tensor& x, const Tensor& w, const Tensor* b) {
  Tensor out({g.n, g.cout, g.out[0], g.out[1], g.out[2]});
  const std::size_t ov = g.out_volume();
  const std::size_t rows = g.cin * g.k_volume();
  for (std::size_t n = 0; n < g.n; ++n) {
    const std::vector<double> cols = unfold(g, x.ptr() + n * g.cin * g.in_volume());
    double* o = out.ptr() + n * g.cout * ov;
    for (std::size_t co = 0; co < g.cout; ++co) std::fill_n(o + co * ov, ov, b ? (*b)[co] : 0.0);
    kernels::gemm_acc(w.ptr(), rows, 1, cols.data(), ov, o, ov, g.cout, rows, ov);
  }
  return out;
}

void conv_backward(const ConvGeometry& g, const BackwardContext& c, bool has_bias) {
  const Tensor& x = c.in(0);
  const Tensor& w = c.in(1);
  Tensor* gx = c.grad(0);
  Tensor* gw = c.grad(1);
  Tensor* gb = has_bias ? c.grad(2) : nullptr;
  const std::size_t ov = g.out_volume();
  const std::size_t rows = g.cin * g.k_volume();
  for (std::size_t n = 0; n < g.n; ++n) {
    const double* gout = c.grad_out.ptr() + n * g.cout * ov;
    if (gb) {
      for (std::size_t co = 0; co < g.cout; ++co) {
        double s = 0.0;
        for (std::size_t i = 0; i < ov; ++i) s += gout[co * ov + i];
        (*gb)[co] += s;
      }
    }
    if (gw) {
      const std::vector<double> cols = unfold(g, x.ptr() + n * g.cin * g.in_volume());
      for (std::size_t co = 0; co < g.cout; ++co) {
        double* gwrow = gw->ptr() + co * rows;
        for (std::size_t r = 0; r < rows; ++r) {
          gwrow[r] += kernels::dot(gout + co * ov, cols.data() + r * ov, ov);
        }
      }
    }
    if (gx) {
      std::vector<double> gcols(rows * ov, 0.0);
      kernels::gemm_acc(w.ptr(), 1, rows, gout, ov, gcols.data(), ov, rows, g.cout, ov);
      fold_add(g, gcols, gx->ptr() + n * g.cin * g.in_volume());
    }
  }
}

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw Error(ErrorKind::DetachedNode, "operation on an empty variable");
  return *v.tape();
}

void check_bias(const Var& b, std::size_t cout) {
  if (b.valid() && b.shape() != Shape{cout}) {
    throw Error(ErrorKind::ShapeMismatch, "bias shape " + shape_string(b.shape()));
  }
}

}  // namespace

Var conv3d(const Var& x, const Var& w, const Var& b, const Conv3dOptions& opt) {
  const ConvGeometry g = conv_geometry(x.shape(), w.shape(), opt.stride, opt.pad);
  check_bias(b, g.cout);
  Tensor out = conv_forward(g, x.value(), w.value(), b.valid() ? &b.value() : nullptr);
  const bool has_bias = b.valid();
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return tape_of(x).record(std::move(out), inputs, [g, has_bias](const BackwardContext& c) {
    conv_backward(g, c, has_bias);
  });
}

Var conv2d(const Var& x, const Var& w, const Var& b, const Conv2dOptions& opt) {
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() != 4 || ws.size() != 4) {
    throw Error(ErrorKind::ShapeMismatch, "conv2d expects rank-4 input and weight");
  }
  const Shape xs5{xs[0], xs[1], 1, xs[2], xs[3]};
  const Shape ws5{ws[0], ws[1], 1, ws[2], ws[3]};
  const ConvGeometry g = conv_geometry(xs5, ws5, {1, opt.stride[0], opt.stride[1]},
                                       {0, opt.pad[0], opt.pad[1]});
  check_bias(b, g.cout);
  Tensor out = conv_forward(g, x.value(), w.value(), b.valid() ? &b.value() : nullptr);
  out = std::move(out).reshaped({g.n, g.cout, g.out[1], g.out[2]});
  const bool has_bias = b.valid();
  std::vector<Var> inputs{x, w};
  if (has_bias) inputs.push_back(b);
  return tape_of(x).record(std::move(out), inputs, [g, has_bias](const BackwardContext& c) {
    conv_backward(g, c, has_bias);
  });
}

Var batch_norm3d(const Var& x, const Var& gamma, const Var& beta, BatchNormState& state,
                 NormMode mode) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw Error(ErrorKind::ShapeMismatch, "batch_norm3d expects [N,C,T,H,W]");
  const std::size_t n = s[0], ch = s[1], vol = s[2] * s[3] * s[4];
  if (gamma.shape() != Shape{ch} || beta.shape() != Shape{ch} ||
      state.running_mean.shape() != Shape{ch} || state.running_var.shape() != Shape{ch}) {
    throw Error(ErrorKind::ShapeMismatch, "batch_norm3d parameters must be [" +
                                              std::to_string(ch) + "]");
  }
  const auto count = static_cast<double>(n * vol);
  const Tensor& in = x.value();
  const Tensor& gv = gamma.value();
  const Tensor& bv = beta.value();

  std::vector<double> mean(ch), inv_std(ch);
  if (mode == NormMode::Train) {
    for (std::size_t c = 0; c < ch; ++c) {
      double s1 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = in.ptr() + (i * ch + c) * vol;
        for (std::size_t j = 0; j < vol; ++j) s1 += p[j];
      }
      const double mu = s1 / count;
      double s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double* p = in.ptr() + (i * ch + c) * vol;
        for (std::size_t j = 0; j < vol; ++j) s2 += (p[j] - mu) * (p[j] - mu);
      }
      const double var = s2 / count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + state.eps);
      // Running variance tracks the unbiased estimate, as in common frameworks.
      const double unbiased = count > 1 ? s2 / (count - 1) : var;
      state.running_mean[c] = (1.0 - state.momentum) * state.running_mean[c] + state.momentum * mu;
      state.running_var[c] = (1.0 - state.momentum) * state.running_var[c] + state.momentum * unbiased;
    }
  } else {
    for (std::size_t c = 0; c < ch; ++c) {
      mean[c] = state.running_mean[c];
      inv_std[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  auto xhat = std::make_shared<Tensor>(s);
  Tensor out(s);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < ch; ++c) {
      const std::size_t base = (i * ch + c) * vol;
      for (std::size_t j = 0; j < vol; ++j) {
        const double h = (in[base + j] - mean[c]) * inv_std[c];
        (*xhat)[base + j] = h;
        out[base + j] = h * gv[c] + bv[c];
      }
    }
  }
  const bool train = mode == NormMode::Train;
  return tape_of(x).record(std::move(out), {x, gamma, beta},
                           [xhat, inv_std, n, ch, vol, count, train](const BackwardContext& c) {
    const Tensor& gv = c.in(1);
    Tensor* gx = c.grad(0);
    Tensor* gg = c.grad(1);
    Tensor* gb = c.grad(2);
    for (std::size_t k = 0; k < ch; ++k) {
      double sum_g = 0.0, sum_gh = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * ch + k) * vol;
        for (std::size_t j = 0; j < vol; ++j) {
          sum_g += c.grad_out[base + j];
          sum_gh += c.grad_out[base + j] * (*xhat)[base + j];
        }
      }
      if (gg) (*gg)[k] += sum_gh;
      if (gb) (*gb)[k] += sum_g;
      if (!gx) continue;
      const double scale = gv[k] * inv_std[k];
      const double mg = sum_g / count;
      const double mgh = sum_gh / count;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t base = (i * ch + k) * vol;
        for (std::size_t j = 0; j < vol; ++j) {
          const double go = c.grad_out[base + j];
          (*gx)[base + j] += train ? scale * (go - mg - (*xhat)[base + j] * mgh) : scale * go;
        }
      }
    }
  });
}

namespace {

struct LerpTap {
  std::size_t i0, i1;
  double w0, w1;
};

std::vector<LerpTap> lerp_taps(std::size_t in, std::size_t out) {
  std::vector<LerpTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t i = 0; i < out; ++i) {
    double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    const double frac = src - static_cast<double>(i0);
    taps[i] = {i0, i1, 1.0 - frac, frac};
  }
  return taps;
}

}  // namespace

Var upsample_trilinear(const Var& x, std::size_t out_h, std::size_t out_w) {
  const Shape& s = x.shape();
  if (s.size() != 5) throw Error(ErrorKind::ShapeMismatch, "upsample expects [N,C,T,H,W]");
  if (out_h == 0 || out_w == 0) throw Error(ErrorKind::BadSize, "output size must be positive");
  const std::size_t planes = s[0] * s[1] * s[2];
  const std::size_t ih = s[3], iw = s[4];
  const auto ty = lerp_taps(ih, out_h);
  const auto tx = lerp_taps(iw, out_w);

  Tensor out({s[0], s[1], s[2], out_h, out_w});
  const Tensor& in = x.value();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.ptr() + p * ih * iw;
    double* dst = out.ptr() + p * out_h * out_w;
    for (std::size_t y = 0; y < out_h; ++y) {
      const LerpTap& a = ty[y];
      const double* r0 = src + a.i0 * iw;
      const double* r1 = src + a.i1 * iw;
      for (std::size_t xo = 0; xo < out_w; ++xo) {
        const LerpTap& b = tx[xo];
        const double top = b.w0 * r0[b.i0] + b.w1 * r0[b.i1];
        const double bot = b.w0 * r1[b.i0] + b.w1 * r1[b.i1];
        dst[y * out_w + xo] = a.w0 * top + a.w1 * bot;
      }
    }
  }
  return tape_of(x).record(std::move(out), {x},
                           [ty, tx, planes, ih, iw, out_h, out_w](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    for (std::size_t p = 0; p < planes; ++p) {
      const double* go = c.grad_out.ptr() + p * out_h * out_w;
      double* gi = g->ptr() + p * ih * iw;
      for (std::size_t y = 0; y < out_h; ++y) {
        const LerpTap& a = ty[y];
        for (std::size_t xo = 0; xo < out_w; ++xo) {
          const LerpTap& b = tx[xo];
          const double v = go[y * out_w + xo];
          gi[a.i0 * iw + b.i0] += a.w0 * b.w0 * v;
          gi[a.i0 * iw + b.i1] += a.w0 * b.w1 * v;
          gi[a.i1 * iw + b.i0] += a.w1 * b.w0 * v;
          gi[a.i1 * iw + b.i1] += a.w1 * b.w1 * v;
        }
      }
    }
  });
}

std::vector<double> gaussian_kernel(double sigma, std::size_t radius) {
  if (!(sigma > 0) || !std::isfinite(sigma)) throw Error(ErrorKind::BadSigma, "sigma must be positive");
  if (radius < 1) throw Error(ErrorKind::BadSigma, "radius must be at least 1");
  std::vector<double> k(2 * radius + 1);
  double total = 0.0;
  for (std::size_t i = 0; i < k.size(); ++i) {
    const double d = static_cast<double>(i) - static_cast<double>(radius);
    k[i] = std::exp(-d * d / (2.0 * sigma * sigma));
    total += k[i];
  }
  for (double& v : k) v /= total;
  return k;
}

namespace {

// Reflect padding without edge repetition (d c b | a b c d | c b a), folded
// repeatedly for offsets larger than the extent.
std::size_t reflect(std::ptrdiff_t i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<std::ptrdiff_t>(2 * (n - 1));
  std::ptrdiff_t m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<std::ptrdiff_t>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

// One blur pass along an axis with the given stride. `index[j]` lists, per
// position, the reflected source index of every tap.
struct BlurPass {
  std::size_t extent;
  std::vector<std::size_t> index;  // extent * taps
};

BlurPass make_pass(std::size_t extent, std::size_t radius) {
  const std::size_t taps = 2 * radius + 1;
  BlurPass p{extent, std::vector<std::size_t>(extent * taps)};
  for (std::size_t pos = 0; pos < extent; ++pos) {
    for (std::size_t j = 0; j < taps; ++j) {
      p.index[pos * taps + j] = reflect(static_cast<std::ptrdiff_t>(pos + j) -
                                            static_cast<std::ptrdiff_t>(radius),
                                        extent);
    }
  }
  return p;
}

// out[pos] = in[pos] + sum_{j != r} k_j (in[idx(pos, j)] - in[pos]), along one
// axis of a [lines, extent] view with element stride `stride` inside a block
// layout described by (outer, extent, inner).
void blur_axis(const double* in, double* out, std::size_t outer, std::size_t inner,
               const BlurPass& pass, const std::vector<double>& k) {
  const std::size_t taps = k.size();
  const std::size_t r = taps / 2;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t pos = 0; pos < pass.extent; ++pos) {
      const std::size_t* idx = pass.index.data() + pos * taps;
      for (std::size_t q = 0; q < inner; ++q) {
        const double* base = in + o * pass.extent * inner + q;
        const double centre = base[pos * inner];
        double acc = 0.0;
        for (std::size_t j = 0; j < taps; ++j) {
          if (j == r) continue;
          acc += k[j] * (base[idx[j] * inner] - centre);
        }
        out[o * pass.extent * inner + pos * inner + q] = centre + acc;
      }
    }
  }
}

// Adjoint of blur_axis.
void blur_axis_adjoint(const double* gout, double* gin, std::size_t outer, std::size_t inner,
                       const BlurPass& pass, const std::vector<double>& k) {
  const std::size_t taps = k.size();
  const std::size_t r = taps / 2;
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t pos = 0; pos < pass.extent; ++pos) {
      const std::size_t* idx = pass.index.data() + pos * taps;
      for (std::size_t q = 0; q < inner; ++q) {
        double* base = gin + o * pass.extent * inner + q;
        const double g = gout[o * pass.extent * inner + pos * inner + q];
        double centre = g;
        for (std::size_t j = 0; j < taps; ++j) {
          if (j == r) continue;
          base[idx[j] * inner] += k[j] * g;
          centre -= k[j] * g;
        }
        base[pos * inner] += centre;
      }
    }
  }
}

}  // namespace

Var gaussian_blur2d(const Var& x, double sigma, std::size_t radius) {
  const Shape& s = x.shape();
  if (s.size() < 2) throw Error(ErrorKind::ShapeMismatch, "blur needs rank >= 2");
  const auto k = gaussian_kernel(sigma, radius);
  const std::size_t h = s[s.size() - 2], w = s.back();
  const std::size_t planes = x.value().numel() / (h * w);
  const BlurPass along_w = make_pass(w, radius);
  const BlurPass along_h = make_pass(h, radius);

  Tensor tmp(s);
  Tensor out(s);
  blur_axis(x.value().ptr(), tmp.ptr(), planes * h, 1, along_w, k);
  blur_axis(tmp.ptr(), out.ptr(), planes, w, along_h, k);
  return tape_of(x).record(std::move(out), {x},
                           [k, along_w, along_h, planes, h, w](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    Tensor gtmp(c.grad_out.shape());
    blur_axis_adjoint(c.grad_out.ptr(), gtmp.ptr(), planes, w, along_h, k);
    blur_axis_adjoint(gtmp.ptr(), g->ptr(), planes * h, 1, along_w, k);
  });
}

}  // namespace evsal::ops
