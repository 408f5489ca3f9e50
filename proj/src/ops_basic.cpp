#include <algorithm>
#include <cmath>
#include <memory>
#include <numeric>
#include <string>

#include "evsal/error.hpp"
#include "evsal/kernels.hpp"
#include "evsal/ops.hpp"

namespace evsal::ops {

namespace {

Tape& tape_of(const Var& v) {
  if (!v.valid()) throw Error(ErrorKind::DetachedNode, "operation on an empty variable");
  return *v.tape();
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::ShapeMismatch, std::string(op) + ": " + shape_string(a.shape()) +
                                              " vs " + shape_string(b.shape()));
  }
}

void accumulate(Tensor* dst, const Tensor& src) {
  if (dst) kernels::add(dst->ptr(), src.ptr(), dst->ptr(), src.numel());
}

}  // namespace

double sigmoid_scalar(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Tensor out(a.shape());
  kernels::add(a.value().ptr(), b.value().ptr(), out.ptr(), out.numel());
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& c) {
    accumulate(c.grad(0), c.grad_out);
    accumulate(c.grad(1), c.grad_out);
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Tensor out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& c) {
    accumulate(c.grad(0), c.grad_out);
    if (Tensor* gb = c.grad(1)) {
      for (std::size_t i = 0; i < gb->numel(); ++i) (*gb)[i] -= c.grad_out[i];
    }
  });
}

Var mul(const Var& a, const Var& b) {
  require_same_shape(a, b, "mul");
  Tensor out(a.shape());
  kernels::mul(a.value().ptr(), b.value().ptr(), out.ptr(), out.numel());
  return tape_of(a).record(std::move(out), {a, b}, [](const BackwardContext& c) {
    const std::size_t n = c.grad_out.numel();
    Tensor tmp(c.grad_out.shape());
    if (Tensor* ga = c.grad(0)) {
      kernels::mul(c.grad_out.ptr(), c.in(1).ptr(), tmp.ptr(), n);
      accumulate(ga, tmp);
    }
    if (Tensor* gb = c.grad(1)) {
      kernels::mul(c.grad_out.ptr(), c.in(0).ptr(), tmp.ptr(), n);
      accumulate(gb, tmp);
    }
  });
}

Var scale(const Var& a, double s) {
  Tensor out(a.shape());
  kernels::scale(s, a.value().ptr(), out.ptr(), out.numel());
  return tape_of(a).record(std::move(out), {a}, [s](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) kernels::axpy(s, c.grad_out.ptr(), g->ptr(), g->numel());
  });
}

Var sum(const Var& a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return tape_of(a).record(Tensor::scalar(s), {a}, [](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) {
      const double go = c.grad_out[0];
      for (double& v : g->data()) v += go;
    }
  });
}

Var mean(const Var& a) {
  const auto n = static_cast<double>(a.value().numel());
  return scale(sum(a), 1.0 / n);
}

Var reshape(const Var& a, Shape shape) {
  Tensor out = a.value().reshaped(std::move(shape));
  return tape_of(a).record(std::move(out), {a}, [](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) kernels::add(g->ptr(), c.grad_out.ptr(), g->ptr(), g->numel());
  });
}

namespace {

// Maps each output flat index of a permutation to its source flat index.
std::vector<std::size_t> permute_sources(const Shape& in_shape,
                                         const std::vector<std::size_t>& perm) {
  const std::size_t rank = in_shape.size();
  std::vector<std::size_t> in_strides(rank, 1);
  for (std::size_t i = rank; i-- > 1;) in_strides[i - 1] = in_strides[i] * in_shape[i];
  Shape out_shape(rank);
  std::vector<std::size_t> step(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    out_shape[i] = in_shape[perm[i]];
    step[i] = in_strides[perm[i]];
  }
  const std::size_t n = shape_numel(in_shape);
  std::vector<std::size_t> src(n);
  std::vector<std::size_t> idx(rank, 0);
  std::size_t offset = 0;
  for (std::size_t flat = 0; flat < n; ++flat) {
    src[flat] = offset;
    for (std::size_t ax = rank; ax-- > 0;) {
      if (++idx[ax] < out_shape[ax]) {
        offset += step[ax];
        break;
      }
      offset -= step[ax] * (out_shape[ax] - 1);
      idx[ax] = 0;
    }
  }
  return src;
}

}  // namespace

Var permute(const Var& a, const std::vector<std::size_t>& perm) {
  const Shape& in_shape = a.shape();
  if (perm.size() != in_shape.size()) throw Error(ErrorKind::BadAxis, "permutation rank");
  std::vector<bool> seen(perm.size(), false);
  for (std::size_t p : perm) {
    if (p >= perm.size() || seen[p]) throw Error(ErrorKind::BadAxis, "invalid permutation");
    seen[p] = true;
  }
  Shape out_shape(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) out_shape[i] = in_shape[perm[i]];
  auto src = std::make_shared<std::vector<std::size_t>>(permute_sources(in_shape, perm));
  Tensor out(out_shape);
  const Tensor& x = a.value();
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x[(*src)[i]];
  return tape_of(a).record(std::move(out), {a}, [src](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) {
      for (std::size_t i = 0; i < c.grad_out.numel(); ++i) (*g)[(*src)[i]] += c.grad_out[i];
    }
  });
}

Var concat(const std::vector<Var>& parts, std::size_t axis) {
  if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
  const Shape& first = parts[0].shape();
  if (axis >= first.size()) throw Error(ErrorKind::BadAxis, "concat axis");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const Var& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw Error(ErrorKind::ShapeMismatch, "concat rank");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) {
        throw Error(ErrorKind::ShapeMismatch, "concat: " + shape_string(s) + " vs " +
                                                  shape_string(first));
      }
    }
    out_shape[axis] += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= first[i];
  for (std::size_t i = axis + 1; i < first.size(); ++i) inner *= first[i];

  std::vector<std::size_t> widths;
  for (const Var& p : parts) widths.push_back(p.shape()[axis] * inner);
  const std::size_t row = out_shape[axis] * inner;

  Tensor out(out_shape);
  std::size_t col = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor& v = parts[k].value();
    for (std::size_t o = 0; o < outer; ++o) {
      std::copy_n(v.ptr() + o * widths[k], widths[k], out.ptr() + o * row + col);
    }
    col += widths[k];
  }
  return tape_of(parts[0]).record(
      std::move(out), parts, [widths, outer, row](const BackwardContext& c) {
        std::size_t col = 0;
        for (std::size_t k = 0; k < widths.size(); ++k) {
          if (Tensor* g = c.grad(k)) {
            for (std::size_t o = 0; o < outer; ++o) {
              kernels::add(g->ptr() + o * widths[k], c.grad_out.ptr() + o * row + col,
                           g->ptr() + o * widths[k], widths[k]);
            }
          }
          col += widths[k];
        }
      });
}

Var matmul(const Var& a, const Var& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() < 2 || sb.size() < 2) throw Error(ErrorKind::ShapeMismatch, "matmul needs rank >= 2");
  const std::size_t m = sa[sa.size() - 2], k = sa.back();
  const std::size_t kb = sb[sb.size() - 2], n = sb.back();
  if (k != kb) {
    throw Error(ErrorKind::ShapeMismatch,
                "matmul inner dims: " + shape_string(sa) + " x " + shape_string(sb));
  }
  const bool shared_b = sb.size() == 2;
  if (!shared_b && !std::equal(sa.begin(), sa.end() - 2, sb.begin(), sb.end() - 2)) {
    throw Error(ErrorKind::ShapeMismatch,
                "matmul batch dims: " + shape_string(sa) + " x " + shape_string(sb));
  }
  const std::size_t batch = shape_numel(Shape(sa.begin(), sa.end() - 2));
  Shape out_shape(sa.begin(), sa.end() - 2);
  out_shape.push_back(m);
  out_shape.push_back(n);

  Tensor out(out_shape);
  const double* A = a.value().ptr();
  const double* B = b.value().ptr();
  double* C = out.ptr();
  for (std::size_t bi = 0; bi < batch; ++bi) {
    const double* Ab = A + bi * m * k;
    const double* Bb = shared_b ? B : B + bi * k * n;
    double* Cb = C + bi * m * n;
    kernels::gemm_acc(Ab, k, 1, Bb, n, Cb, n, m, k, n);
  }
  return tape_of(a).record(std::move(out), {a, b},
                           [batch, m, k, n, shared_b](const BackwardContext& c) {
    const double* A = c.in(0).ptr();
    const double* B = c.in(1).ptr();
    const double* G = c.grad_out.ptr();
    Tensor* ga = c.grad(0);
    Tensor* gb = c.grad(1);
    for (std::size_t bi = 0; bi < batch; ++bi) {
      const double* Ab = A + bi * m * k;
      const double* Bb = shared_b ? B : B + bi * k * n;
      const double* Gb = G + bi * m * n;
      if (ga) {
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t kk = 0; kk < k; ++kk) {
            ga->ptr()[bi * m * k + i * k + kk] += kernels::dot(Gb + i * n, Bb + kk * n, n);
          }
        }
      }
      if (gb) {
        double* gbb = gb->ptr() + (shared_b ? 0 : bi * k * n);
        kernels::gemm_acc(Ab, 1, k, Gb, n, gbb, n, k, m, n);
      }
    }
  });
}

Var transpose_last2(const Var& a) {
  const std::size_t r = a.shape().size();
  if (r < 2) throw Error(ErrorKind::BadAxis, "transpose needs rank >= 2");
  std::vector<std::size_t> perm(r);
  std::iota(perm.begin(), perm.end(), 0);
  std::swap(perm[r - 1], perm[r - 2]);
  return permute(a, perm);
}

Var add_bias(const Var& x, const Var& bias) {
  const std::size_t n = bias.value().numel();
  if (x.shape().empty() || x.shape().back() != n || bias.shape().size() != 1) {
    throw Error(ErrorKind::ShapeMismatch, "bias " + shape_string(bias.shape()) +
                                              " does not match " + shape_string(x.shape()));
  }
  Tensor out = x.value();
  const std::size_t rows = out.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::add(out.ptr() + r * n, bias.value().ptr(), out.ptr() + r * n, n);
  }
  return tape_of(x).record(std::move(out), {x, bias}, [rows, n](const BackwardContext& c) {
    accumulate(c.grad(0), c.grad_out);
    if (Tensor* gb = c.grad(1)) {
      for (std::size_t r = 0; r < rows; ++r) {
        kernels::add(gb->ptr(), c.grad_out.ptr() + r * n, gb->ptr(), n);
      }
    }
  });
}

Var softmax(const Var& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size()) throw Error(ErrorKind::BadAxis, "softmax axis " + std::to_string(axis));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];

  Tensor out(s);
  const Tensor& in = x.value();
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t j = 0; j < inner; ++j) {
      const std::size_t base = o * n * inner + j;
      double mx = in[base];
      for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, in[base + i * inner]);
      double total = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double e = std::exp(in[base + i * inner] - mx);
        out[base + i * inner] = e;
        total += e;
      }
      for (std::size_t i = 0; i < n; ++i) out[base + i * inner] /= total;
    }
  }
  return tape_of(x).record(std::move(out), {x}, [outer, inner, n](const BackwardContext& c) {
    Tensor* g = c.grad(0);
    if (!g) return;
    const Tensor& y = c.output;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t j = 0; j < inner; ++j) {
        const std::size_t base = o * n * inner + j;
        double inner_product = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
          inner_product += c.grad_out[base + i * inner] * y[base + i * inner];
        }
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t at = base + i * inner;
          (*g)[at] += y[at] * (c.grad_out[at] - inner_product);
        }
      }
    }
  });
}

Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps) {
  const Shape& s = x.shape();
  if (s.empty()) throw Error(ErrorKind::ShapeMismatch, "layer_norm on a scalar");
  const std::size_t d = s.back();
  if (gamma.shape() != Shape{d} || beta.shape() != Shape{d}) {
    throw Error(ErrorKind::ShapeMismatch, "layer_norm affine params must be [" +
                                              std::to_string(d) + "]");
  }
  const std::size_t rows = x.value().numel() / d;
  // xhat and 1/sigma per row are kept for the backward rule.
  auto xhat = std::make_shared<Tensor>(s);
  auto rstd = std::make_shared<std::vector<double>>(rows);
  Tensor out(s);
  const Tensor& in = x.value();
  const Tensor& g = gamma.value();
  const Tensor& b = beta.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = in.ptr() + r * d;
    double mu = 0.0;
    for (std::size_t i = 0; i < d; ++i) mu += row[i];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t i = 0; i < d; ++i) var += (row[i] - mu) * (row[i] - mu);
    var /= static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    (*rstd)[r] = inv;
    for (std::size_t i = 0; i < d; ++i) {
      const double h = (row[i] - mu) * inv;
      (*xhat)[r * d + i] = h;
      out[r * d + i] = h * g[i] + b[i];
    }
  }
  return tape_of(x).record(std::move(out), {x, gamma, beta},
                           [xhat, rstd, rows, d](const BackwardContext& c) {
    const Tensor& gamma_v = c.in(1);
    Tensor* gx = c.grad(0);
    Tensor* gg = c.grad(1);
    Tensor* gb = c.grad(2);
    std::vector<double> dh(d);
    for (std::size_t r = 0; r < rows; ++r) {
      const double* go = c.grad_out.ptr() + r * d;
      const double* h = xhat->ptr() + r * d;
      double mean_dh = 0.0, mean_dh_h = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        if (gg) (*gg)[i] += go[i] * h[i];
        if (gb) (*gb)[i] += go[i];
        dh[i] = go[i] * gamma_v[i];
        mean_dh += dh[i];
        mean_dh_h += dh[i] * h[i];
      }
      if (!gx) continue;
      mean_dh /= static_cast<double>(d);
      mean_dh_h /= static_cast<double>(d);
      for (std::size_t i = 0; i < d; ++i) {
        (*gx)[r * d + i] += (*rstd)[r] * (dh[i] - mean_dh - h[i] * mean_dh_h);
      }
    }
  });
}

Var leaky_relu(const Var& x, double slope) {
  Tensor out = x.value();
  Tape& tape = tape_of(x);
  std::uint64_t word = 0;
  for (std::size_t i = 0; i < out.numel(); ++i) {
    double& v = out[i];
    const bool positive = v > 0;
    word = (word << 1) | static_cast<std::uint64_t>(positive);
    if (i % 64 == 63) {
      tape.note_branch(word);
      word = 0;
    }
    if (!positive) v *= slope;
  }
  tape.note_branch(word);
  return tape.record(std::move(out), {x}, [slope](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) {
      const Tensor& in = c.in(0);
      for (std::size_t i = 0; i < g->numel(); ++i) {
        (*g)[i] += in[i] > 0 ? c.grad_out[i] : slope * c.grad_out[i];
      }
    }
  });
}

Var sigmoid(const Var& x) {
  Tensor out = x.value();
  for (double& v : out.data()) v = sigmoid_scalar(v);
  return tape_of(x).record(std::move(out), {x}, [](const BackwardContext& c) {
    if (Tensor* g = c.grad(0)) {
      const Tensor& y = c.output;
      for (std::size_t i = 0; i < g->numel(); ++i) (*g)[i] += c.grad_out[i] * y[i] * (1.0 - y[i]);
    }
  });
}

Var spatial_gain(const Var& x, const Var& gain) {
  const Shape& s = x.shape();
  const Shape& gs = gain.shape();
  if (s.size() < 2 || gs.size() != 2 || gs[0] != s[s.size() - 2] || gs[1] != s.back()) {
    throw Error(ErrorKind::ShapeMismatch, "gain " + shape_string(gs) + " does not match " +
                                              shape_string(s));
  }
  const std::size_t plane = gs[0] * gs[1];
  const std::size_t planes = x.value().numel() / plane;
  std::vector<double> factor(plane);
  for (std::size_t i = 0; i < plane; ++i) factor[i] = 1.0 + gain.value()[i];
  Tensor out(s);
  for (std::size_t p = 0; p < planes; ++p) {
    kernels::mul(x.value().ptr() + p * plane, factor.data(), out.ptr() + p * plane, plane);
  }
  return tape_of(x).record(std::move(out), {x, gain}, [plane, planes](const BackwardContext& c) {
    const Tensor& xv = c.in(0);
    const Tensor& gv = c.in(1);
    if (Tensor* gx = c.grad(0)) {
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < plane; ++i) {
          (*gx)[p * plane + i] += c.grad_out[p * plane + i] * (1.0 + gv[i]);
        }
      }
    }
    if (Tensor* gg = c.grad(1)) {
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t i = 0; i < plane; ++i) {
          (*gg)[i] += c.grad_out[p * plane + i] * xv[p * plane + i];
        }
      }
    }
  });
}

}  // namespace evsal::ops
