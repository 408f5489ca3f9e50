#include <arm_neon.h>

#include "evsal/kernels.hpp"

namespace evsal::kernels::neon {

namespace {

// vmulq/vaddq are kept separate; vfmaq would round differently from scalar.
void axpy(double a, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    vst1q_f64(y + i, vaddq_f64(vld1q_f64(y + i), vmulq_f64(va, vld1q_f64(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vaddq_f64(acc0, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
    acc1 = vaddq_f64(acc1, vmulq_f64(vld1q_f64(x + i + 2), vld1q_f64(y + i + 2)));
  }
  const float64x2_t acc = vaddq_f64(acc0, acc1);
  double s = vgetq_lane_f64(acc, 0) + vgetq_lane_f64(acc, 1);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(x + i), vld1q_f64(y + i)));
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(double a, const double* x, double* out, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(a);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(va, vld1q_f64(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

// Four rows of y by four columns held in registers across the whole r loop.
void block_4x4(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
               std::size_t ldx, double* y, std::size_t ldy, std::size_t k) {
  float64x2_t acc[4][2];
  for (int i = 0; i < 4; ++i) {
    acc[i][0] = vld1q_f64(y + i * ldy);
    acc[i][1] = vld1q_f64(y + i * ldy + 2);
  }
  for (std::size_t r = 0; r < k; ++r) {
    const float64x2_t x0 = vld1q_f64(x + r * ldx);
    const float64x2_t x1 = vld1q_f64(x + r * ldx + 2);
    for (int i = 0; i < 4; ++i) {
      const float64x2_t ai = vdupq_n_f64(a[i * a_row + r * a_col]);
      acc[i][0] = vaddq_f64(acc[i][0], vmulq_f64(ai, x0));
      acc[i][1] = vaddq_f64(acc[i][1], vmulq_f64(ai, x1));
    }
  }
  for (int i = 0; i < 4; ++i) {
    vst1q_f64(y + i * ldy, acc[i][0]);
    vst1q_f64(y + i * ldy + 2, acc[i][1]);
  }
}

void gemm_acc(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
              std::size_t ldx, double* y, std::size_t ldy, std::size_t m, std::size_t k,
              std::size_t n) {
  std::size_t i = 0;
  const std::size_t n4 = n - n % 4;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n4; j += 4) {
      block_4x4(a + i * a_row, a_row, a_col, x + j, ldx, y + i * ldy + j, ldy, k);
    }
  }
  for (std::size_t row = 0; row < m; ++row) {
    for (std::size_t j = row < i ? n4 : 0; j < n; ++j) {
      double acc = y[row * ldy + j];
      for (std::size_t r = 0; r < k; ++r) acc = acc + a[row * a_row + r * a_col] * x[r * ldx + j];
      y[row * ldy + j] = acc;
    }
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Backend::Neon, axpy, dot, add, mul, scale, gemm_acc};
  return t;
}

}  // namespace evsal::kernels::neon
