// Built with -mavx2 (and without -mfma); only reached after a runtime CPU check.
#include <immintrin.h>

#include "evsal/kernels.hpp"

namespace evsal::kernels::avx2 {

namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    acc1 = _mm256_add_pd(acc1, _mm256_mul_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  for (; i + 4 <= n; i += 4) {
    acc0 = _mm256_add_pd(acc0, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, _mm256_add_pd(acc0, acc1));
  double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
  for (; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(double a, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = a * x[i];
}

// Four rows of y by eight columns held in registers across the whole r loop.
void block_4x8(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
               std::size_t ldx, double* y, std::size_t ldy, std::size_t k) {
  __m256d acc[4][2];
  for (int i = 0; i < 4; ++i) {
    acc[i][0] = _mm256_loadu_pd(y + i * ldy);
    acc[i][1] = _mm256_loadu_pd(y + i * ldy + 4);
  }
  for (std::size_t r = 0; r < k; ++r) {
    const __m256d x0 = _mm256_loadu_pd(x + r * ldx);
    const __m256d x1 = _mm256_loadu_pd(x + r * ldx + 4);
    for (int i = 0; i < 4; ++i) {
      const __m256d ai = _mm256_set1_pd(a[i * a_row + r * a_col]);
      acc[i][0] = _mm256_add_pd(acc[i][0], _mm256_mul_pd(ai, x0));
      acc[i][1] = _mm256_add_pd(acc[i][1], _mm256_mul_pd(ai, x1));
    }
  }
  for (int i = 0; i < 4; ++i) {
    _mm256_storeu_pd(y + i * ldy, acc[i][0]);
    _mm256_storeu_pd(y + i * ldy + 4, acc[i][1]);
  }
}

void block_1x4(const double* a, std::size_t a_col, const double* x, std::size_t ldx, double* y,
               std::size_t k) {
  __m256d acc = _mm256_loadu_pd(y);
  for (std::size_t r = 0; r < k; ++r) {
    acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_set1_pd(a[r * a_col]), _mm256_loadu_pd(x + r * ldx)));
  }
  _mm256_storeu_pd(y, acc);
}

void gemm_acc(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
              std::size_t ldx, double* y, std::size_t ldy, std::size_t m, std::size_t k,
              std::size_t n) {
  std::size_t i = 0;
  const std::size_t n8 = n - n % 8;
  for (; i + 4 <= m; i += 4) {
    for (std::size_t j = 0; j < n8; j += 8) {
      block_4x8(a + i * a_row, a_row, a_col, x + j, ldx, y + i * ldy + j, ldy, k);
    }
  }
  for (std::size_t row = 0; row < m; ++row) {
    const std::size_t j0 = row < i ? n8 : 0;
    std::size_t j = j0;
    for (; j + 4 <= n; j += 4) block_1x4(a + row * a_row, a_col, x + j, ldx, y + row * ldy + j, k);
    for (; j < n; ++j) {
      double acc = y[row * ldy + j];
      for (std::size_t r = 0; r < k; ++r) acc = acc + a[row * a_row + r * a_col] * x[r * ldx + j];
      y[row * ldy + j] = acc;
    }
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Backend::Avx2, axpy, dot, add, mul, scale, gemm_acc};
  return t;
}

}  // namespace evsal::kernels::avx2
