#include "evsal/kernels.hpp"

namespace evsal::kernels::scalar {

namespace {

void axpy(double a, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

double dot(const double* x, const double* y, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

void add(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul(const double* x, const double* y, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale(double a, const double* x, double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void gemm_acc(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
              std::size_t ldx, double* y, std::size_t ldy, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t r = 0; r < k; ++r) axpy(a[i * a_row + r * a_col], x + r * ldx, y + i * ldy, n);
  }
}

}  // namespace

const KernelTable& table() {
  static const KernelTable t{Backend::Scalar, axpy, dot, add, mul, scale, gemm_acc};
  return t;
}

}  // namespace evsal::kernels::scalar
