#pragma once

#include <cstddef>
#include <string_view>

// Row kernels behind the tensor engine. Every backend computes axpy, add,
// mul, scale and gemm_acc with the same per-element operation sequence (no
// fused multiply-add), so those are bitwise identical across backends. dot uses
// lane-parallel partial sums on SIMD backends and agrees with the scalar
// reference only to rounding.
namespace evsal::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  // y[i] += a * x[i]
  void (*axpy)(double a, const double* x, double* y, std::size_t n);
  // sum x[i] * y[i]
  double (*dot)(const double* x, const double* y, std::size_t n);
  // out[i] = x[i] + y[i]
  void (*add)(const double* x, const double* y, double* out, std::size_t n);
  // out[i] = x[i] * y[i]
  void (*mul)(const double* x, const double* y, double* out, std::size_t n);
  // out[i] = a * x[i]
  void (*scale)(double a, const double* x, double* out, std::size_t n);
  // y[i, j] += a[i, r] * x[r, j] for r = 0, 1, ..., k - 1 in that order,
  // with a[i, r] = a[i * a_row + r * a_col], x[r, j] = x[r * ldx + j] and
  // y[i, j] = y[i * ldy + j]; i < m, j < n.
  void (*gemm_acc)(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
                   std::size_t ldx, double* y, std::size_t ldy, std::size_t m, std::size_t k,
                   std::size_t n);
};

bool available(Backend backend);
const KernelTable& table(Backend backend);

/// Selected once from the CPU (overridable with EVSAL_KERNELS=scalar|avx2|neon).
const KernelTable& active();
void set_active(Backend backend);

std::string_view name(Backend backend);

inline void axpy(double a, const double* x, double* y, std::size_t n) { active().axpy(a, x, y, n); }
inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline void add(const double* x, const double* y, double* out, std::size_t n) { active().add(x, y, out, n); }
inline void mul(const double* x, const double* y, double* out, std::size_t n) { active().mul(x, y, out, n); }
inline void scale(double a, const double* x, double* out, std::size_t n) { active().scale(a, x, out, n); }
inline void gemm_acc(const double* a, std::size_t a_row, std::size_t a_col, const double* x,
                     std::size_t ldx, double* y, std::size_t ldy, std::size_t m, std::size_t k,
                     std::size_t n) {
  active().gemm_acc(a, a_row, a_col, x, ldx, y, ldy, m, k, n);
}

// Backend entry points; only the ones compiled for this target are defined.
namespace scalar { const KernelTable& table(); }
namespace avx2 { const KernelTable& table(); }
namespace neon { const KernelTable& table(); }

}  // namespace evsal::kernels
