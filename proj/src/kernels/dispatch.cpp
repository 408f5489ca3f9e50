#include <atomic>
#include <cstdlib>
#include <string>

#include "evsal/error.hpp"
#include "evsal/kernels.hpp"

namespace evsal::kernels {

namespace {

const KernelTable* detect() {
  if (const char* env = std::getenv("EVSAL_KERNELS")) {
    const std::string want(env);
    if (want == "scalar") return &scalar::table();
    if (want == "avx2" && available(Backend::Avx2)) return &table(Backend::Avx2);
    if (want == "neon" && available(Backend::Neon)) return &table(Backend::Neon);
  }
  if (available(Backend::Avx2)) return &table(Backend::Avx2);
  if (available(Backend::Neon)) return &table(Backend::Neon);
  return &scalar::table();
}

std::atomic<const KernelTable*>& slot() {
  static std::atomic<const KernelTable*> current{detect()};
  return current;
}

}  // namespace

bool available(Backend backend) {
  switch (backend) {
    case Backend::Scalar:
      return true;
    case Backend::Avx2:
#if defined(EVSAL_HAVE_AVX2)
      return __builtin_cpu_supports("avx2");
#else
      return false;
#endif
    case Backend::Neon:
#if defined(EVSAL_HAVE_NEON)
      return true;
#else
      return false;
#endif
  }
  return false;
}

const KernelTable& table(Backend backend) {
  if (!available(backend)) {
    throw Error(ErrorKind::InvalidConfig, std::string("kernel backend unavailable: ") +
                                              std::string(name(backend)));
  }
  switch (backend) {
#if defined(EVSAL_HAVE_AVX2)
    case Backend::Avx2:
      return avx2::table();
#endif
#if defined(EVSAL_HAVE_NEON)
    case Backend::Neon:
      return neon::table();
#endif
    default:
      return scalar::table();
  }
}

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(Backend backend) { slot().store(&table(backend), std::memory_order_relaxed); }

std::string_view name(Backend backend) {
  switch (backend) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
    case Backend::Neon: return "neon";
  }
  return "unknown";
}

}  // namespace evsal::kernels
