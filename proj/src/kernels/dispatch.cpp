#include <atomic>
#include <cstdlib>
#include <string_view>

#include "sscope/error.hpp"
#include "sscope/kernels.hpp"

namespace sscope::kernels {

bool cpu_has_avx2() noexcept {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

namespace {

Variant detect() noexcept {
  if (const char* env = std::getenv("SSCOPE_KERNELS")) {
    if (std::string_view(env) == "scalar") return Variant::kScalar;
  }
  if (cpu_has_avx2() && avx2_table<float>() != nullptr) return Variant::kAvx2;
  return Variant::kScalar;
}

std::atomic<Variant>& current() noexcept {
  static std::atomic<Variant> v{detect()};
  return v;
}

}  // namespace

Variant active_variant() noexcept { return current().load(std::memory_order_relaxed); }

void force_variant(Variant v) {
  if (v == Variant::kAvx2 && (!cpu_has_avx2() || avx2_table<float>() == nullptr)) {
    throw UsageError("AVX2 kernels unavailable on this build or CPU");
  }
  current().store(v, std::memory_order_relaxed);
}

template <typename T>
const KernelTable<T>& active() noexcept {
  if (active_variant() == Variant::kAvx2) return *avx2_table<T>();
  return scalar_table<T>();
}

template const KernelTable<float>& active<float>() noexcept;
template const KernelTable<double>& active<double>() noexcept;

}  // namespace sscope::kernels
