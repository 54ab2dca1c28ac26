#pragma once

// Arithmetic inner loops used by the network and the optimizers.
//
// Every kernel has a scalar reference and (on x86-64) an AVX2 variant chosen
// at runtime. Variants are required to be bit-identical to the reference:
//   * element-wise kernels use only IEEE-exact ops (add, mul, div, sqrt,
//     compare) in the same order, with no FMA contraction;
//   * the dot product is defined with eight lane accumulators (element i goes
//     to lane i % 8) and a fixed pairwise reduction, which is exactly what an
//     8-wide register computes.
// Training trajectories are therefore identical whichever variant runs.

#include <cstddef>
#include <span>
#include <string_view>

namespace sscope::kernels {

template <typename T>
struct KernelTable {
  std::string_view name;
  // y[i] += a * x[i]
  void (*axpy)(T a, const T* x, T* y, std::size_t n);
  // 8-lane blocked dot product
  T (*dot)(const T* x, const T* y, std::size_t n);
  // y[i] = x[i] > 0 ? x[i] : 0
  void (*relu_forward)(const T* x, T* y, std::size_t n);
  // dx[i] = x[i] > 0 ? dy[i] : 0
  void (*relu_backward)(const T* x, const T* dy, T* dx, std::size_t n);
  // PyTorch-style SGD with (optionally Nesterov) momentum and L2 decay.
  void (*sgd_update)(T* param, const T* grad, T* velocity, std::size_t n, T lr,
                     T weight_decay, T momentum, bool nesterov);
  // Decoupled-decay Adam; `decay` = 1 - lr*wd, `step_size` = lr / bias1,
  // `sqrt_bias2` = sqrt(1 - beta2^t).
  void (*adamw_update)(T* param, const T* grad, T* m, T* v, std::size_t n, T decay,
                       T step_size, T beta1, T beta2, T sqrt_bias2, T eps);
};

enum class Variant { kScalar, kAvx2 };

template <typename T>
const KernelTable<T>& scalar_table() noexcept;

/// nullptr when the AVX2 variant was not compiled in.
template <typename T>
const KernelTable<T>* avx2_table() noexcept;

bool cpu_has_avx2() noexcept;

/// The variant used by `active<T>()`. Chosen once from CPU features; the
/// environment variable SSCOPE_KERNELS=scalar forces the reference path.
Variant active_variant() noexcept;
void force_variant(Variant v);

template <typename T>
const KernelTable<T>& active() noexcept;

// Convenience wrappers over the active table.
template <typename T>
inline void axpy(T a, std::span<const T> x, std::span<T> y) noexcept {
  active<T>().axpy(a, x.data(), y.data(), x.size());
}

template <typename T>
inline T dot(std::span<const T> x, std::span<const T> y) noexcept {
  return active<T>().dot(x.data(), y.data(), x.size());
}

}  // namespace sscope::kernels
