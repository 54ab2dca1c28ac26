// AVX2 variants. This translation unit is the only one compiled with -mavx2;
// the dispatcher only hands these out after a CPUID check.

#include "sscope/kernels.hpp"

#if defined(__AVX2__)

#include <immintrin.h>

#include <cmath>

#include "lane_order.hpp"

namespace sscope::kernels {
namespace {

using detail::kLanes;

struct F32 {
  using T = float;
  using V = __m256;
  static constexpr std::size_t kWidth = 8;
  static V load(const T* p) { return _mm256_loadu_ps(p); }
  static void store(T* p, V v) { _mm256_storeu_ps(p, v); }
  static V set1(T x) { return _mm256_set1_ps(x); }
  static V zero() { return _mm256_setzero_ps(); }
  static V add(V a, V b) { return _mm256_add_ps(a, b); }
  static V sub(V a, V b) { return _mm256_sub_ps(a, b); }
  static V mul(V a, V b) { return _mm256_mul_ps(a, b); }
  static V div(V a, V b) { return _mm256_div_ps(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_ps(a); }
  static V gt_mask(V a, V b) { return _mm256_cmp_ps(a, b, _CMP_GT_OQ); }
  static V and_(V a, V b) { return _mm256_and_ps(a, b); }
};

struct F64 {
  using T = double;
  using V = __m256d;
  static constexpr std::size_t kWidth = 4;
  static V load(const T* p) { return _mm256_loadu_pd(p); }
  static void store(T* p, V v) { _mm256_storeu_pd(p, v); }
  static V set1(T x) { return _mm256_set1_pd(x); }
  static V zero() { return _mm256_setzero_pd(); }
  static V add(V a, V b) { return _mm256_add_pd(a, b); }
  static V sub(V a, V b) { return _mm256_sub_pd(a, b); }
  static V mul(V a, V b) { return _mm256_mul_pd(a, b); }
  static V div(V a, V b) { return _mm256_div_pd(a, b); }
  static V sqrt(V a) { return _mm256_sqrt_pd(a); }
  static V gt_mask(V a, V b) { return _mm256_cmp_pd(a, b, _CMP_GT_OQ); }
  static V and_(V a, V b) { return _mm256_and_pd(a, b); }
};

template <typename S>
void axpy_simd(typename S::T a, const typename S::T* x, typename S::T* y, std::size_t n) {
  const auto va = S::set1(a);
  std::size_t i = 0;
  for (; i + S::kWidth <= n; i += S::kWidth) {
    S::store(y + i, S::add(S::load(y + i), S::mul(va, S::load(x + i))));
  }
  for (; i < n; ++i) y[i] += a * x[i];
}

float dot_f32(const float* x, const float* y, std::size_t n) {
  __m256 acc = _mm256_setzero_ps();
  const std::size_t full = n - n % kLanes;
  for (std::size_t i = 0; i < full; i += kLanes) {
    acc = _mm256_add_ps(acc, _mm256_mul_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  }
  float lanes[kLanes];
  _mm256_storeu_ps(lanes, acc);
  for (std::size_t i = full; i < n; ++i) lanes[i - full] += x[i] * y[i];
  return detail::reduce_lanes(lanes);
}

double dot_f64(const double* x, const double* y, std::size_t n) {
  __m256d lo = _mm256_setzero_pd();
  __m256d hi = _mm256_setzero_pd();
  const std::size_t full = n - n % kLanes;
  for (std::size_t i = 0; i < full; i += kLanes) {
    lo = _mm256_add_pd(lo, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    hi = _mm256_add_pd(hi,
                       _mm256_mul_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4)));
  }
  double lanes[kLanes];
  _mm256_storeu_pd(lanes, lo);
  _mm256_storeu_pd(lanes + 4, hi);
  for (std::size_t i = full; i < n; ++i) lanes[i - full] += x[i] * y[i];
  return detail::reduce_lanes(lanes);
}

template <typename S>
void relu_forward_simd(const typename S::T* x, typename S::T* y, std::size_t n) {
  using T = typename S::T;
  const auto z = S::zero();
  std::size_t i = 0;
  for (; i + S::kWidth <= n; i += S::kWidth) {
    const auto v = S::load(x + i);
    S::store(y + i, S::and_(S::gt_mask(v, z), v));
  }
  for (; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename S>
void relu_backward_simd(const typename S::T* x, const typename S::T* dy, typename S::T* dx,
                        std::size_t n) {
  using T = typename S::T;
  const auto z = S::zero();
  std::size_t i = 0;
  for (; i + S::kWidth <= n; i += S::kWidth) {
    S::store(dx + i, S::and_(S::gt_mask(S::load(x + i), z), S::load(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename S>
void sgd_update_simd(typename S::T* param, const typename S::T* grad, typename S::T* velocity,
                     std::size_t n, typename S::T lr, typename S::T weight_decay,
                     typename S::T momentum, bool nesterov) {
  using T = typename S::T;
  const auto vlr = S::set1(lr);
  const auto vwd = S::set1(weight_decay);
  const auto vmom = S::set1(momentum);
  std::size_t i = 0;
  for (; i + S::kWidth <= n; i += S::kWidth) {
    const auto p = S::load(param + i);
    const auto g = S::add(S::load(grad + i), S::mul(vwd, p));
    const auto vel = S::add(S::mul(vmom, S::load(velocity + i)), g);
    S::store(velocity + i, vel);
    const auto update = nesterov ? S::add(g, S::mul(vmom, vel)) : vel;
    S::store(param + i, S::sub(p, S::mul(vlr, update)));
  }
  for (; i < n; ++i) {
    const T g = grad[i] + weight_decay * param[i];
    velocity[i] = momentum * velocity[i] + g;
    const T update = nesterov ? g + momentum * velocity[i] : velocity[i];
    param[i] = param[i] - lr * update;
  }
}

template <typename S>
void adamw_update_simd(typename S::T* param, const typename S::T* grad, typename S::T* m,
                       typename S::T* v, std::size_t n, typename S::T decay,
                       typename S::T step_size, typename S::T beta1, typename S::T beta2,
                       typename S::T sqrt_bias2, typename S::T eps) {
  using T = typename S::T;
  const T one_minus_b1 = T(1) - beta1;
  const T one_minus_b2 = T(1) - beta2;
  const auto vdecay = S::set1(decay);
  const auto vstep = S::set1(step_size);
  const auto vb1 = S::set1(beta1);
  const auto vb2 = S::set1(beta2);
  const auto v1b1 = S::set1(one_minus_b1);
  const auto v1b2 = S::set1(one_minus_b2);
  const auto vsb2 = S::set1(sqrt_bias2);
  const auto veps = S::set1(eps);
  std::size_t i = 0;
  for (; i + S::kWidth <= n; i += S::kWidth) {
    const auto g = S::load(grad + i);
    const auto p = S::mul(S::load(param + i), vdecay);
    const auto mi = S::add(S::mul(vb1, S::load(m + i)), S::mul(v1b1, g));
    const auto vi = S::add(S::mul(vb2, S::load(v + i)), S::mul(v1b2, S::mul(g, g)));
    S::store(m + i, mi);
    S::store(v + i, vi);
    const auto denom = S::add(S::div(S::sqrt(vi), vsb2), veps);
    S::store(param + i, S::sub(p, S::mul(vstep, S::div(mi, denom))));
  }
  for (; i < n; ++i) {
    const T g = grad[i];
    const T p = param[i] * decay;
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const T denom = std::sqrt(v[i]) / sqrt_bias2 + eps;
    param[i] = p - step_size * (m[i] / denom);
  }
}

const KernelTable<float> kAvx2F{
    .name = "avx2",
    .axpy = &axpy_simd<F32>,
    .dot = &dot_f32,
    .relu_forward = &relu_forward_simd<F32>,
    .relu_backward = &relu_backward_simd<F32>,
    .sgd_update = &sgd_update_simd<F32>,
    .adamw_update = &adamw_update_simd<F32>,
};

const KernelTable<double> kAvx2D{
    .name = "avx2",
    .axpy = &axpy_simd<F64>,
    .dot = &dot_f64,
    .relu_forward = &relu_forward_simd<F64>,
    .relu_backward = &relu_backward_simd<F64>,
    .sgd_update = &sgd_update_simd<F64>,
    .adamw_update = &adamw_update_simd<F64>,
};

}  // namespace

template <>
const KernelTable<float>* avx2_table<float>() noexcept {
  return &kAvx2F;
}
template <>
const KernelTable<double>* avx2_table<double>() noexcept {
  return &kAvx2D;
}

}  // namespace sscope::kernels

#else  // !__AVX2__

namespace sscope::kernels {

template <>
const KernelTable<float>* avx2_table<float>() noexcept {
  return nullptr;
}
template <>
const KernelTable<double>* avx2_table<double>() noexcept {
  return nullptr;
}

}  // namespace sscope::kernels

#endif
