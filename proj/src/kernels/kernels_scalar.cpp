#include <cmath>

#include "lane_order.hpp"
#include "sscope/kernels.hpp"

namespace sscope::kernels {
namespace {

using detail::kLanes;

template <typename T>
void axpy_ref(T a, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

template <typename T>
T dot_ref(const T* x, const T* y, std::size_t n) {
  T acc[kLanes] = {};
  const std::size_t full = n - n % kLanes;
  for (std::size_t i = 0; i < full; i += kLanes) {
    for (std::size_t l = 0; l < kLanes; ++l) acc[l] += x[i + l] * y[i + l];
  }
  for (std::size_t i = full; i < n; ++i) acc[i - full] += x[i] * y[i];
  return detail::reduce_lanes(acc);
}

template <typename T>
void relu_forward_ref(const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > T(0) ? x[i] : T(0);
}

template <typename T>
void relu_backward_ref(const T* x, const T* dy, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) dx[i] = x[i] > T(0) ? dy[i] : T(0);
}

template <typename T>
void sgd_update_ref(T* param, const T* grad, T* velocity, std::size_t n, T lr,
                    T weight_decay, T momentum, bool nesterov) {
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i] + weight_decay * param[i];
    velocity[i] = momentum * velocity[i] + g;
    const T update = nesterov ? g + momentum * velocity[i] : velocity[i];
    param[i] = param[i] - lr * update;
  }
}

template <typename T>
void adamw_update_ref(T* param, const T* grad, T* m, T* v, std::size_t n, T decay,
                      T step_size, T beta1, T beta2, T sqrt_bias2, T eps) {
  const T one_minus_b1 = T(1) - beta1;
  const T one_minus_b2 = T(1) - beta2;
  for (std::size_t i = 0; i < n; ++i) {
    const T g = grad[i];
    const T p = param[i] * decay;
    m[i] = beta1 * m[i] + one_minus_b1 * g;
    v[i] = beta2 * v[i] + one_minus_b2 * (g * g);
    const T denom = std::sqrt(v[i]) / sqrt_bias2 + eps;
    param[i] = p - step_size * (m[i] / denom);
  }
}

template <typename T>
constexpr KernelTable<T> make_scalar_table() {
  return KernelTable<T>{
      .name = "scalar",
      .axpy = &axpy_ref<T>,
      .dot = &dot_ref<T>,
      .relu_forward = &relu_forward_ref<T>,
      .relu_backward = &relu_backward_ref<T>,
      .sgd_update = &sgd_update_ref<T>,
      .adamw_update = &adamw_update_ref<T>,
  };
}

constexpr KernelTable<float> kScalarF = make_scalar_table<float>();
constexpr KernelTable<double> kScalarD = make_scalar_table<double>();

}  // namespace

template <>
const KernelTable<float>& scalar_table<float>() noexcept {
  return kScalarF;
}
template <>
const KernelTable<double>& scalar_table<double>() noexcept {
  return kScalarD;
}

}  // namespace sscope::kernels
