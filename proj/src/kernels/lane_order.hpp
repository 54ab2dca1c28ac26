#pragma once

#include <cstddef>

namespace sscope::kernels::detail {

inline constexpr std::size_t kLanes = 8;

// Reduction order shared by every dot-product variant.
template <typename T>
inline T reduce_lanes(const T (&acc)[kLanes]) noexcept {
  const T s04 = acc[0] + acc[4];
  const T s15 = acc[1] + acc[5];
  const T s26 = acc[2] + acc[6];
  const T s37 = acc[3] + acc[7];
  return (s04 + s26) + (s15 + s37);
}

}  // namespace sscope::kernels::detail
