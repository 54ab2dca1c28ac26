#pragma once

// Counter-based, splittable random streams.
//
// A Stream is a (key, counter) pair; the n-th draw is a keyed SplitMix64
// finalizer of the counter, so draws never depend on platform distribution
// implementations. Streams are derived from a parent key and a name, which
// lets independent consumers (init, shuffle, skew mask) be added without
// perturbing each other.

#include <cstdint>
#include <span>
#include <string_view>
#include <utility>

namespace sscope::rng {

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t hash_name(std::string_view name) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Derives a child key; split(k, a) != split(k, b) for a != b with
/// overwhelming probability.
constexpr std::uint64_t split(std::uint64_t key, std::uint64_t salt) noexcept {
  return mix64(key ^ mix64(salt + 0x9e3779b97f4a7c15ULL));
}

constexpr std::uint64_t split(std::uint64_t key, std::string_view name) noexcept {
  return split(key, hash_name(name));
}

class Stream {
 public:
  explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}
  constexpr Stream(std::uint64_t parent, std::string_view name) noexcept
      : key_(split(parent, name)) {}

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  constexpr std::uint64_t next_u64() noexcept {
    return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  /// Uniform in [0, 1) with 53 random bits.
  constexpr double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  constexpr double uniform(double lo, double hi) noexcept {
    return lo + (hi - lo) * uniform();
  }

  /// Unbiased integer in [0, bound) (Lemire's method).
  std::uint64_t below(std::uint64_t bound) noexcept {
    if (bound <= 1) return 0;
    unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * bound;
    auto low = static_cast<std::uint64_t>(m);
    if (low < bound) {
      const std::uint64_t threshold = (0 - bound) % bound;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * bound;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Exact rational Bernoulli(numerator / denominator).
  bool bernoulli(std::uint64_t numerator, std::uint64_t denominator) noexcept {
    if (numerator >= denominator) return true;
    if (numerator == 0) return false;
    return below(denominator) < numerator;
  }

  template <typename T>
  void shuffle(std::span<T> items) noexcept {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace sscope::rng
