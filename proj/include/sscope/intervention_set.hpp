#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace sscope {

/// A subset A of the block indices [m] = {0, ..., m-1}.
///
/// Blocks in A are the ones counterfactually trained on the opposite data
/// role; the rest are shared with the anchor network.
class InterventionSet {
 public:
  static constexpr std::size_t kMaxBlocks = 64;

  static InterventionSet empty(std::size_t m);
  static InterventionSet full(std::size_t m);
  /// [m] \ {i}
  static InterventionSet single_complement(std::size_t m, std::size_t i);
  /// i:m = {i, ..., m-1}; suffix(0) is full, suffix(m) is empty.
  static InterventionSet suffix(std::size_t m, std::size_t i);
  static InterventionSet of(std::size_t m, const std::vector<std::size_t>& members);
  /// Inverse of canonical(); `m` is needed since "{}" does not carry it.
  static InterventionSet parse(std::size_t m, std::string_view text);

  std::size_t block_count() const noexcept { return m_; }
  bool contains(std::size_t block) const noexcept {
    return block < m_ && ((bits_ >> block) & 1U) != 0;
  }
  std::size_t size() const noexcept;
  bool is_empty() const noexcept { return bits_ == 0; }
  bool is_full() const noexcept { return size() == m_; }
  std::vector<std::size_t> members() const;
  InterventionSet complement() const;

  /// "{1,2,5}" with sorted members; used as the results-store key.
  std::string canonical() const;
  /// Human label: "i:m", "[m]\{i}", or the canonical form.
  std::string describe() const;

  friend bool operator==(const InterventionSet&, const InterventionSet&) = default;

 private:
  InterventionSet(std::size_t m, std::uint64_t bits) : m_(m), bits_(bits) {}
  std::size_t m_ = 0;
  std::uint64_t bits_ = 0;
};

}  // namespace sscope
