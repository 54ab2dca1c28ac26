#include "sscope/intervention_set.hpp"

#include <bit>
#include <charconv>
#include <sstream>

#include "sscope/error.hpp"

namespace sscope {
namespace {

void check_m(std::size_t m) {
  if (m == 0 || m > InterventionSet::kMaxBlocks) {
    throw UsageError("block count must be in [1, 64], got " + std::to_string(m));
  }
}

std::uint64_t low_bits(std::size_t count) {
  return count >= 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << count) - 1);
}

}  // namespace

InterventionSet InterventionSet::empty(std::size_t m) {
  check_m(m);
  return {m, 0};
}

InterventionSet InterventionSet::full(std::size_t m) {
  check_m(m);
  return {m, low_bits(m)};
}

InterventionSet InterventionSet::single_complement(std::size_t m, std::size_t i) {
  check_m(m);
  if (i >= m) throw UsageError("block " + std::to_string(i) + " outside [m]");
  return {m, low_bits(m) & ~(std::uint64_t{1} << i)};
}

InterventionSet InterventionSet::suffix(std::size_t m, std::size_t i) {
  check_m(m);
  if (i > m) throw UsageError("suffix start " + std::to_string(i) + " exceeds m");
  return {m, low_bits(m) & ~low_bits(i)};
}

InterventionSet InterventionSet::of(std::size_t m, const std::vector<std::size_t>& members) {
  check_m(m);
  std::uint64_t bits = 0;
  for (auto b : members) {
    if (b >= m) throw UsageError("block " + std::to_string(b) + " outside [m]");
    bits |= std::uint64_t{1} << b;
  }
  return {m, bits};
}

InterventionSet InterventionSet::parse(std::size_t m, std::string_view text) {
  if (text.size() < 2 || text.front() != '{' || text.back() != '}') {
    throw FormatError("malformed intervention set '" + std::string(text) + "'");
  }
  text = text.substr(1, text.size() - 2);
  std::vector<std::size_t> members;
  while (!text.empty()) {
    const auto comma = text.find(',');
    const auto item = text.substr(0, comma);
    std::size_t value = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), value);
    if (ec != std::errc{} || ptr != item.data() + item.size()) {
      throw FormatError("malformed intervention member '" + std::string(item) + "'");
    }
    members.push_back(value);
    if (comma == std::string_view::npos) break;
    text.remove_prefix(comma + 1);
  }
  return of(m, members);
}

std::size_t InterventionSet::size() const noexcept {
  return static_cast<std::size_t>(std::popcount(bits_));
}

std::vector<std::size_t> InterventionSet::members() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < m_; ++i) {
    if (contains(i)) out.push_back(i);
  }
  return out;
}

InterventionSet InterventionSet::complement() const { return {m_, low_bits(m_) & ~bits_}; }

std::string InterventionSet::canonical() const {
  std::ostringstream os;
  os << '{';
  bool first = true;
  for (auto b : members()) {
    if (!first) os << ',';
    os << b;
    first = false;
  }
  os << '}';
  return os.str();
}

std::string InterventionSet::describe() const {
  for (std::size_t i = 0; i <= m_; ++i) {
    if (*this == suffix(m_, i)) return std::to_string(i) + ":" + std::to_string(m_);
  }
  if (size() + 1 == m_) {
    const auto missing = complement().members().front();
    return "[" + std::to_string(m_) + "]\\{" + std::to_string(missing) + "}";
  }
  return canonical();
}

}  // namespace sscope
