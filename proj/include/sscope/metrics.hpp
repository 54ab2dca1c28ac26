#pragma once

// Contribution metrics over four error rates measured on the clean test set:
//   enc_{[m]\A} = err(s) - err(c,A)     uut_A = err(c,A) - err(c)
//   fgt_{[m]\A} = err(s,A) - err(c)     amp_A = err(s) - err(s,A)
// so enc + uut = amp + fgt = err(s) - err(c) = gap.
//
// Error rates are kept as exact (mispredictions, n) pairs. Every metric is a
// difference of two rates and the identities are checked on the exact
// rationals; the double values are a single rounding of those.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sscope/intervention_set.hpp"
#include "sscope/net.hpp"

namespace sscope::metrics {

inline constexpr double kDefaultGapFloor = 0.005;

/// Exact rational with a positive denominator, kept in lowest terms.
class Rational {
 public:
  Rational() = default;
  Rational(std::int64_t num, std::int64_t den);

  std::int64_t num() const noexcept { return num_; }
  std::int64_t den() const noexcept { return den_; }
  double value() const noexcept { return static_cast<double>(num_) / static_cast<double>(den_); }

  friend Rational operator+(const Rational& a, const Rational& b);
  friend Rational operator-(const Rational& a, const Rational& b);
  friend bool operator==(const Rational&, const Rational&) = default;
  std::string to_string() const;

 private:
  std::int64_t num_ = 0;
  std::int64_t den_ = 1;
};

/// mispredictions / n_examples.
struct ErrorRate {
  std::uint64_t mispredictions = 0;
  std::uint64_t n = 1;

  static ErrorRate from(const net::EvalReport& report);
  /// Parses "k/n".
  static ErrorRate parse(const std::string& text);
  Rational exact() const;
  double value() const noexcept {
    return static_cast<double>(mispredictions) / static_cast<double>(n);
  }
  std::string to_string() const;
  friend bool operator==(const ErrorRate&, const ErrorRate&) = default;
};

struct ContributionRecord {
  InterventionSet A = InterventionSet::empty(2);
  Rational err_c, err_s, err_cA, err_sA;
  Rational enc_exact, uut_exact, fgt_exact, amp_exact, gap_exact;
  double enc_complement = 0.0;
  double uut = 0.0;
  double fgt_complement = 0.0;
  double amp = 0.0;
  double gap = 0.0;

  /// enc + uut == gap and amp + fgt == gap on the exact rationals.
  bool identities_hold() const;
};

ContributionRecord contributions(const ErrorRate& err_c, const ErrorRate& err_s,
                                 const ErrorRate& err_cA, const ErrorRate& err_sA,
                                 const InterventionSet& A);

/// Plain double form for rates that have no exact representation at hand.
ContributionRecord contributions(double err_c, double err_s, double err_cA, double err_sA,
                                 const InterventionSet& A);

/// The record of the complement set with the intervened rates exchanged:
/// maps enc <-> amp and uut <-> fgt.
ContributionRecord mirror(const ContributionRecord& rec);

/// Percent of gap.
struct RelativeRecord {
  InterventionSet A = InterventionSet::empty(2);
  double enc_complement = 0.0;
  double uut = 0.0;
  double fgt_complement = 0.0;
  double amp = 0.0;
};

/// Throws UsageError "gap too small to normalize" when |gap| < gap_floor.
RelativeRecord relative(const ContributionRecord& rec, double gap,
                        double gap_floor = kDefaultGapFloor);

struct LocalizationProfile {
  std::size_t m = 0;
  double gap = 0.0;
  // Cumulative relative contributions of the first i blocks, i = 0..m.
  std::vector<double> enc_cumulative;
  std::vector<double> fgt_cumulative;
  // Rate for block i = cumulative[i + 1] - cumulative[i], i = 0..m-1.
  std::vector<double> enc_rates;
  std::vector<double> fgt_rates;
};

/// Needs one record for every suffix set i:m, i = 0..m (any order).
LocalizationProfile increase_rates(const std::vector<ContributionRecord>& suffix_records,
                                   double gap_floor = kDefaultGapFloor);

/// Finite differences of a cumulative vector (length m + 1) and the inverse.
std::vector<double> differences(const std::vector<double>& cumulative);
std::vector<double> integrate(double start, const std::vector<double>& rates);

struct ModelErrors {
  double clean_test = 0.0;
  double fully_skewed_test = 0.0;
};

struct DivergenceFlag {
  bool diverged = false;
  bool worse_than_skewed_on_clean = false;
  bool worse_than_clean_on_skewed = false;
};

/// Diverged iff err_clean(model) > err_clean(theta^s) and
/// err_skewfull(model) > err_skewfull(theta^c).
DivergenceFlag detect_divergence(const ModelErrors& model, const ModelErrors& clean_anchor,
                                 const ModelErrors& skewed_anchor);

}  // namespace sscope::metrics
