#include "sscope/metrics.hpp"

#include <cmath>
#include <numeric>

#include "sscope/error.hpp"

namespace sscope::metrics {

Rational::Rational(std::int64_t num, std::int64_t den) {
  if (den == 0) throw UsageError("rational with zero denominator");
  if (den < 0) {
    num = -num;
    den = -den;
  }
  const std::int64_t g = std::gcd(num < 0 ? -num : num, den);
  num_ = g ? num / g : 0;
  den_ = g ? den / g : 1;
}

Rational operator+(const Rational& a, const Rational& b) {
  const std::int64_t g = std::gcd(a.den_, b.den_);
  const std::int64_t l = a.den_ / g;
  __int128 num = static_cast<__int128>(a.num_) * (b.den_ / g) + static_cast<__int128>(b.num_) * l;
  __int128 den = static_cast<__int128>(l) * b.den_;
  const auto abs_num = num < 0 ? -num : num;
  if (abs_num > INT64_MAX || den > INT64_MAX) {
    // Reduce before narrowing; error-rate denominators never get here.
    __int128 x = abs_num, y = den;
    while (y != 0) {
      const __int128 r = x % y;
      x = y;
      y = r;
    }
    num /= x;
    den /= x;
    if ((num < 0 ? -num : num) > INT64_MAX || den > INT64_MAX) {
      throw UsageError("rational overflow");
    }
  }
  return Rational(static_cast<std::int64_t>(num), static_cast<std::int64_t>(den));
}

Rational operator-(const Rational& a, const Rational& b) {
  return a + Rational(-b.num_, b.den_);
}

std::string Rational::to_string() const {
  return std::to_string(num_) + "/" + std::to_string(den_);
}

ErrorRate ErrorRate::from(const net::EvalReport& report) {
  if (report.n_examples == 0) throw UsageError("error rate over zero examples");
  return {report.mispredictions, report.n_examples};
}

ErrorRate ErrorRate::parse(const std::string& text) {
  const auto slash = text.find('/');
  if (slash == std::string::npos) throw FormatError("error rate '" + text + "' is not k/n");
  ErrorRate e;
  try {
    std::size_t used = 0;
    e.mispredictions = std::stoull(text.substr(0, slash), &used);
    if (used != slash) throw FormatError("");
    const auto rest = text.substr(slash + 1);
    e.n = std::stoull(rest, &used);
    if (used != rest.size()) throw FormatError("");
  } catch (const std::exception&) {
    throw FormatError("error rate '" + text + "' is not k/n");
  }
  if (e.n == 0 || e.mispredictions > e.n) throw FormatError("error rate '" + text + "' out of range");
  return e;
}

Rational ErrorRate::exact() const {
  return Rational(static_cast<std::int64_t>(mispredictions), static_cast<std::int64_t>(n));
}

std::string ErrorRate::to_string() const {
  return std::to_string(mispredictions) + "/" + std::to_string(n);
}

bool ContributionRecord::identities_hold() const {
  return enc_exact + uut_exact == gap_exact && amp_exact + fgt_exact == gap_exact;
}

ContributionRecord contributions(const ErrorRate& err_c, const ErrorRate& err_s,
                                 const ErrorRate& err_cA, const ErrorRate& err_sA,
                                 const InterventionSet& A) {
  ContributionRecord r;
  r.A = A;
  r.err_c = err_c.exact();
  r.err_s = err_s.exact();
  r.err_cA = err_cA.exact();
  r.err_sA = err_sA.exact();
  r.enc_exact = r.err_s - r.err_cA;
  r.uut_exact = r.err_cA - r.err_c;
  r.fgt_exact = r.err_sA - r.err_c;
  r.amp_exact = r.err_s - r.err_sA;
  r.gap_exact = r.err_s - r.err_c;
  r.enc_complement = r.enc_exact.value();
  r.uut = r.uut_exact.value();
  r.fgt_complement = r.fgt_exact.value();
  r.amp = r.amp_exact.value();
  r.gap = r.gap_exact.value();
  return r;
}

ContributionRecord contributions(double err_c, double err_s, double err_cA, double err_sA,
                                 const InterventionSet& A) {
  for (double e : {err_c, err_s, err_cA, err_sA}) {
    if (!(e >= 0.0 && e <= 1.0)) throw UsageError("error rates must lie in [0, 1]");
  }
  ContributionRecord r;
  r.A = A;
  r.enc_complement = err_s - err_cA;
  r.uut = err_cA - err_c;
  r.fgt_complement = err_sA - err_c;
  r.amp = err_s - err_sA;
  r.gap = err_s - err_c;
  return r;
}

ContributionRecord mirror(const ContributionRecord& rec) {
  ContributionRecord r = rec;
  r.A = rec.A.complement();
  std::swap(r.err_cA, r.err_sA);
  std::swap(r.enc_exact, r.amp_exact);
  std::swap(r.uut_exact, r.fgt_exact);
  std::swap(r.enc_complement, r.amp);
  std::swap(r.uut, r.fgt_complement);
  return r;
}

RelativeRecord relative(const ContributionRecord& rec, double gap, double gap_floor) {
  if (!(std::fabs(gap) >= gap_floor)) throw UsageError("gap too small to normalize");
  return RelativeRecord{rec.A, 100.0 * rec.enc_complement / gap, 100.0 * rec.uut / gap,
                        100.0 * rec.fgt_complement / gap, 100.0 * rec.amp / gap};
}

std::vector<double> differences(const std::vector<double>& cumulative) {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < cumulative.size(); ++i) {
    out.push_back(cumulative[i + 1] - cumulative[i]);
  }
  return out;
}

std::vector<double> integrate(double start, const std::vector<double>& rates) {
  std::vector<double> out{start};
  for (double r : rates) out.push_back(out.back() + r);
  return out;
}

LocalizationProfile increase_rates(const std::vector<ContributionRecord>& suffix_records,
                                   double gap_floor) {
  if (suffix_records.empty()) throw UsageError("increase_rates needs suffix records");
  const std::size_t m = suffix_records.front().A.block_count();
  std::vector<const ContributionRecord*> by_start(m + 1, nullptr);
  for (const auto& rec : suffix_records) {
    if (rec.A.block_count() != m) throw UsageError("suffix records disagree on block count");
    bool matched = false;
    for (std::size_t i = 0; i <= m; ++i) {
      if (rec.A == InterventionSet::suffix(m, i)) {
        by_start[i] = &rec;
        matched = true;
      }
    }
    if (!matched) throw UsageError("record for " + rec.A.canonical() + " is not a suffix set");
  }
  for (std::size_t i = 0; i <= m; ++i) {
    if (!by_start[i]) {
      throw UsageError("missing suffix record " + std::to_string(i) + ":" + std::to_string(m));
    }
  }
  LocalizationProfile p;
  p.m = m;
  p.gap = by_start[0]->gap;
  if (!(std::fabs(p.gap) >= gap_floor)) throw UsageError("gap too small to normalize");
  // Suffix set i:m leaves the first i blocks shared, so its complement
  // contributions are the cumulative ones of blocks 0..i-1.
  for (std::size_t i = 0; i <= m; ++i) {
    p.enc_cumulative.push_back(by_start[i]->enc_complement / p.gap);
    p.fgt_cumulative.push_back(by_start[i]->fgt_complement / p.gap);
  }
  p.enc_rates = differences(p.enc_cumulative);
  p.fgt_rates = differences(p.fgt_cumulative);
  return p;
}

DivergenceFlag detect_divergence(const ModelErrors& model, const ModelErrors& clean_anchor,
                                 const ModelErrors& skewed_anchor) {
  DivergenceFlag f;
  f.worse_than_skewed_on_clean = model.clean_test > skewed_anchor.clean_test;
  f.worse_than_clean_on_skewed = model.fully_skewed_test > clean_anchor.fully_skewed_test;
  f.diverged = f.worse_than_skewed_on_clean && f.worse_than_clean_on_skewed;
  return f;
}

}  // namespace sscope::metrics
