#include <doctest.h>

#include <cmath>

#include "sscope/error.hpp"
#include "sscope/metrics.hpp"
#include "sscope/rng.hpp"

using namespace sscope;
using namespace sscope::metrics;

namespace {

ErrorRate er(std::uint64_t k, std::uint64_t n = 100) { return {k, n}; }

// Suffix records whose cumulative fgt (and enc) over gap follow `cum`, on a
// 100-example test set with err_c = 0 and err_s = 1.
std::vector<ContributionRecord> suffix_records(const std::vector<std::uint64_t>& cum_percent) {
  const std::size_t m = cum_percent.size() - 1;
  std::vector<ContributionRecord> out;
  for (std::size_t i = 0; i <= m; ++i) {
    const auto k = cum_percent[i];
    // enc_{0:i} = err_s - err_cA = k/100 ; fgt_{0:i} = err_sA - err_c = k/100
    out.push_back(contributions(er(0), er(100), er(100 - k), er(k), InterventionSet::suffix(m, i)));
  }
  return out;
}

}  // namespace

TEST_CASE("worked contribution example") {
  const auto A = InterventionSet::of(6, {5});
  const auto rec = contributions(er(10), er(30), er(25), er(12), A);
  CHECK(rec.enc_exact == Rational(5, 100));
  CHECK(rec.uut_exact == Rational(15, 100));
  CHECK(rec.fgt_exact == Rational(2, 100));
  CHECK(rec.amp_exact == Rational(18, 100));
  CHECK(rec.gap_exact == Rational(1, 5));
  CHECK(rec.identities_hold());
  CHECK(rec.enc_complement == doctest::Approx(0.05));
  CHECK(rec.amp == doctest::Approx(0.18));

  const auto d = contributions(0.10, 0.30, 0.25, 0.12, A);
  CHECK(d.enc_complement == doctest::Approx(0.05));
  CHECK(d.uut == doctest::Approx(0.15));
  CHECK(d.fgt_complement == doctest::Approx(0.02));
  CHECK(d.amp == doctest::Approx(0.18));
  CHECK_THROWS(contributions(1.5, 0.3, 0.2, 0.1, A));
}

TEST_CASE("degenerate intervention sets") {
  const auto empty = contributions(er(10), er(30), er(10), er(30), InterventionSet::empty(4));
  CHECK(empty.uut == 0.0);
  CHECK(empty.amp == 0.0);
  CHECK(empty.enc_exact == empty.gap_exact);
  CHECK(empty.fgt_exact == empty.gap_exact);
  const auto full = contributions(er(10), er(30), er(30), er(10), InterventionSet::full(4));
  CHECK(full.enc_complement == 0.0);
  CHECK(full.fgt_complement == 0.0);
  CHECK(full.uut_exact == full.gap_exact);
  CHECK(full.amp_exact == full.gap_exact);
}

TEST_CASE("decomposition identities hold exactly on random error rates") {
  rng::Stream s(31);
  for (int trial = 0; trial < 2000; ++trial) {
    const std::uint64_t n = 1 + s.below(5000);
    const auto r = [&] { return ErrorRate{s.below(n + 1), n}; };
    const auto rec = contributions(r(), r(), r(), r(), InterventionSet::of(6, {1, 4}));
    CHECK(rec.identities_hold());
    CHECK(rec.enc_exact + rec.uut_exact == rec.gap_exact);
    CHECK(rec.amp_exact + rec.fgt_exact == rec.gap_exact);
  }
}

TEST_CASE("mirroring maps enc to amp and uut to fgt") {
  rng::Stream s(7);
  for (int trial = 0; trial < 200; ++trial) {
    const auto r = [&] { return ErrorRate{s.below(257), 256}; };
    const auto c = r(), sk = r(), ca = r(), sa = r();
    const auto A = InterventionSet::of(5, {0, 3});
    const auto rec = contributions(c, sk, ca, sa, A);
    const auto mir = mirror(rec);
    // The complement set with the intervened rates exchanged.
    const auto direct = contributions(c, sk, sa, ca, A.complement());
    CHECK(mir.A == A.complement());
    CHECK(mir.enc_exact == rec.amp_exact);
    CHECK(mir.amp_exact == rec.enc_exact);
    CHECK(mir.uut_exact == rec.fgt_exact);
    CHECK(mir.fgt_exact == rec.uut_exact);
    CHECK(mir.enc_exact == direct.enc_exact);
    CHECK(mir.uut_exact == direct.uut_exact);
    const auto back = mirror(mir);
    CHECK(back.A == A);
    CHECK(back.enc_exact == rec.enc_exact);
  }
}

TEST_CASE("relative contributions") {
  const auto A = InterventionSet::of(6, {0, 1, 2, 3, 4});
  const auto rec = contributions(0.1, 0.241, 0.2, 0.214, A);  // fgt 0.114, gap 0.141
  const auto rel = relative(rec, rec.gap);
  CHECK(rel.fgt_complement == doctest::Approx(80.851).epsilon(1e-4));

  const auto zero = contributions(0.2, 0.3, 0.2, 0.2, A);
  const auto zr = relative(zero, zero.gap);
  CHECK(zr.uut == 0.0);
  CHECK(zr.fgt_complement == 0.0);

  try {
    relative(rec, 1e-6, 1e-3);
    FAIL("expected refusal");
  } catch (const UsageError& e) {
    CHECK(std::string(e.what()) == "gap too small to normalize");
  }
}

TEST_CASE("increase rates from cumulative suffix contributions") {
  const auto recs = suffix_records({0, 1, 3, 8, 19, 100});
  const auto p = increase_rates(recs);
  CHECK(p.m == 5);
  const std::vector<double> expect{.01, .02, .05, .11, .81};
  double sum = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(p.fgt_rates[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    CHECK(p.enc_rates[i] == doctest::Approx(expect[i]).epsilon(1e-12));
    sum += p.fgt_rates[i];
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.fgt_cumulative.front() == 0.0);
  CHECK(p.fgt_cumulative.back() == 1.0);

  auto shuffled = recs;
  std::swap(shuffled[0], shuffled[4]);
  CHECK(increase_rates(shuffled).fgt_rates == p.fgt_rates);

  auto missing = recs;
  missing.erase(missing.begin() + 2);
  CHECK_THROWS_AS(increase_rates(missing), UsageError);
}

TEST_CASE("flat cumulative contributions give zero interior rates") {
  const auto p = increase_rates(suffix_records({0, 0, 0, 0, 100}));
  CHECK(p.fgt_rates == std::vector<double>{0, 0, 0, 1});
}

TEST_CASE("rates re-integrate to the cumulative vector") {
  rng::Stream s(3);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> cum(2 + s.below(10));
    for (auto& c : cum) c = s.uniform(-2.0, 2.0);
    const auto back = integrate(cum[0], differences(cum));
    REQUIRE(back.size() == cum.size());
    for (std::size_t i = 0; i < cum.size(); ++i) CHECK(std::fabs(back[i] - cum[i]) <= 1e-12);
  }
}

TEST_CASE("divergence screen") {
  const ModelErrors c{0.1, 0.4}, s{0.3, 0.05};
  CHECK_FALSE(detect_divergence(c, c, s).diverged);
  CHECK_FALSE(detect_divergence(s, c, s).diverged);
  const auto f = detect_divergence({0.5, 0.5}, c, s);
  CHECK(f.diverged);
  CHECK(f.worse_than_skewed_on_clean);
  CHECK(f.worse_than_clean_on_skewed);
  const auto half = detect_divergence({0.5, 0.2}, c, s);
  CHECK_FALSE(half.diverged);
  CHECK(half.worse_than_skewed_on_clean);
}

TEST_CASE("error rates and rationals") {
  CHECK(ErrorRate::parse("37/2048") == ErrorRate{37, 2048});
  CHECK(ErrorRate::parse("37/2048").to_string() == "37/2048");
  CHECK_THROWS(ErrorRate::parse("3/0"));
  CHECK_THROWS(ErrorRate::parse("5/4"));
  CHECK_THROWS(ErrorRate::parse("abc"));
  net::EvalReport rep;
  rep.mispredictions = 3;
  rep.n_examples = 12;
  CHECK(ErrorRate::from(rep).exact() == Rational(1, 4));
  CHECK(Rational(2, -4) == Rational(-1, 2));
  CHECK(Rational(1, 3) + Rational(1, 6) == Rational(1, 2));
  CHECK(Rational(1, 3) - Rational(1, 2) == Rational(-1, 6));
  CHECK_THROWS(Rational(1, 0));
}
