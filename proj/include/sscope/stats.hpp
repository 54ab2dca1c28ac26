#pragma once

// Standard errors, Student-t tests, one-way variance decomposition and OLS
// with joint F-tests. The t and F distributions are evaluated through the
// regularized incomplete beta function (Lentz continued fraction).

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace sscope::stats {

struct MeanSE {
  double mean = 0.0;
  double se = 0.0;  // Bessel-corrected sd / sqrt(n)
  std::size_t n = 0;
};

MeanSE mean_se(std::span<const double> sample);

enum class Sidedness { kGreater, kLess, kTwoSided };

struct TTest {
  double t = 0.0;
  double df = 0.0;
  double p = 1.0;
  bool reject = false;  // p < alpha
};

/// One-sample t-test of mean against null_value. Throws DegenerateError
/// when the standard error is zero.
TTest t_test(std::span<const double> sample, double null_value, Sidedness side,
             double alpha = 0.05);

/// I_x(a, b).
double regularized_beta(double a, double b, double x);
double student_t_cdf(double t, double df);
/// P(F > f) for F(d1, d2).
double f_sf(double f, double d1, double d2);

struct FactorTable {
  std::vector<std::string> factors;              // factor names
  std::vector<std::vector<std::string>> levels;  // per row, one level per factor
  std::vector<double> response;

  void add_row(std::vector<std::string> row_levels, double y);
  std::size_t factor_index(const std::string& name) const;
};

struct VarianceExplained {
  double eta_squared = 0.0;
  std::size_t rows_used = 0;
  std::vector<std::string> excluded_levels;  // levels with fewer than 2 rows
};

/// One-way eta^2 = SS_between / SS_total for a single factor. Levels seen
/// fewer than twice are dropped before computing either sum.
VarianceExplained variance_explained(const FactorTable& table, const std::string& factor);

struct Design {
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;  // each of length n

  std::size_t rows() const noexcept { return columns.empty() ? 0 : columns.front().size(); }
  void add(std::string name, std::vector<double> column);
};

struct RegressionResult {
  std::vector<std::string> names;
  std::vector<double> coefficients;
  std::vector<double> standard_errors;
  std::vector<double> residuals;
  double r_squared = 0.0;
  double rss = 0.0;
  double tss = 0.0;  // centered
  std::size_t n = 0;
  std::size_t k = 0;

  double coefficient(const std::string& name) const;
};

/// Least squares through a column-pivoting Householder QR. Throws
/// DegenerateError naming the dependent columns when X is rank deficient.
RegressionResult ols_fit(std::span<const double> y, const Design& X);

struct FTest {
  double f = 0.0;  // +infinity when the full model fits exactly
  double p = 1.0;
  std::size_t q = 0;
  std::size_t df_residual = 0;
};

FTest joint_f_test(const RegressionResult& full, const RegressionResult& restricted,
                   std::size_t q);

}  // namespace sscope::stats
