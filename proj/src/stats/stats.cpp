#include "sscope/stats.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>

#include "sscope/error.hpp"

namespace sscope::stats {

namespace {

// Neumaier summation of f(x) over the sample.
template <typename F>
double compensated_sum(std::span<const double> xs, F f) {
  double sum = 0.0, carry = 0.0;
  for (double x : xs) {
    const double v = f(x);
    const double t = sum + v;
    carry += std::fabs(sum) >= std::fabs(v) ? (sum - t) + v : (v - t) + sum;
    sum = t;
  }
  return sum + carry;
}

}  // namespace

MeanSE mean_se(std::span<const double> sample) {
  if (sample.size() < 2) throw UsageError("standard error needs at least 2 values");
  for (double v : sample) {
    if (!std::isfinite(v)) throw UsageError("sample contains a non-finite value");
  }
  const double n = static_cast<double>(sample.size());
  const double mean = compensated_sum(sample, [](double v) { return v; }) / n;
  const double ss = compensated_sum(sample, [mean](double v) { return (v - mean) * (v - mean); });
  return {mean, std::sqrt(ss / (n - 1.0)) / std::sqrt(n), sample.size()};
}

TTest t_test(std::span<const double> sample, double null_value, Sidedness side, double alpha) {
  const auto ms = mean_se(sample);
  if (ms.se == 0.0) throw DegenerateError("degenerate sample: zero standard error");
  TTest r;
  r.t = (ms.mean - null_value) / ms.se;
  r.df = static_cast<double>(ms.n - 1);
  switch (side) {
    case Sidedness::kGreater:
      r.p = student_t_cdf(-r.t, r.df);  // upper tail without cancellation
      break;
    case Sidedness::kLess:
      r.p = student_t_cdf(r.t, r.df);
      break;
    case Sidedness::kTwoSided: {
      const double a = std::fabs(r.t);
      r.p = regularized_beta(r.df / 2.0, 0.5, r.df / (r.df + a * a));
      break;
    }
  }
  r.reject = r.p < alpha;
  return r;
}

void FactorTable::add_row(std::vector<std::string> row_levels, double y) {
  if (row_levels.size() != factors.size()) throw UsageError("row does not assign every factor");
  levels.push_back(std::move(row_levels));
  response.push_back(y);
}

std::size_t FactorTable::factor_index(const std::string& name) const {
  const auto it = std::find(factors.begin(), factors.end(), name);
  if (it == factors.end()) throw UsageError("unknown factor '" + name + "'");
  return static_cast<std::size_t>(it - factors.begin());
}

VarianceExplained variance_explained(const FactorTable& table, const std::string& factor) {
  const std::size_t f = table.factor_index(factor);
  std::map<std::string, std::vector<double>> groups;
  for (std::size_t r = 0; r < table.response.size(); ++r) {
    groups[table.levels[r][f]].push_back(table.response[r]);
  }
  VarianceExplained out;
  for (auto it = groups.begin(); it != groups.end();) {
    if (it->second.size() < 2) {
      std::cerr << "warning: factor " << factor << " level '" << it->first
                << "' has fewer than 2 rows; excluded\n";
      out.excluded_levels.push_back(it->first);
      it = groups.erase(it);
    } else {
      ++it;
    }
  }
  if (groups.size() < 2) throw UsageError("factor '" + factor + "' has fewer than 2 levels");
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& [_, ys] : groups) {
    for (double y : ys) sum += y;
    n += ys.size();
  }
  const double grand = sum / static_cast<double>(n);
  double ss_between = 0.0, ss_total = 0.0;
  for (const auto& [_, ys] : groups) {
    double s = 0.0;
    for (double y : ys) s += y;
    const double mean = s / static_cast<double>(ys.size());
    ss_between += static_cast<double>(ys.size()) * (mean - grand) * (mean - grand);
    for (double y : ys) ss_total += (y - grand) * (y - grand);
  }
  out.rows_used = n;
  if (ss_total == 0.0) throw DegenerateError("response is constant; variance undefined");
  out.eta_squared = std::clamp(ss_between / ss_total, 0.0, 1.0);
  return out;
}

void Design::add(std::string name, std::vector<double> column) {
  if (!columns.empty() && column.size() != rows()) {
    throw ShapeError("design column '" + name + "' has the wrong length");
  }
  names.push_back(std::move(name));
  columns.push_back(std::move(column));
}

double RegressionResult::coefficient(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw UsageError("no coefficient named '" + name + "'");
  return coefficients[static_cast<std::size_t>(it - names.begin())];
}

RegressionResult ols_fit(std::span<const double> y, const Design& X) {
  const std::size_t n = y.size(), k = X.columns.size();
  if (k == 0) throw UsageError("design has no columns");
  if (X.rows() != n) throw ShapeError("design rows do not match response length");
  if (n <= k) throw UsageError("OLS needs more rows than columns");

  Eigen::MatrixXd A(n, k);
  Eigen::VectorXd b(n);
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < n; ++i) A(i, j) = X.columns[j][i];
  }
  for (std::size_t i = 0; i < n; ++i) b(i) = y[i];

  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(A);
  qr.setThreshold(1e-10);
  if (static_cast<std::size_t>(qr.rank()) < k) {
    std::string cols;
    const auto& perm = qr.colsPermutation().indices();
    for (std::size_t p = static_cast<std::size_t>(qr.rank()); p < k; ++p) {
      cols += (cols.empty() ? "" : ", ") + X.names[static_cast<std::size_t>(perm(p))];
    }
    throw DegenerateError("design is rank deficient; collinear column(s): " + cols);
  }
  const Eigen::VectorXd beta = qr.solve(b);
  const Eigen::VectorXd resid = b - A * beta;

  RegressionResult r;
  r.names = X.names;
  r.n = n;
  r.k = k;
  r.coefficients.assign(beta.data(), beta.data() + k);
  r.residuals.assign(resid.data(), resid.data() + n);
  r.rss = resid.squaredNorm();
  const double mean = b.mean();
  r.tss = (b.array() - mean).square().sum();
  r.r_squared = r.tss > 0.0 ? std::clamp(1.0 - r.rss / r.tss, 0.0, 1.0) : 1.0;

  // (X'X)^{-1} = P R^{-1} R^{-T} P^T
  const Eigen::MatrixXd R =
      qr.matrixR().topLeftCorner(k, k).template triangularView<Eigen::Upper>();
  const Eigen::MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::MatrixXd inner = Rinv * Rinv.transpose();
  const double sigma2 = r.rss / static_cast<double>(n - k);
  const auto& perm = qr.colsPermutation().indices();
  r.standard_errors.assign(k, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const auto col = static_cast<std::size_t>(perm(static_cast<Eigen::Index>(p)));
    r.standard_errors[col] = std::sqrt(sigma2 * inner(static_cast<Eigen::Index>(p),
                                                      static_cast<Eigen::Index>(p)));
  }
  return r;
}

FTest joint_f_test(const RegressionResult& full, const RegressionResult& restricted,
                   std::size_t q) {
  if (q == 0) throw UsageError("F-test needs q > 0");
  if (full.n != restricted.n) throw UsageError("models were fitted on different rows");
  if (restricted.k > full.k) {
    throw UsageError("restricted model has more columns than the full one");
  }
  FTest out;
  out.q = q;
  out.df_residual = full.n - full.k;
  const double diff = std::max(0.0, restricted.rss - full.rss);
  // Round-off leaves a residual of order eps^2 * TSS on an exact fit.
  if (full.rss <= 1e-24 * full.tss) {
    out.f = diff > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    out.p = diff > 0.0 ? 0.0 : 1.0;
    return out;
  }
  out.f = (diff / static_cast<double>(q)) / (full.rss / static_cast<double>(out.df_residual));
  out.p = f_sf(out.f, static_cast<double>(q), static_cast<double>(out.df_residual));
  return out;
}

}  // namespace sscope::stats
