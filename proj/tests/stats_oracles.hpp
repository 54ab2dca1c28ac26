#pragma once

// Brute-force references for the statistics module: normal equations solved
// by Gauss-Jordan elimination in long double, and distribution tails by
// composite Simpson integration of the densities.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

namespace oracle {

using LD = long double;

inline LD t_pdf(LD x, LD df) {
  const LD c = std::exp(std::lgamma((df + 1) / 2) - std::lgamma(df / 2)) / std::sqrt(df * M_PIl);
  return c * std::pow(1 + x * x / df, -(df + 1) / 2);
}

inline LD f_pdf(LD x, LD d1, LD d2) {
  x = std::max(x, 1e-300L);  // the d1 = 2 density is 1 at the origin
  const LD lb = std::lgamma(d1 / 2) + std::lgamma(d2 / 2) - std::lgamma((d1 + d2) / 2);
  return std::exp((d1 / 2) * std::log(d1 / d2) + (d1 / 2 - 1) * std::log(x) -
                  ((d1 + d2) / 2) * std::log1p(d1 * x / d2) - lb);
}

template <typename F>
LD simpson(F f, LD a, LD b, int intervals = 200000) {
  const LD h = (b - a) / intervals;
  LD s = f(a) + f(b);
  for (int i = 1; i < intervals; ++i) s += f(a + i * h) * (i % 2 ? 4 : 2);
  return s * h / 3;
}

/// P(T > t), t >= 0.
inline double t_upper_tail(double t, double df) {
  return static_cast<double>(0.5L - simpson([&](LD x) { return t_pdf(x, df); }, 0, t));
}

/// P(F > f) for d2 >= 4, integrated directly over the tail through
/// x = f + u / (1 - u) so that tiny p-values keep their relative accuracy.
inline double f_upper_tail(double f, double d1, double d2) {
  const auto g = [&](LD u) -> LD {
    if (u >= 1) return 0;
    const LD w = 1 - u;
    return f_pdf(f + u / w, d1, d2) / (w * w);
  };
  return static_cast<double>(simpson(g, 0, 1));
}

struct OlsOracle {
  std::vector<double> beta, se;
  double rss = 0, tss = 0, r2 = 0;
};

/// Columns are regressors; solves (X'X) b = X'y and inverts X'X directly.
inline OlsOracle normal_equations(const std::vector<double>& y,
                                  const std::vector<std::vector<double>>& cols) {
  const std::size_t n = y.size(), k = cols.size();
  std::vector<std::vector<LD>> a(k, std::vector<LD>(2 * k + 1, 0));
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = 0; j < k; ++j)
      for (std::size_t r = 0; r < n; ++r) a[i][j] += static_cast<LD>(cols[i][r]) * cols[j][r];
    a[i][k + i] = 1;
    for (std::size_t r = 0; r < n; ++r) a[i][2 * k] += static_cast<LD>(cols[i][r]) * y[r];
  }
  for (std::size_t c = 0; c < k; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < k; ++r)
      if (std::fabs(a[r][c]) > std::fabs(a[piv][c])) piv = r;
    std::swap(a[c], a[piv]);
    const LD d = a[c][c];
    for (auto& v : a[c]) v /= d;
    for (std::size_t r = 0; r < k; ++r) {
      if (r == c) continue;
      const LD f = a[r][c];
      for (std::size_t j = 0; j <= 2 * k; ++j) a[r][j] -= f * a[c][j];
    }
  }
  OlsOracle o;
  for (std::size_t i = 0; i < k; ++i) o.beta.push_back(static_cast<double>(a[i][2 * k]));
  LD rss = 0, mean = 0, tss = 0;
  for (double v : y) mean += v;
  mean /= n;
  for (std::size_t r = 0; r < n; ++r) {
    LD fit = 0;
    for (std::size_t i = 0; i < k; ++i) fit += static_cast<LD>(a[i][2 * k]) * cols[i][r];
    rss += (y[r] - fit) * (y[r] - fit);
    tss += (y[r] - mean) * (y[r] - mean);
  }
  const LD s2 = rss / static_cast<LD>(n - k);
  for (std::size_t i = 0; i < k; ++i) o.se.push_back(static_cast<double>(std::sqrt(s2 * a[i][k + i])));
  o.rss = static_cast<double>(rss);
  o.tss = static_cast<double>(tss);
  o.r2 = static_cast<double>(1 - rss / tss);
  return o;
}

/// SS_between / SS_total over groups, all in long double.
inline double eta_squared(const std::vector<std::string>& level, const std::vector<double>& y) {
  std::map<std::string, std::pair<LD, std::size_t>> g;
  LD mean = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    g[level[i]].first += y[i];
    g[level[i]].second += 1;
    mean += y[i];
  }
  mean /= y.size();
  LD total = 0, between = 0;
  for (double v : y) total += (v - mean) * (v - mean);
  for (const auto& [_, sc] : g) {
    const LD gm = sc.first / sc.second;
    between += sc.second * (gm - mean) * (gm - mean);
  }
  return static_cast<double>(between / total);
}

}  // namespace oracle
