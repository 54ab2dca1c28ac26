// Acceptance run: one PASS/FAIL line per criterion.
//
// The shortcut-emergence experiment (MiniCNN-6, 32x32 watermark task, five
// seeds) is trained once and feeds the identity, emergence, trend and
// telescoping criteria. Set SSCOPE_ACCEPT_DIR to keep its results store.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "sscope/counterfact.hpp"
#include "sscope/error.hpp"
#include "sscope/expcli/analysis.hpp"
#include "sscope/expcli/config.hpp"
#include "sscope/expcli/runner.hpp"
#include "sscope/interventions.hpp"
#include "sscope/stats.hpp"
#include "stats_oracles.hpp"

using namespace sscope;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int precision = 3) {
  std::ostringstream os;
  os << std::setprecision(precision) << v;
  return os.str();
}

struct SmallTask {
  skew::PairedDataset pd;
  skew::Dataset test;
  net::NetSpec spec = net::mlp4(256, 4, 16);

  SmallTask() {
    skew::TaskSpec task;
    task.shape = {1, 16, 16};
    task.class_count = 4;
    task.watermark = skew::WatermarkSkewSpec{8, 0.75, skew::kDefaultGlyphSeed};
    auto clean = skew::gen_clean_synthetic(task, 512, 11);
    auto full = skew::make_fully_skewed(clean, *task.watermark);
    pd = skew::apply_frequency(std::move(clean), std::move(full), skew::Fraction::common(), 12);
    test = skew::gen_clean_synthetic(task, 256, 13);
  }

  cf::TrainPlan plan(std::size_t steps, cf::Role role = cf::Role::kClean) const {
    cf::TrainPlan p;
    p.anchor_role = role;
    p.steps = steps;
    p.batch_size = 32;
    p.master_seed = 777;
    p.optimizer = optim::OptimizerConfig::adamw(3e-3);
    p.min_lr = 3e-6;
    return p;
  }
};

const SmallTask& small_task() {
  static const SmallTask t;
  return t;
}

// ---------------------------------------------------------------------------
// Shared experiment for criteria 1, 5, 6 and 7.

struct Experiment {
  expcli::ExperimentConfig config;
  std::vector<expcli::RunRecord> records;
  std::vector<expcli::TrialMetrics> trials;
  double train_seconds = 0;
  double metrics_seconds = 0;
};

const Experiment& experiment() {
  static const Experiment e = [] {
    Experiment x;
    // Defaults: MiniCNN-6 width 8 on 32x32 images, alpha 3/4, frequency
    // 127/128, AdamW from scratch, 1000 steps, seeds 1..5, suffix family.
    const char* keep = std::getenv("SSCOPE_ACCEPT_DIR");
    x.config.out = keep ? fs::path(keep) : fs::temp_directory_path() / "sscope_acceptance";
    if (!keep) fs::remove_all(x.config.out);
    std::ostringstream log;
    const auto t0 = std::chrono::steady_clock::now();
    expcli::run_counterfactual(x.config, log);
    const auto t1 = std::chrono::steady_clock::now();
    x.records = expcli::read_store(expcli::store_path(x.config));
    x.trials = expcli::compute_metrics(x.records, x.config.gap_floor);
    const auto t2 = std::chrono::steady_clock::now();
    x.train_seconds = std::chrono::duration<double>(t1 - t0).count();
    x.metrics_seconds = std::chrono::duration<double>(t2 - t1).count();
    return x;
  }();
  return e;
}

Outcome decomposition_identities() {
  const auto& e = experiment();
  std::size_t checked = 0, violated = 0, incomplete = 0;
  for (const auto& t : e.trials) {
    if (t.records.size() != t.m + 1) ++incomplete;
    for (const auto& rec : t.records) {
      ++checked;
      violated += !rec.identities_hold();
    }
  }
  const bool ok = violated == 0 && incomplete == 0 && e.trials.size() == e.config.seeds.size() &&
                  e.metrics_seconds < 60.0;
  return {ok, std::to_string(checked) + " records over " + std::to_string(e.trials.size()) +
                  " trials, " + std::to_string(violated) + " violations, " +
                  std::to_string(incomplete) + " incomplete families; metrics took " +
                  fmt(e.metrics_seconds) + " s after " + fmt(e.train_seconds, 4) + " s of training"};
}

Outcome shortcut_emergence() {
  const auto& e = experiment();
  std::vector<double> gaps, clean, skewed;
  for (const auto& t : e.trials) {
    gaps.push_back(t.records.front().gap);
    clean.push_back(t.clean->err_clean.value());
    skewed.push_back(t.skewed->err_clean.value());
  }
  if (gaps.size() < 2) return {false, "fewer than two trials"};
  const auto g = stats::mean_se(gaps);
  const auto tt = stats::t_test(gaps, 0.0, stats::Sidedness::kGreater);
  const bool ok = gaps.size() == 5 && g.mean >= 0.05 && tt.reject;
  return {ok, "clean-test error clean " + fmt(100 * stats::mean_se(clean).mean) + "%, skewed " +
                  fmt(100 * stats::mean_se(skewed).mean) + "%, gap " + fmt(100 * g.mean) +
                  " (SE " + fmt(100 * g.se) + ") points, t = " + fmt(tt.t) + ", p = " + fmt(tt.p)};
}

Outcome fully_skewed_trend() {
  const auto& e = experiment();
  if (e.trials.empty()) return {false, "no trials"};
  const std::size_t m = e.trials.front().m;
  // Error on the fully skewed test set of theta^{c, i:m}; i = 0 is the
  // skewed anchor and i = m the clean one.
  std::vector<std::vector<double>> by_i(m + 1);
  for (const auto& t : e.trials) {
    by_i[0].push_back(t.skewed->err_skewfull.value());
    by_i[m].push_back(t.clean->err_skewfull.value());
  }
  for (const auto& r : e.records) {
    if (r.role != expcli::RunRole::kIntervenedC) continue;
    for (std::size_t i = 1; i < m; ++i) {
      if (r.set == InterventionSet::suffix(m, i).canonical()) by_i[i].push_back(r.err_skewfull.value());
    }
  }
  std::vector<stats::MeanSE> ms;
  std::string series;
  for (std::size_t i = 0; i <= m; ++i) {
    if (by_i[i].size() != e.trials.size()) return {false, "missing models for i = " + std::to_string(i)};
    ms.push_back(stats::mean_se(by_i[i]));
    series += (i ? ", " : "") + fmt(100 * ms.back().mean);
  }
  std::size_t inversions = 0;
  bool within_se = true;
  for (std::size_t i = 0; i < m; ++i) {
    if (ms[i + 1].mean < ms[i].mean) {
      ++inversions;
      within_se = within_se && ms[i].mean - ms[i + 1].mean <= std::max(ms[i].se, ms[i + 1].se);
    }
  }
  const bool ok = inversions == 0 || (inversions == 1 && within_se);
  return {ok, "errors for i = 0.." + std::to_string(m) + ": " + series + " (%); " +
                  std::to_string(inversions) + " inversion(s)" +
                  (inversions ? (within_se ? " within 1 SE" : " beyond 1 SE") : "")};
}

Outcome telescoping() {
  const auto& e = experiment();
  std::size_t profiles = 0;
  double worst = 0.0;
  for (const auto& t : e.trials) {
    if (!t.profile) continue;
    ++profiles;
    const auto& p = *t.profile;
    const auto enc = metrics::integrate(p.enc_cumulative.front(), p.enc_rates);
    const auto fgt = metrics::integrate(p.fgt_cumulative.front(), p.fgt_rates);
    // Cumulative values straight from the stored error rates.
    const double err_c = t.clean->err_clean.value(), err_s = t.skewed->err_clean.value();
    const double gap = err_s - err_c;
    std::map<std::string, std::pair<double, double>> pair_err;
    for (const auto& r : e.records) {
      if (r.trial_id != t.trial_id) continue;
      if (r.role == expcli::RunRole::kIntervenedC) pair_err[r.set].first = r.err_clean.value();
      if (r.role == expcli::RunRole::kIntervenedS) pair_err[r.set].second = r.err_clean.value();
    }
    pair_err[InterventionSet::full(t.m).canonical()] = {err_s, err_c};
    pair_err[InterventionSet::empty(t.m).canonical()] = {err_c, err_s};
    for (std::size_t i = 0; i <= t.m; ++i) {
      const auto [cA, sA] = pair_err.at(InterventionSet::suffix(t.m, i).canonical());
      worst = std::max({worst, std::fabs(enc[i] - p.enc_cumulative[i]),
                        std::fabs(fgt[i] - p.fgt_cumulative[i]),
                        std::fabs(enc[i] - (err_s - cA) / gap), std::fabs(fgt[i] - (sA - err_c) / gap)});
    }
  }
  const bool ok = profiles == e.trials.size() && profiles > 0 && worst <= 1e-12;
  return {ok, std::to_string(profiles) + "/" + std::to_string(e.trials.size()) +
                  " profiles, worst deviation " + fmt(worst)};
}

// ---------------------------------------------------------------------------

Outcome degenerate_equivalences() {
  const auto& s = small_task();
  const std::size_t m = s.spec.blocks.size();
  const auto pc = s.plan(2000);
  const auto family = cf::train_family<float>(s.spec, s.pd, pc, pc.mirrored(),
                                              {InterventionSet::empty(m), InterventionSet::full(m)});
  const auto direct_s = cf::train_direct<float>(s.spec, s.pd, pc, cf::Role::kSkewed);
  const auto direct_c = cf::train_direct<float>(s.spec, s.pd, pc, cf::Role::kClean);
  const auto& none = family.members[0];
  const auto& all = family.members[1];
  const bool checks[] = {
      none.clean_anchored.params().bytes_equal(family.clean.params()),
      none.skewed_anchored.params().bytes_equal(family.skewed.params()),
      all.clean_anchored.params().bytes_equal(direct_s.params()),
      all.skewed_anchored.params().bytes_equal(direct_c.params()),
      family.clean.params().bytes_equal(direct_c.params()),
  };
  std::size_t held = 0;
  for (bool c : checks) held += c;
  return {held == std::size(checks), std::to_string(held) + "/" + std::to_string(std::size(checks)) +
                                         " byte-identity checks over 2000 MLP-4 steps"};
}

Outcome synchronization() {
  const auto& s = small_task();
  const std::size_t m = s.spec.blocks.size(), T = 500;
  std::vector<InterventionSet> sets;
  for (std::size_t i = 0; i <= m; ++i) sets.push_back(InterventionSet::suffix(m, i));
  for (std::size_t i = 0; i < m; ++i) sets.push_back(InterventionSet::single_complement(m, i));
  const auto pc = s.plan(T);
  std::size_t violations = 0;
  cf::SyncStats sync;
  try {
    const auto f = cf::train_family<float>(s.spec, s.pd, pc, pc.mirrored(), sets,
                                           {cf::SyncMode::kRestricted, true});
    sync = f.sync;
    // Independent final check of every shared block.
    for (const auto& mem : f.members) {
      for (std::size_t b : mem.set.complement().members()) {
        violations += !mem.clean_anchored.params().block_bytes_equal(f.clean.params(), b);
        violations += !mem.skewed_anchored.params().block_bytes_equal(f.skewed.params(), b);
      }
    }
  } catch (const TrainingError& e) {
    return {false, std::string("violation: ") + e.what()};
  }
  std::size_t shared = 0;
  for (const auto& A : sets) shared += 2 * (m - A.size());
  const bool ok = violations == 0 && sync.checked_steps == T && sync.checked_blocks == T * shared;
  return {ok, std::to_string(sync.checked_steps) + " steps checked, " +
                  std::to_string(sync.checked_blocks) + " block comparisons, " +
                  std::to_string(violations) + " violations"};
}

Outcome gradient_oracle() {
  std::size_t params = 0, bad = 0;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const auto r = oracle::random_gradient_trial(seed);
    params += r.params;
    bad += r.bad;
    worst = std::max(worst, r.worst_rel);
  }
  return {bad == 0, "100 nets, " + std::to_string(params) + " parameters, worst relative error " +
                        fmt(worst)};
}

Outcome statistics_oracles() {
  rng::Stream s(4242);
  double worst_value = 0, worst_p = 0;
  auto value = [&](double a, double b) { worst_value = std::max(worst_value, std::fabs(a - b)); };
  auto pval = [&](double a, double b) { worst_p = std::max(worst_p, std::fabs(a - b)); };

  // Mean and standard error.
  std::vector<double> xs(37);
  for (auto& x : xs) x = 1e3 + s.uniform(-2, 2);
  long double sum = 0;
  for (double x : xs) sum += x;
  const long double mean = sum / xs.size();
  long double ss = 0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  const auto ms = stats::mean_se(xs);
  value(ms.mean, static_cast<double>(mean));
  value(ms.se, static_cast<double>(std::sqrt(ss / (xs.size() - 1) / xs.size())));

  // Eta squared.
  stats::FactorTable table;
  table.factors = {"f"};
  std::vector<std::string> levels;
  std::vector<double> ys;
  for (int i = 0; i < 120; ++i) {
    const auto level = "L" + std::to_string(s.below(5));
    const double y = 0.2 * (level[1] - '0') + s.uniform(-1, 1);
    table.add_row({level}, y);
    levels.push_back(level);
    ys.push_back(y);
  }
  value(stats::variance_explained(table, "f").eta_squared, oracle::eta_squared(levels, ys));

  // OLS and joint F.
  const std::size_t n = 60;
  std::vector<std::vector<double>> cols(4, std::vector<double>(n));
  std::vector<double> y(n);
  for (std::size_t r = 0; r < n; ++r) {
    cols[0][r] = s.uniform(-1, 1);
    cols[1][r] = s.uniform(0, 3);
    cols[2][r] = cols[0][r] * cols[1][r];
    cols[3][r] = 1.0;
    y[r] = 0.5 * cols[0][r] - 0.8 * cols[1][r] + 0.3 * cols[2][r] + 1.0 + s.uniform(-0.3, 0.3);
  }
  stats::Design full, restricted;
  for (std::size_t j = 0; j < 4; ++j) full.add("x" + std::to_string(j), cols[j]);
  restricted.add("x3", cols[3]);
  const auto fit = stats::ols_fit(y, full);
  const auto ref = oracle::normal_equations(y, cols);
  for (std::size_t j = 0; j < 4; ++j) {
    value(fit.coefficients[j], ref.beta[j]);
    value(fit.standard_errors[j], ref.se[j]);
  }
  value(fit.r_squared, ref.r2);
  const auto rref = oracle::normal_equations(y, {cols[3]});
  const auto ft = stats::joint_f_test(fit, stats::ols_fit(y, restricted), 3);
  const double f_ref = ((rref.rss - ref.rss) / 3) / (ref.rss / (n - 4));
  value(ft.f / f_ref, 1.0);
  pval(ft.p, oracle::f_upper_tail(ft.f, 3, n - 4));

  // Tail probabilities.
  for (double df : {1.0, 3.0, 8.0, 25.0}) {
    for (double t : {0.2, 1.1, 2.3, 5.0}) pval(1.0 - stats::student_t_cdf(t, df), oracle::t_upper_tail(t, df));
  }
  for (double d1 : {2.0, 4.0}) {
    for (double d2 : {6.0, 40.0}) {
      for (double f : {0.5, 1.7, 4.0}) pval(stats::f_sf(f, d1, d2), oracle::f_upper_tail(f, d1, d2));
    }
  }
  const auto tt = stats::t_test(xs, 1e3, stats::Sidedness::kTwoSided);
  pval(tt.p, 2.0 * oracle::t_upper_tail(std::fabs(tt.t), tt.df));

  return {worst_value < 1e-8 && worst_p < 1e-6,
          "worst value deviation " + fmt(worst_value) + ", worst p-value deviation " + fmt(worst_p)};
}

Outcome intervention_contract() {
  const auto& s = small_task();
  const std::size_t m = s.spec.blocks.size(), T = 200;
  const auto plan = s.plan(T, cf::Role::kSkewed);
  const auto anchor = cf::train_direct<float>(s.spec, s.pd, plan, cf::Role::kSkewed);
  const iv::MitigationContext ctx{metrics::ErrorRate{60, 256}, metrics::ErrorRate::from(net::evaluate(anchor, s.test.view())),
                                  s.test.view(), metrics::kDefaultGapFloor};
  std::size_t noop = 0, noop_total = 0;
  for (const char* kind : {"lr*1", "wd*1"}) {
    for (const auto& target : iv::TargetBlocks::enumerate(m, true)) {
      const auto run = iv::retrain_with_intervention<float>(s.spec, s.pd, plan, iv::InterventionKind::parse(kind),
                                                            target, ctx);
      ++noop_total;
      noop += run.model.params().bytes_equal(anchor.params()) && run.result.extent == 0.0;
    }
  }
  // Freeze: blocks 0..m-2 untouched through the last phase, last block trains.
  iv::FreezeConfig fc;
  const auto [t1, t2] = fc.phases(T);
  std::vector<net::ParamStore<float>> snap(T + 1);
  iv::Observer<float> obs = [&](std::size_t t, const net::BlockNet<float>& n) { snap[t] = n.params(); };
  iv::freeze_protocol<float>(s.spec, s.pd, plan, iv::TargetBlocks::single(m - 1), ctx, fc, obs);
  bool freeze_ok = !snap[T].block_bytes_equal(snap[t1 + t2], m - 1);
  for (std::size_t b = 0; b + 1 < m; ++b) {
    freeze_ok = freeze_ok && snap[t1].block_bytes_equal(snap[0], b) &&
                snap[T].block_bytes_equal(snap[t1 + t2], b);
  }
  return {noop == noop_total && freeze_ok,
          std::to_string(noop) + "/" + std::to_string(noop_total) +
              " identity interventions bit-exact; freeze contract " + (freeze_ok ? "holds" : "broken") +
              " (phases " + std::to_string(t1) + "+" + std::to_string(t2) + " of " + std::to_string(T) + ")"};
}

Outcome planted_regression() {
  rng::Stream s(31337);
  const std::size_t m = 6;
  std::map<std::string, metrics::LocalizationProfile> profiles;
  for (int k = 0; k < 16; ++k) {
    metrics::LocalizationProfile p;
    p.m = m;
    p.gap = 0.3;
    for (std::size_t b = 0; b < m; ++b) {
      p.enc_rates.push_back(s.uniform(-0.2, 0.6));
      p.fgt_rates.push_back(s.uniform(-0.2, 0.6));
    }
    profiles["cell" + std::to_string(k)] = p;
  }
  const double beta[9] = {1.2, -0.4, 2.1, -0.7, 0.5, 0.09, -0.11, 0.06, 0.15};
  std::vector<iv::MitigationRow> rows;
  for (const auto& [cell, p] : profiles) {
    for (const auto& t : iv::TargetBlocks::enumerate(m, true)) {
      double e = 0, g = 0;
      for (std::size_t b = t.first; b < t.first + t.count; ++b) {
        e += p.enc_rates[b];
        g += p.fgt_rates[b];
      }
      const double x[9] = {e, g, e * g, e * e, g * g, t.first == 0 ? 1.0 : 0.0,
                           t.first + t.count == m ? 1.0 : 0.0, t.is_double() ? 1.0 : 0.0, 1.0};
      double y = 0;
      for (int j = 0; j < 9; ++j) y += beta[j] * x[j];
      rows.push_back({cell, t, y});
    }
  }
  const auto data = iv::build_mitigation_regression(profiles, rows);
  const auto fit = stats::ols_fit(data.y, data.full);
  double worst = 0;
  for (std::size_t j = 0; j < 9; ++j) worst = std::max(worst, std::fabs(fit.coefficients[j] - beta[j]));
  return {fit.k == 9 && worst < 1e-6, std::to_string(rows.size()) + " rows, worst coefficient error " + fmt(worst)};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"decomposition identities", decomposition_identities},
      {"degenerate equivalences", degenerate_equivalences},
      {"synchronization invariant", synchronization},
      {"gradient oracle", gradient_oracle},
      {"shortcut emergence", shortcut_emergence},
      {"fully-skewed monotonic trend", fully_skewed_trend},
      {"telescoping", telescoping},
      {"statistics oracles", statistics_oracles},
      {"intervention no-op and freeze", intervention_contract},
      {"planted regression", planted_regression},
  };
  // The shared experiment dominates the runtime; train it up front so each
  // line reports its own cost.
  const auto t0 = std::chrono::steady_clock::now();
  try {
    experiment();
  } catch (const std::exception& e) {
    std::cout << "experiment failed: " << e.what() << "\n";
  }
  std::cout << "experiment trained in "
            << fmt(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(), 4)
            << " s\n";
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failed += !o.pass;
    std::cout << (o.pass ? "PASS" : "FAIL") << "  " << (i + 1) << ". " << criteria[i].first << ": "
              << o.detail << " [" << fmt(secs) << " s]" << std::endl;
  }
  std::cout << (criteria.size() - failed) << "/" << criteria.size() << " criteria passed\n";
  return failed == 0 ? 0 : 1;
}
