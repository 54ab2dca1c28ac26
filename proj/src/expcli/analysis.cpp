#include "sscope/expcli/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <set>
#include <sstream>

#include "sscope/error.hpp"
#include "sscope/interventions.hpp"

namespace sscope::expcli {
namespace {

using nlohmann::json;

std::string pct(double v, int digits = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << 100.0 * v << "%";
  return os.str();
}

std::string num(double v, int digits = 2) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string mean_se_pct(const std::vector<double>& xs) {
  if (xs.size() < 2) return xs.empty() ? "-" : pct(xs[0]) + " (n=1)";
  const auto ms = stats::mean_se(xs);
  return pct(ms.mean) + " (" + pct(ms.se) + ")";
}

class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}
  void add(std::vector<std::string> row) { rows_.push_back(std::move(row)); }
  bool empty() const { return rows_.empty(); }

  std::string render(ReportFormat f) const {
    std::ostringstream os;
    if (f == ReportFormat::kMarkdown) {
      auto line = [&](const std::vector<std::string>& r) {
        os << "|";
        for (const auto& c : r) os << " " << c << " |";
        os << "\n";
      };
      line(header_);
      os << "|";
      for (std::size_t i = 0; i < header_.size(); ++i) os << (i == 0 ? " --- |" : " ---: |");
      os << "\n";
      for (const auto& r : rows_) line(r);
    } else {
      std::vector<std::size_t> w(header_.size(), 0);
      auto measure = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) w[i] = std::max(w[i], r[i].size());
      };
      measure(header_);
      for (const auto& r : rows_) measure(r);
      auto line = [&](const std::vector<std::string>& r) {
        for (std::size_t i = 0; i < r.size(); ++i) {
          os << (i ? "  " : "") << std::setw(static_cast<int>(w[i]))
             << (i == 0 ? std::left : std::right) << r[i];
        }
        os << "\n";
      };
      line(header_);
      std::size_t total = 0;
      for (auto x : w) total += x + 2;
      os << std::string(total - 2, '-') << "\n";
      for (const auto& r : rows_) line(r);
    }
    return os.str();
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

std::string heading(ReportFormat f, const std::string& title) {
  return f == ReportFormat::kMarkdown ? "## " + title + "\n\n" : title + "\n" + std::string(title.size(), '=') + "\n";
}

struct CellInfo {
  std::string task, strength, freq, net, optimizer, mode;
};

std::map<std::string, CellInfo> cell_infos(const std::vector<RunRecord>& records) {
  std::map<std::string, CellInfo> out;
  for (const auto& r : records) {
    out.emplace(r.cell, CellInfo{r.task, r.skew_strength, r.skew_frequency, r.net, r.optimizer, r.mode});
  }
  return out;
}

std::string cell_label(const CellInfo& c) {
  return c.task + "/" + c.strength + " " + c.freq + " " + c.net + " " + c.optimizer;
}

bool usable(const RunRecord& r) { return r.status == "ok" && !r.diverged; }

}  // namespace

std::size_t block_count_for(const std::string& net) {
  if (net == "mlp4") return 4;
  if (net == "minicnn6") return 6;
  throw FormatError("unknown net '" + net + "' in results store");
}

std::string column_value(const RunRecord& r, const std::string& column) {
  const auto& cols = csv_columns();
  const auto it = std::find(cols.begin(), cols.end(), column);
  if (it == cols.end()) throw UsageError("unknown grouping column '" + column + "'");
  return to_fields(r)[static_cast<std::size_t>(it - cols.begin())];
}

std::vector<AggregateCell> aggregate(const std::vector<RunRecord>& records,
                                     const std::vector<std::string>& grouping,
                                     const std::string& value_column) {
  if (value_column != "err_clean" && value_column != "err_skewfull") {
    throw UsageError("aggregate value must be err_clean or err_skewfull");
  }
  std::map<std::vector<std::string>, AggregateCell> groups;
  for (const auto& r : records) {
    std::vector<std::string> key;
    for (const auto& g : grouping) key.push_back(column_value(r, g));
    auto& cell = groups[key];
    cell.key = key;
    if (r.status != "ok") {
      ++cell.excluded_failed;
      continue;
    }
    if (r.diverged) {
      ++cell.excluded_diverged;
      continue;
    }
    cell.values.push_back(value_column == "err_clean" ? r.err_clean.value() : r.err_skewfull.value());
    cell.run_ids.push_back(r.run_id);
  }
  std::vector<AggregateCell> out;
  for (auto& [_, cell] : groups) {
    cell.n = cell.values.size();
    cell.insufficient = cell.n < 2;
    if (!cell.insufficient) cell.value = stats::mean_se(cell.values);
    out.push_back(std::move(cell));
  }
  return out;
}

std::vector<TrialMetrics> compute_metrics(const std::vector<RunRecord>& records,
                                          double gap_floor) {
  std::map<std::string, std::vector<const RunRecord*>> by_trial;
  for (const auto& r : records) {
    if (r.role != RunRole::kMitigation) by_trial[r.trial_id].push_back(&r);
  }
  std::vector<TrialMetrics> out;
  for (const auto& [tid, rs] : by_trial) {
    TrialMetrics t;
    t.trial_id = tid;
    t.cell = rs.front()->cell;
    t.seed = rs.front()->seed;
    t.m = block_count_for(rs.front()->net);
    std::map<std::string, const RunRecord*> ic, is;
    for (const auto* r : rs) {
      if (r->status != "ok") continue;
      if (r->role == RunRole::kCleanAnchor) t.clean = r;
      if (r->role == RunRole::kSkewedAnchor) t.skewed = r;
      if (r->role == RunRole::kIntervenedC) ic[r->set] = r;
      if (r->role == RunRole::kIntervenedS) is[r->set] = r;
    }
    if (!t.clean || !t.skewed) continue;
    const std::size_t m = t.m;
    // Degenerate sets come from the anchors: theta^{c,[m]} is theta^s and
    // theta^{c,{}} is theta^c (and mirrored).
    auto add = [&](const InterventionSet& A, const RunRecord* rc, const RunRecord* rsk) {
      t.records.push_back(metrics::contributions(t.clean->err_clean, t.skewed->err_clean,
                                                 rc->err_clean, rsk->err_clean, A));
      t.excluded.push_back(rc->diverged || rsk->diverged);
      t.run_ids.push_back({t.clean->run_id, t.skewed->run_id, rc->run_id, rsk->run_id});
    };
    add(InterventionSet::empty(m), t.clean, t.skewed);
    add(InterventionSet::full(m), t.skewed, t.clean);
    for (const auto& [set, rc] : ic) {
      const auto it = is.find(set);
      if (it == is.end()) continue;
      add(InterventionSet::parse(m, set), rc, it->second);
    }
    std::vector<metrics::ContributionRecord> suffix;
    bool suffix_excluded = false;
    for (std::size_t i = 0; i <= m; ++i) {
      const auto A = InterventionSet::suffix(m, i);
      for (std::size_t k = 0; k < t.records.size(); ++k) {
        if (t.records[k].A == A) {
          suffix.push_back(t.records[k]);
          suffix_excluded = suffix_excluded || t.excluded[k];
        }
      }
    }
    if (suffix.size() == m + 1 && std::fabs(t.records.front().gap) >= gap_floor) {
      if (suffix_excluded) {
        t.profile_excluded = true;
      } else {
        t.profile = metrics::increase_rates(suffix, gap_floor);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

void write_metrics(const std::vector<TrialMetrics>& trials, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream c(dir / "contributions.csv");
  c << kSchemaTag << "\n"
    << csv_join({"cell", "trial_id", "seed", "set", "describe", "err_c", "err_s", "err_cA",
                 "err_sA", "enc", "uut", "fgt", "amp", "gap", "identities", "excluded"})
    << "\n";
  std::ofstream p(dir / "profiles.csv");
  p << kSchemaTag << "\n"
    << csv_join({"cell", "trial_id", "seed", "block", "enc_rate", "fgt_rate", "enc_cumulative",
                 "fgt_cumulative", "gap"})
    << "\n";
  auto g = [](double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
  };
  for (const auto& t : trials) {
    for (std::size_t k = 0; k < t.records.size(); ++k) {
      const auto& r = t.records[k];
      c << csv_join({t.cell, t.trial_id, std::to_string(t.seed), r.A.canonical(), r.A.describe(),
                     r.err_c.to_string(), r.err_s.to_string(), r.err_cA.to_string(),
                     r.err_sA.to_string(), r.enc_exact.to_string(), r.uut_exact.to_string(),
                     r.fgt_exact.to_string(), r.amp_exact.to_string(), r.gap_exact.to_string(),
                     r.identities_hold() ? "exact" : "VIOLATED", t.excluded[k] ? "1" : "0"})
        << "\n";
    }
    if (!t.profile) continue;
    const auto& pr = *t.profile;
    for (std::size_t b = 0; b < pr.m; ++b) {
      p << csv_join({t.cell, t.trial_id, std::to_string(t.seed), std::to_string(b),
                     g(pr.enc_rates[b]), g(pr.fgt_rates[b]), g(pr.enc_cumulative[b + 1]),
                     g(pr.fgt_cumulative[b + 1]), g(pr.gap)})
        << "\n";
    }
  }
  if (!c || !p) throw std::runtime_error("failed writing metrics into " + dir.string());
}

namespace {

// Extents per (cell, kind, target) over seeds, using each trial's anchors.
struct ExtentKey {
  std::string cell, kind, targets;
  auto operator<=>(const ExtentKey&) const = default;
};

std::map<ExtentKey, std::pair<std::vector<double>, std::vector<std::string>>> collect_extents(
    const std::vector<RunRecord>& records, double gap_floor, std::size_t& undefined) {
  std::map<std::string, std::pair<const RunRecord*, const RunRecord*>> anchors;
  for (const auto& r : records) {
    if (r.status != "ok") continue;
    if (r.role == RunRole::kCleanAnchor) anchors[r.trial_id].first = &r;
    if (r.role == RunRole::kSkewedAnchor) anchors[r.trial_id].second = &r;
  }
  std::map<ExtentKey, std::pair<std::vector<double>, std::vector<std::string>>> out;
  for (const auto& r : records) {
    if (r.role != RunRole::kMitigation || r.status != "ok") continue;
    const auto it = anchors.find(r.trial_id);
    if (it == anchors.end() || !it->second.first || !it->second.second) continue;
    const auto res = iv::mitigation_extent(r.err_clean, it->second.first->err_clean,
                                           it->second.second->err_clean, gap_floor);
    if (!res.extent_defined) {
      ++undefined;
      continue;
    }
    auto& slot = out[{r.cell, r.intervention, r.targets}];
    slot.first.push_back(res.extent);
    slot.second.push_back(r.run_id);
  }
  return out;
}

std::string target_of(const std::string& tag) { return tag.substr(0, tag.find('@')); }

std::string fmt_coef(double c, double se) { return num(c) + " (" + num(se) + ")"; }

}  // namespace

Report build_stats(const std::vector<RunRecord>& records, ReportFormat f, double gap_floor) {
  std::ostringstream os;
  json manifest = json::array();
  const auto infos = cell_infos(records);
  const auto trials = compute_metrics(records, gap_floor);

  // Shortcut emergence: gap = err_s - err_c per seed, one-sided t-test > 0.
  os << heading(f, "Shortcut emergence (clean-test error gap, skewed minus clean)");
  Table emergence({"Cell", "Mean gap", "SE", "t", "p (one-sided)", "Reject at 5%", "n"});
  std::map<std::string, std::vector<double>> gaps;
  std::map<std::string, std::vector<std::string>> gap_ids;
  for (const auto& t : trials) {
    gaps[t.cell].push_back(t.records.front().gap);
    gap_ids[t.cell].push_back(t.clean->run_id);
    gap_ids[t.cell].push_back(t.skewed->run_id);
  }
  for (const auto& [cell, xs] : gaps) {
    if (xs.size() < 2) {
      emergence.add({cell_label(infos.at(cell)), pct(xs[0]), "-", "-", "-", "insufficient", "1"});
      continue;
    }
    const auto ms = stats::mean_se(xs);
    std::string t = "-", p = "-", rej = "-";
    if (ms.se > 0) {
      const auto tt = stats::t_test(xs, 0.0, stats::Sidedness::kGreater);
      t = num(tt.t);
      p = num(tt.p, 4);
      rej = tt.reject ? "yes" : "no";
    }
    emergence.add({cell_label(infos.at(cell)), pct(ms.mean), pct(ms.se), t, p, rej,
                   std::to_string(xs.size())});
    manifest.push_back({{"table", "shortcut_emergence"}, {"cell", cell}, {"run_ids", gap_ids[cell]}});
  }
  os << emergence.render(f) << "\n";

  // Variance decomposition of block-centred increase rates.
  std::vector<const TrialMetrics*> profiled;
  for (const auto& t : trials) {
    if (t.profile) profiled.push_back(&t);
  }
  os << heading(f, "Variance explained in increase rates by factor");
  if (profiled.empty()) {
    os << "Skipped: no complete suffix-family profiles in the store.\n\n";
  } else {
    const std::size_t m = profiled.front()->m;
    for (const char* which : {"enc", "fgt"}) {
      std::vector<double> block_mean(m, 0.0);
      for (const auto* t : profiled) {
        const auto& rates = std::string(which) == "enc" ? t->profile->enc_rates : t->profile->fgt_rates;
        for (std::size_t b = 0; b < m; ++b) block_mean[b] += rates[b] / static_cast<double>(profiled.size());
      }
      stats::FactorTable table;
      table.factors = {"dataset", "skew_freq", "model", "optimizer"};
      for (const auto* t : profiled) {
        const auto& info = infos.at(t->cell);
        const auto& rates = std::string(which) == "enc" ? t->profile->enc_rates : t->profile->fgt_rates;
        for (std::size_t b = 0; b < m; ++b) {
          const std::string blk = "|b" + std::to_string(b);
          table.add_row({info.task + "/" + info.strength + blk, info.freq + blk, info.net + blk,
                         info.optimizer + blk},
                        rates[b] - block_mean[b]);
        }
      }
      Table vt({"Rate", "Dataset", "Skew freq.", "Model", "Optimizer"});
      std::vector<std::string> row{which == std::string("enc") ? "Encoding" : "Forgetting"};
      for (const auto& factor : table.factors) {
        std::set<std::string> base_levels;
        const std::size_t fi = table.factor_index(factor);
        for (const auto& lv : table.levels) base_levels.insert(lv[fi].substr(0, lv[fi].rfind("|b")));
        if (base_levels.size() < 2) {
          row.push_back("n/a");
          continue;
        }
        try {
          row.push_back(pct(stats::variance_explained(table, factor).eta_squared));
        } catch (const std::exception&) {
          row.push_back("n/a");
        }
      }
      vt.add(row);
      os << vt.render(f);
    }
    os << "\nRates are centred on the mean profile per block; each factor's levels are crossed with the block index.\n\n";
  }

  // Regression of mitigation extents on localization metrics, per kind.
  std::size_t undefined = 0;
  const auto extents = collect_extents(records, gap_floor, undefined);
  os << heading(f, "Predictive power of localization metrics");
  std::map<std::string, metrics::LocalizationProfile> mean_profiles;
  {
    std::map<std::string, std::vector<const TrialMetrics*>> per_cell;
    for (const auto* t : profiled) per_cell[t->cell].push_back(t);
    for (const auto& [cell, ts] : per_cell) {
      auto p = *ts.front()->profile;
      for (std::size_t b = 0; b < p.m; ++b) {
        double e = 0, g = 0;
        for (const auto* t : ts) {
          e += t->profile->enc_rates[b];
          g += t->profile->fgt_rates[b];
        }
        p.enc_rates[b] = e / static_cast<double>(ts.size());
        p.fgt_rates[b] = g / static_cast<double>(ts.size());
      }
      mean_profiles[cell] = p;
    }
  }
  std::set<std::string> kinds;
  for (const auto& [k, _] : extents) kinds.insert(k.kind);
  if (extents.empty() || mean_profiles.empty()) {
    os << "Skipped: needs mitigation runs and suffix-family profiles for the same cells.\n\n";
  } else {
    for (const auto& kind : kinds) {
      std::vector<iv::MitigationRow> rows;
      std::vector<std::string> ids;
      for (const auto& [k, v] : extents) {
        if (k.kind != kind || !mean_profiles.count(k.cell)) continue;
        double s = 0;
        for (double x : v.first) s += x;
        rows.push_back({k.cell, iv::TargetBlocks::parse(target_of(k.targets)),
                        s / static_cast<double>(v.first.size())});
        ids.insert(ids.end(), v.second.begin(), v.second.end());
      }
      os << (f == ReportFormat::kMarkdown ? "### " : "") << kind << "\n\n";
      try {
        const auto data = iv::build_mitigation_regression(mean_profiles, rows);
        const auto full = stats::ols_fit(data.y, data.full);
        const auto restricted = stats::ols_fit(data.y, data.restricted);
        const auto ft = stats::joint_f_test(full, restricted, data.q);
        Table rt({"Term", "Coefficient (SE)"});
        for (std::size_t j = 0; j < full.k; ++j) {
          rt.add({full.names[j], fmt_coef(full.coefficients[j], full.standard_errors[j])});
        }
        rt.add({"F-Stat", num(ft.f) + " (p=" + num(ft.p, 4) + ")"});
        rt.add({"R^2", num(full.r_squared)});
        rt.add({"N", std::to_string(full.n)});
        os << rt.render(f);
        if (!data.dropped.empty()) {
          os << "\nDropped all-zero columns:";
          for (const auto& d : data.dropped) os << " " << d;
          os << "\n";
        }
        manifest.push_back({{"table", "regression"}, {"kind", kind}, {"run_ids", ids}});
      } catch (const std::exception& e) {
        os << "Skipped: " << e.what() << "\n";
      }
      os << "\n";
    }
  }
  if (undefined) os << "Extents undefined (anchor gap below floor): " << undefined << "\n";
  return {os.str(), manifest.dump(2)};
}

Report build_report(const std::vector<RunRecord>& records, ReportFormat f, double gap_floor) {
  std::ostringstream os;
  json manifest = json::array();
  const auto infos = cell_infos(records);
  if (f == ReportFormat::kMarkdown) {
    os << "# Shortcut localization report\n\n";
  } else {
    os << "Shortcut localization report\n\n";
  }

  // Clean-test error rates of the anchors.
  os << heading(f, "Error rates on the clean test set");
  Table t1({"Dataset", "Skew freq.", "Model", "Optimizer", "Clean", "Skewed"});
  const auto anchor_aggs = aggregate(records, {"cell", "role"});
  std::map<std::string, std::map<std::string, const AggregateCell*>> by_cell;
  for (const auto& a : anchor_aggs) by_cell[a.key[0]][a.key[1]] = &a;
  std::size_t failed = 0, diverged = 0;
  for (const auto& r : records) {
    failed += r.status != "ok";
    diverged += r.status == "ok" && r.diverged;
  }
  auto fmt_agg = [](const AggregateCell* a) -> std::string {
    if (!a) return "-";
    if (a->insufficient) return a->n == 1 ? pct(a->values[0]) + " (n=1)" : "insufficient";
    return pct(a->value.mean) + " (" + pct(a->value.se) + ")";
  };
  for (const auto& [cell, roles] : by_cell) {
    const auto c = roles.count("clean_anchor") ? roles.at("clean_anchor") : nullptr;
    const auto s = roles.count("skewed_anchor") ? roles.at("skewed_anchor") : nullptr;
    if (!c && !s) continue;
    const auto& info = infos.at(cell);
    t1.add({info.task + " (" + info.strength + ")", info.freq, info.net, info.optimizer,
            fmt_agg(c), fmt_agg(s)});
    std::vector<std::string> ids;
    for (const auto* a : {c, s}) {
      if (a) ids.insert(ids.end(), a->run_ids.begin(), a->run_ids.end());
    }
    manifest.push_back({{"table", "clean_test_errors"}, {"cell", cell}, {"run_ids", ids}});
  }
  os << t1.render(f) << "\n";

  const auto trials = compute_metrics(records, gap_floor);
  bool any_intervened = false;
  for (const auto& r : records) {
    any_intervened = any_intervened || r.role == RunRole::kIntervenedC || r.role == RunRole::kIntervenedS;
  }
  if (!any_intervened) {
    os << "Localization tables skipped: the store holds no intervened models.\n\n";
  } else {
    // Per-block increase rates, Enc then Fgt rows per cell.
    std::map<std::string, std::vector<const TrialMetrics*>> profiles;
    std::map<std::string, std::size_t> profile_excluded;
    for (const auto& t : trials) {
      if (t.profile) profiles[t.cell].push_back(&t);
      if (t.profile_excluded) ++profile_excluded[t.cell];
    }
    os << heading(f, "Increase rate in relative contributions per block");
    if (profiles.empty()) {
      os << "No complete suffix family in the store.\n\n";
    } else {
      const std::size_t m = profiles.begin()->second.front()->m;
      std::vector<std::string> header{"Cell", "Metric"};
      for (std::size_t b = 0; b < m; ++b) header.push_back("Bl. " + std::to_string(b));
      Table t2(header);
      for (const auto& [cell, ts] : profiles) {
        std::vector<std::string> ids;
        for (const auto* t : ts) {
          for (const auto& v : t->run_ids) ids.insert(ids.end(), v.begin(), v.end());
        }
        for (const char* which : {"Enc", "Fgt"}) {
          std::vector<std::string> row{cell_label(infos.at(cell)), which};
          for (std::size_t b = 0; b < m; ++b) {
            std::vector<double> xs;
            for (const auto* t : ts) {
              xs.push_back(std::string(which) == "Enc" ? t->profile->enc_rates[b] : t->profile->fgt_rates[b]);
            }
            row.push_back(mean_se_pct(xs));
          }
          t2.add(row);
        }
        std::sort(ids.begin(), ids.end());
        ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
        manifest.push_back({{"table", "increase_rates"}, {"cell", cell}, {"run_ids", ids}});
      }
      os << t2.render(f) << "\n";

      // Fully-skewed-test error of clean-anchored suffix models.
      os << heading(f, "Error rates on the fully skewed test set of clean models intervened with i:m");
      std::vector<std::string> h{"Cell", "Skewed"};
      for (std::size_t i = 1; i < m; ++i) h.push_back(std::to_string(i) + ":" + std::to_string(m));
      h.push_back("Clean");
      Table ta(h);
      for (const auto& [cell, ts] : profiles) {
        std::vector<std::string> row{cell_label(infos.at(cell))};
        std::vector<std::string> ids;
        for (std::size_t i = 0; i <= m; ++i) {
          std::vector<double> xs;
          for (const auto* t : ts) {
            const RunRecord* model = nullptr;
            if (i == 0) model = t->skewed;
            if (i == m) model = t->clean;
            if (!model) {
              const auto set = InterventionSet::suffix(m, i).canonical();
              for (const auto& r : records) {
                if (r.trial_id == t->trial_id && r.role == RunRole::kIntervenedC && r.set == set) model = &r;
              }
            }
            if (model && usable(*model)) {
              xs.push_back(model->err_skewfull.value());
              ids.push_back(model->run_id);
            }
          }
          row.push_back(mean_se_pct(xs));
        }
        ta.add(row);
        manifest.push_back({{"table", "fully_skewed_suffix_errors"}, {"cell", cell}, {"run_ids", ids}});
      }
      os << ta.render(f) << "\n";
    }

    // Relative contributions of every stored intervention set.
    os << heading(f, "Relative contributions by intervention set");
    Table t3({"Cell", "Set", "Enc", "Uut", "Fgt", "Amp", "n"});
    std::map<std::pair<std::string, std::string>, std::vector<std::array<double, 4>>> rel;
    std::map<std::pair<std::string, std::string>, std::vector<std::string>> rel_ids;
    std::size_t below_floor = 0;
    for (const auto& t : trials) {
      for (std::size_t k = 0; k < t.records.size(); ++k) {
        const auto& r = t.records[k];
        if (r.A.is_empty() || r.A.is_full() || t.excluded[k]) continue;
        if (std::fabs(r.gap) < gap_floor) {
          ++below_floor;
          continue;
        }
        const auto rr = metrics::relative(r, r.gap, gap_floor);
        rel[{t.cell, r.A.describe()}].push_back({rr.enc_complement / 100.0, rr.uut / 100.0,
                                                 rr.fgt_complement / 100.0, rr.amp / 100.0});
        auto& ids = rel_ids[{t.cell, r.A.describe()}];
        ids.insert(ids.end(), t.run_ids[k].begin(), t.run_ids[k].end());
      }
    }
    for (const auto& [key, vs] : rel) {
      std::vector<std::string> row{cell_label(infos.at(key.first)), key.second};
      for (std::size_t j = 0; j < 4; ++j) {
        std::vector<double> xs;
        for (const auto& v : vs) xs.push_back(v[j]);
        row.push_back(mean_se_pct(xs));
      }
      row.push_back(std::to_string(vs.size()));
      t3.add(row);
      manifest.push_back({{"table", "relative_contributions"}, {"cell", key.first},
                          {"set", key.second}, {"run_ids", rel_ids[key]}});
    }
    os << t3.render(f);
    if (below_floor) {
      os << "\nRecords with |gap| below the floor (reported in absolute units only): " << below_floor << "\n";
    }
    os << "\n";
  }

  // Mitigation extents.
  std::size_t undefined = 0;
  const auto extents = collect_extents(records, gap_floor, undefined);
  if (!extents.empty()) {
    os << heading(f, "Extent of shortcut mitigation");
    Table tm({"Cell", "Intervention", "Targets", "Extent", "n"});
    for (const auto& [k, v] : extents) {
      std::string cellv = "-";
      if (v.first.size() >= 2) {
        const auto ms = stats::mean_se(v.first);
        cellv = num(ms.mean, 3) + " (" + num(ms.se, 3) + ")";
      } else {
        cellv = num(v.first[0], 3) + " (n=1)";
      }
      tm.add({cell_label(infos.at(k.cell)), k.kind, k.targets, cellv, std::to_string(v.first.size())});
      manifest.push_back({{"table", "mitigation"}, {"cell", k.cell}, {"intervention", k.kind},
                          {"targets", k.targets}, {"run_ids", v.second}});
    }
    os << tm.render(f) << "\n";
  }

  os << "Excluded from aggregation: " << diverged << " diverged model(s), " << failed
     << " failed run(s)";
  if (undefined) os << ", " << undefined << " mitigation extent(s) undefined below the gap floor";
  os << ". Cells with fewer than 2 surviving seeds are marked insufficient.\n";
  return {os.str(), manifest.dump(2)};
}

}  // namespace sscope::expcli
