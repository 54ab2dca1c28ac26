#pragma once

// Pure transformations of the results store: aggregation over seeds,
// contribution metrics, statistics and the report.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "sscope/expcli/store.hpp"
#include "sscope/metrics.hpp"
#include "sscope/stats.hpp"

namespace sscope::expcli {

/// Block count of a net preset name.
std::size_t block_count_for(const std::string& net);

/// Value of a named CSV column of a record (as written to the store).
std::string column_value(const RunRecord& r, const std::string& column);

struct AggregateCell {
  std::vector<std::string> key;  // grouping column values
  std::size_t n = 0;             // surviving seeds
  std::size_t excluded_diverged = 0;
  std::size_t excluded_failed = 0;
  bool insufficient = false;  // fewer than 2 surviving seeds
  stats::MeanSE value;        // valid unless insufficient
  std::vector<double> values;
  std::vector<std::string> run_ids;
};

/// Groups records by `grouping` columns and averages `value_column`
/// ("err_clean" or "err_skewfull") over seeds. Diverged and failed runs
/// are dropped and counted. Output sorted by key.
std::vector<AggregateCell> aggregate(const std::vector<RunRecord>& records,
                                     const std::vector<std::string>& grouping,
                                     const std::string& value_column = "err_clean");

struct TrialMetrics {
  std::string cell;
  std::string trial_id;
  std::uint64_t seed = 0;
  std::size_t m = 0;
  const RunRecord* clean = nullptr;
  const RunRecord* skewed = nullptr;
  std::vector<metrics::ContributionRecord> records;  // one per set, anchors' degenerate sets included
  std::vector<bool> excluded;                         // any involved model diverged
  std::vector<std::vector<std::string>> run_ids;
  std::optional<metrics::LocalizationProfile> profile;  // complete, non-diverged suffix family
  bool profile_excluded = false;
};

std::vector<TrialMetrics> compute_metrics(const std::vector<RunRecord>& records,
                                          double gap_floor = metrics::kDefaultGapFloor);

/// contributions.csv and profiles.csv (both tagged #sscsv1).
void write_metrics(const std::vector<TrialMetrics>& trials, const std::filesystem::path& dir);

enum class ReportFormat { kMarkdown, kPlain };

struct Report {
  std::string text;
  std::string manifest_json;  // numbers -> run_ids
};

Report build_stats(const std::vector<RunRecord>& records, ReportFormat format,
                   double gap_floor = metrics::kDefaultGapFloor);
Report build_report(const std::vector<RunRecord>& records, ReportFormat format,
                    double gap_floor = metrics::kDefaultGapFloor);

}  // namespace sscope::expcli
