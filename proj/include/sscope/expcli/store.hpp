#pragma once

// Results store: an append-only CSV file whose first line is the schema tag
// "#sscsv1" and whose second line is the column header. Error rates are
// stored as exact "k/n" pairs.

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <vector>

#include "sscope/metrics.hpp"

namespace sscope::expcli {

inline constexpr const char* kSchemaTag = "#sscsv1";

enum class RunRole { kCleanAnchor, kSkewedAnchor, kIntervenedC, kIntervenedS, kMitigation };

std::string role_name(RunRole role);
RunRole parse_role(const std::string& text);

struct RunRecord {
  std::string run_id;
  std::string trial_id;
  std::string cell;
  std::string task;
  std::string skew_strength;
  std::string skew_frequency;
  std::string net;
  std::string optimizer;
  std::string mode;
  std::size_t steps = 0;
  std::size_t batch_size = 0;
  int precision = 32;
  std::uint64_t seed = 0;
  RunRole role = RunRole::kCleanAnchor;
  std::string set;           // canonical A, "{}" for anchors
  std::string intervention;  // mitigation kind, "-" otherwise
  std::string targets;       // mitigation targets, "-" otherwise
  metrics::ErrorRate err_clean;
  metrics::ErrorRate err_skewfull;
  bool diverged = false;
  std::string status = "ok";  // ok | failed
  double wall_time = 0.0;
};

const std::vector<std::string>& csv_columns();
std::vector<std::string> to_fields(const RunRecord& r);
RunRecord from_fields(const std::vector<std::string>& fields);

/// Minimal RFC 4180 quoting.
std::string csv_join(const std::vector<std::string>& fields);
std::vector<std::string> csv_split(const std::string& line);

/// Reads every record; throws FormatError on a schema mismatch.
std::vector<RunRecord> read_store(const std::filesystem::path& path);

/// Serialized appends to one CSV file (and its JSONL manifest).
class StoreWriter {
 public:
  StoreWriter(std::filesystem::path csv, std::filesystem::path manifest);

  bool contains(const std::string& run_id) const;
  /// Appends records whose run_id is new; returns how many were written.
  std::size_t append(const std::vector<RunRecord>& records,
                     const std::vector<std::string>& manifest_lines);

 private:
  std::filesystem::path csv_;
  std::filesystem::path manifest_;
  std::set<std::string> known_;
  mutable std::mutex mu_;
};

}  // namespace sscope::expcli
