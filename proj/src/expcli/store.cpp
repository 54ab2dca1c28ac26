#include "sscope/expcli/store.hpp"

#include <fstream>
#include <sstream>

#include "sscope/error.hpp"

namespace sscope::expcli {

std::string role_name(RunRole role) {
  switch (role) {
    case RunRole::kCleanAnchor:
      return "clean_anchor";
    case RunRole::kSkewedAnchor:
      return "skewed_anchor";
    case RunRole::kIntervenedC:
      return "intervened_c";
    case RunRole::kIntervenedS:
      return "intervened_s";
    case RunRole::kMitigation:
      return "mitigation";
  }
  return "?";
}

RunRole parse_role(const std::string& text) {
  for (auto r : {RunRole::kCleanAnchor, RunRole::kSkewedAnchor, RunRole::kIntervenedC,
                 RunRole::kIntervenedS, RunRole::kMitigation}) {
    if (role_name(r) == text) return r;
  }
  throw FormatError("unknown run role '" + text + "'");
}

const std::vector<std::string>& csv_columns() {
  static const std::vector<std::string> cols{
      "run_id",    "trial_id",   "cell",      "task",     "skew_strength", "skew_frequency",
      "net",       "optimizer",  "mode",      "steps",    "batch_size",    "precision",
      "seed",      "role",       "set",       "intervention", "targets",   "err_clean",
      "err_skewfull", "diverged", "status",   "wall_time"};
  return cols;
}

std::vector<std::string> to_fields(const RunRecord& r) {
  std::ostringstream wt;
  wt.precision(4);
  wt << std::fixed << r.wall_time;
  return {r.run_id,
          r.trial_id,
          r.cell,
          r.task,
          r.skew_strength,
          r.skew_frequency,
          r.net,
          r.optimizer,
          r.mode,
          std::to_string(r.steps),
          std::to_string(r.batch_size),
          std::to_string(r.precision),
          std::to_string(r.seed),
          role_name(r.role),
          r.set,
          r.intervention,
          r.targets,
          r.err_clean.to_string(),
          r.err_skewfull.to_string(),
          r.diverged ? "1" : "0",
          r.status,
          wt.str()};
}

RunRecord from_fields(const std::vector<std::string>& f) {
  if (f.size() != csv_columns().size()) {
    throw FormatError("results row has " + std::to_string(f.size()) + " fields, expected " +
                      std::to_string(csv_columns().size()));
  }
  RunRecord r;
  try {
    r.run_id = f[0];
    r.trial_id = f[1];
    r.cell = f[2];
    r.task = f[3];
    r.skew_strength = f[4];
    r.skew_frequency = f[5];
    r.net = f[6];
    r.optimizer = f[7];
    r.mode = f[8];
    r.steps = std::stoull(f[9]);
    r.batch_size = std::stoull(f[10]);
    r.precision = std::stoi(f[11]);
    r.seed = std::stoull(f[12]);
    r.role = parse_role(f[13]);
    r.set = f[14];
    r.intervention = f[15];
    r.targets = f[16];
    r.err_clean = metrics::ErrorRate::parse(f[17]);
    r.err_skewfull = metrics::ErrorRate::parse(f[18]);
    r.diverged = f[19] == "1";
    r.status = f[20];
    r.wall_time = std::stod(f[21]);
  } catch (const FormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw FormatError(std::string("malformed results row: ") + e.what());
  }
  return r;
}

std::string csv_join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out.push_back(',');
    const auto& f = fields[i];
    if (f.find_first_of(",\"\n") == std::string::npos) {
      out += f;
      continue;
    }
    out.push_back('"');
    for (char c : f) {
      if (c == '"') out.push_back('"');
      out.push_back(c);
    }
    out.push_back('"');
  }
  return out;
}

std::vector<std::string> csv_split(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back().push_back('"');
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        out.back().push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back().push_back(c);
    }
  }
  if (quoted) throw FormatError("unterminated quote in CSV line");
  return out;
}

std::vector<RunRecord> read_store(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open results store " + path.string());
  std::string line;
  if (!std::getline(is, line) || line != kSchemaTag) {
    throw FormatError(path.string() + ": results-store schema mismatch (expected " +
                      std::string(kSchemaTag) + " tag)");
  }
  if (!std::getline(is, line) || csv_split(line) != csv_columns()) {
    throw FormatError(path.string() + ": results-store schema mismatch (header differs)");
  }
  std::vector<RunRecord> out;
  std::size_t line_no = 2;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(from_fields(csv_split(line)));
    } catch (const FormatError& e) {
      throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

StoreWriter::StoreWriter(std::filesystem::path csv, std::filesystem::path manifest)
    : csv_(std::move(csv)), manifest_(std::move(manifest)) {
  if (std::filesystem::exists(csv_)) {
    for (const auto& r : read_store(csv_)) known_.insert(r.run_id);
  } else {
    if (csv_.has_parent_path()) std::filesystem::create_directories(csv_.parent_path());
    std::ofstream os(csv_);
    if (!os) throw std::runtime_error("cannot create results store " + csv_.string());
    os << kSchemaTag << "\n" << csv_join(csv_columns()) << "\n";
  }
}

bool StoreWriter::contains(const std::string& run_id) const {
  std::lock_guard lock(mu_);
  return known_.count(run_id) != 0;
}

std::size_t StoreWriter::append(const std::vector<RunRecord>& records,
                                const std::vector<std::string>& manifest_lines) {
  std::lock_guard lock(mu_);
  std::ofstream os(csv_, std::ios::app);
  std::ofstream ms(manifest_, std::ios::app);
  if (!os || !ms) throw std::runtime_error("cannot append to " + csv_.string());
  std::size_t written = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (known_.count(records[i].run_id)) continue;
    os << csv_join(to_fields(records[i])) << "\n";
    if (i < manifest_lines.size()) ms << manifest_lines[i] << "\n";
    known_.insert(records[i].run_id);
    ++written;
  }
  os.flush();
  ms.flush();
  if (!os || !ms) throw std::runtime_error("failed writing " + csv_.string());
  return written;
}

}  // namespace sscope::expcli
