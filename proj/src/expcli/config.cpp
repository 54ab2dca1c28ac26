#include "sscope/expcli/config.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "sscope/error.hpp"
#include "sscope/optim.hpp"

namespace sscope::expcli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto pos = s.find(sep, start);
    const auto item = trim(s.substr(start, pos == std::string_view::npos ? pos : pos - start));
    if (!item.empty()) out.push_back(item);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

class Reader {
 public:
  explicit Reader(const KeyValues& kv) : kv_(kv) {}

  bool has(const std::string& key) {
    used_.insert(key);
    return kv_.values.count(key) != 0;
  }
  const std::string& raw(const std::string& key) { return kv_.values.at(key); }

  [[noreturn]] void fail(const std::string& key, const std::string& why) {
    throw ConfigError("line " + std::to_string(kv_.lines.at(key)) + ": " + key + ": " + why);
  }

  void str(const std::string& key, std::string& out) {
    if (has(key)) out = raw(key);
  }

  void list(const std::string& key, std::vector<std::string>& out) {
    if (!has(key)) return;
    out = split_list(raw(key), ',');
    if (out.empty()) fail(key, "empty list");
  }

  template <typename U>
  void integer(const std::string& key, U& out) {
    if (!has(key)) return;
    out = parse_uint<U>(key, raw(key));
  }

  void real(const std::string& key, double& out) {
    if (!has(key)) return;
    try {
      std::size_t used = 0;
      out = std::stod(raw(key), &used);
      if (used != raw(key).size()) throw std::invalid_argument("");
    } catch (const std::exception&) {
      fail(key, "expected a number, got '" + raw(key) + "'");
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (v == "true" || v == "1" || v == "yes") {
      out = true;
    } else if (v == "false" || v == "0" || v == "no") {
      out = false;
    } else {
      fail(key, "expected true or false");
    }
  }

  template <typename U>
  U parse_uint(const std::string& key, const std::string& text) {
    U v{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc{} || ptr != text.data() + text.size()) {
      fail(key, "expected a non-negative integer, got '" + text + "'");
    }
    return v;
  }

  void reject_unknown() {
    for (const auto& [key, _] : kv_.values) {
      if (!used_.count(key)) fail(key, "unknown key");
    }
  }

 private:
  const KeyValues& kv_;
  std::set<std::string> used_;
};

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues kv;
  std::size_t line_no = 0, start = 0;
  while (start <= text.size()) {
    const auto nl = text.find('\n', start);
    std::string_view line =
        text.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
    ++line_no;
    start = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    const std::string content = trim(line);
    if (content.empty()) continue;
    const auto eq = content.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(std::string_view(content).substr(0, eq));
    const std::string value = trim(std::string_view(content).substr(eq + 1));
    if (key.empty() || !std::all_of(key.begin(), key.end(), [](char c) {
          return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
        })) {
      throw ConfigError("line " + std::to_string(line_no) + ": malformed key '" + key + "'");
    }
    if (kv.values.count(key)) {
      throw ConfigError("line " + std::to_string(line_no) + ": repeated key '" + key + "'");
    }
    kv.values[key] = value;
    kv.lines[key] = line_no;
  }
  return kv;
}

ExperimentConfig parse_config(std::string_view text) {
  const auto kv = parse_key_values(text);
  Reader r(kv);
  ExperimentConfig c;
  r.str("task", c.task);
  r.list("skew_strength", c.skew_strengths);
  r.list("skew_frequency", c.skew_frequencies);
  r.list("optimizer", c.optimizers);
  r.str("net", c.net);
  r.integer("width", c.width);
  r.integer("image_size", c.image_size);
  r.integer("channels", c.channels);
  r.integer("classes", c.classes);
  r.integer("attributes", c.attributes);
  r.real("noise", c.noise);
  r.integer("train_size", c.train_size);
  r.integer("test_size", c.test_size);
  r.str("data", c.data);
  r.str("mode", c.mode);
  r.str("checkpoint", c.checkpoint);
  r.integer("pretrain_steps", c.pretrain_steps);
  r.str("family", c.family);
  if (r.has("sets")) c.sets = split_list(r.raw("sets"), ';');
  if (r.has("seeds")) {
    c.seeds.clear();
    for (const auto& s : split_list(r.raw("seeds"), ',')) {
      c.seeds.push_back(r.parse_uint<std::uint64_t>("seeds", s));
    }
  }
  r.integer("master_seed", c.master_seed);
  r.integer("steps", c.steps);
  r.integer("batch_size", c.batch_size);
  r.real("min_lr_ratio", c.min_lr_ratio);
  r.integer("precision", c.precision);
  r.str("mask_mode", c.mask_mode);
  r.list("interventions", c.interventions);
  r.str("targets", c.targets);
  r.real("freeze_phase1", c.freeze_phase1);
  r.real("freeze_phase2", c.freeze_phase2);
  r.real("gap_floor", c.gap_floor);
  r.integer("workers", c.workers);
  if (r.has("out")) c.out = r.raw("out");
  r.boolean("debug_sync", c.debug_sync);
  r.reject_unknown();
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config " + path.string());
  std::ostringstream os;
  os << is.rdbuf();
  try {
    return parse_config(os.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void ExperimentConfig::validate() const {
  auto bad = [](const std::string& key, const std::string& why) {
    throw ConfigError(key + ": " + why);
  };
  if (task != "watermark" && task != "sampling") bad("task", "unknown task preset '" + task + "'");
  if (task == "watermark") {
    for (const auto& s : skew_strengths) (void)watermark_spec(s);
  }
  for (const auto& f : skew_frequencies) (void)skew::Fraction::parse(f);
  for (const auto& o : optimizers) (void)optim::preset(o);
  if (net != "minicnn6" && net != "mlp4") bad("net", "unknown net preset '" + net + "'");
  if (width == 0) bad("width", "must be > 0");
  if (image_size != 16 && image_size != 32) bad("image_size", "must be 16 or 32");
  if (channels < 1 || channels > 3) bad("channels", "must be 1..3");
  if (classes < 2 || classes > 10) bad("classes", "must be 2..10");
  if (task == "sampling" && attributes < 2) bad("attributes", "sampling skew needs >= 2 groups");
  if (train_size == 0 || test_size == 0) bad("train_size", "dataset sizes must be > 0");
  if (mode != "scratch" && mode != "warmstart") bad("mode", "must be scratch or warmstart");
  if (family != "single" && family != "suffix" && family != "explicit") {
    bad("family", "must be single, suffix or explicit");
  }
  if (family == "explicit" && sets.empty()) bad("sets", "explicit family needs sets");
  if (seeds.empty()) bad("seeds", "at least one seed is required");
  if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size()) {
    bad("seeds", "seeds must be distinct");
  }
  if (steps == 0) bad("steps", "must be > 0");
  if (batch_size == 0 || batch_size > train_size) bad("batch_size", "must be in [1, train_size]");
  if (!(min_lr_ratio > 0.0 && min_lr_ratio <= 1.0)) bad("min_lr_ratio", "must be in (0, 1]");
  if (precision != 32 && precision != 64) bad("precision", "must be 32 or 64");
  if (mask_mode != "iid" && mask_mode != "exact") bad("mask_mode", "must be iid or exact");
  for (const auto& k : interventions) (void)iv::InterventionKind::parse(k);
  if (targets != "single" && targets != "all") bad("targets", "must be single or all");
  if (!(freeze_phase1 >= 0.0 && freeze_phase2 >= 0.0 && freeze_phase1 + freeze_phase2 <= 1.0)) {
    bad("freeze_phase1", "phase shares must be >= 0 and sum to at most 1");
  }
  if (!(gap_floor >= 0.0)) bad("gap_floor", "must be >= 0");
  if (workers == 0) bad("workers", "must be >= 1");
  const auto m = net_for(*this).blocks.size();
  (void)family_sets(*this, m);
}

skew::WatermarkSkewSpec watermark_spec(const std::string& strength) {
  if (strength == "strong") return skew::WatermarkSkewSpec::strong();
  if (strength == "weak") return skew::WatermarkSkewSpec::weak();
  skew::WatermarkSkewSpec s;
  try {
    std::size_t used = 0;
    s.alpha = std::stod(strength, &used);
    if (used != strength.size()) throw std::invalid_argument("");
  } catch (const std::exception&) {
    throw ConfigError("skew_strength: unknown strength '" + strength + "'");
  }
  if (!(s.alpha > 0.0 && s.alpha <= 1.0)) throw ConfigError("skew_strength: alpha outside (0, 1]");
  return s;
}

net::NetSpec net_for(const ExperimentConfig& c) {
  if (c.net == "mlp4") return net::mlp4(c.channels * c.image_size * c.image_size, c.classes);
  return net::minicnn6(c.channels, c.image_size, c.classes, c.width);
}

std::vector<InterventionSet> family_sets(const ExperimentConfig& c, std::size_t m) {
  std::vector<InterventionSet> sets;
  if (c.family == "single") {
    for (std::size_t i = 0; i < m; ++i) sets.push_back(InterventionSet::single_complement(m, i));
  } else if (c.family == "suffix") {
    // 0:m and m:m coincide with the anchors and are derived from them.
    for (std::size_t i = 1; i < m; ++i) sets.push_back(InterventionSet::suffix(m, i));
  } else {
    for (const auto& text : c.sets) {
      try {
        sets.push_back(InterventionSet::parse(m, text));
      } catch (const std::exception& e) {
        throw ConfigError("sets: " + std::string(e.what()));
      }
    }
  }
  return sets;
}

std::vector<Cell> expand_grid(const ExperimentConfig& c) {
  std::vector<Cell> cells;
  const std::vector<std::string> strengths =
      c.task == "watermark" ? c.skew_strengths : std::vector<std::string>{"sampling"};
  for (const auto& strength : strengths) {
    for (const auto& freq : c.skew_frequencies) {
      for (const auto& opt : c.optimizers) {
        std::map<std::string, std::string> fields{
            {"task", c.task},
            {"skew_strength", strength},
            {"skew_frequency", skew::Fraction::parse(freq).to_string()},
            {"optimizer", opt},
            {"net", c.net},
            {"width", std::to_string(c.width)},
            {"image_size", std::to_string(c.image_size)},
            {"channels", std::to_string(c.channels)},
            {"classes", std::to_string(c.classes)},
            {"attributes", std::to_string(c.attributes)},
            {"noise", std::to_string(c.noise)},
            {"train_size", std::to_string(c.train_size)},
            {"test_size", std::to_string(c.test_size)},
            {"data", c.data},
            {"mode", c.mode},
            {"checkpoint", c.checkpoint},
            {"pretrain_steps", std::to_string(c.pretrain_steps)},
            {"master_seed", std::to_string(c.master_seed)},
            {"steps", std::to_string(c.steps)},
            {"batch_size", std::to_string(c.batch_size)},
            {"min_lr_ratio", std::to_string(c.min_lr_ratio)},
            {"precision", std::to_string(c.precision)},
            {"mask_mode", c.mask_mode},
        };
        Cell cell{strength, freq, opt, "", ""};
        for (const auto& [k, v] : fields) cell.key += k + "=" + v + "\n";
        cell.id = sha256_hex(cell.key).substr(0, 12);
        cells.push_back(std::move(cell));
      }
    }
  }
  return cells;
}

std::string sha256_hex(std::string_view text) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(text.data(), text.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("SHA-256 failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 15]);
  }
  return out;
}

}  // namespace sscope::expcli
