#pragma once

// Experiment configuration.
//
// Grammar (one setting per line):
//
//   # comment            blank lines and text after '#' are ignored
//   key = value          keys are [a-z0-9_]+, values are trimmed
//   key = a, b, c        list-valued keys take comma-separated items
//
// Keys marked "grid" below may hold several values; the experiment grid is
// their cartesian product. Unknown or repeated keys are errors.
//
//   task              watermark | sampling                       (watermark)
//   skew_strength     grid: strong | weak | <alpha>             (strong)
//   skew_frequency    grid: common | rare | <a/b>               (common)
//   optimizer         grid: sgd | sgd-scratch | adamw | adamw-scratch  (adamw-scratch)
//   net               minicnn6 | mlp4                            (minicnn6)
//   width             channel width of minicnn6                  (8)
//   image_size        16 | 32                                    (32)
//   channels          1..3                                       (3)
//   classes           2..10                                      (10)
//   attributes        group count for sampling skew             (2)
//   noise             background noise amplitude                 (0.1)
//   train_size, test_size                                        (4096, 2048)
//   data              synthetic | <dir with SSD1 files>          (synthetic)
//   mode              scratch | warmstart                        (scratch)
//   checkpoint        SSC1 file for warmstart (else pretrained on a related task)
//   pretrain_steps    steps of that pretraining run              (= steps)
//   family            single | suffix | explicit                 (suffix)
//   sets              explicit sets, e.g. {1,2}; {3}
//   seeds             list of trial seeds                        (1, 2, 3, 4, 5)
//   master_seed                                                  (20240521)
//   steps, batch_size                                            (1000, 32)
//   min_lr_ratio      min_lr / peak_lr                           (0.001)
//   precision         32 | 64                                    (32)
//   mask_mode         iid | exact                                (iid)
//   interventions     list of lr_up, lr_down, wd_up, wd_down, freeze
//   targets           single | all  (all adds consecutive pairs) (all)
//   freeze_phase1, freeze_phase2   shares of the schedule        (0.05, 0.05)
//   gap_floor                                                    (0.005)
//   workers                                                      (1)
//   out                                                          (results)
//   debug_sync        true | false                               (false)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sscope/interventions.hpp"
#include "sscope/skew.hpp"

namespace sscope::expcli {

/// Ordered key/value pairs with the source line of each key.
struct KeyValues {
  std::map<std::string, std::string> values;
  std::map<std::string, std::size_t> lines;
};

KeyValues parse_key_values(std::string_view text);

struct ExperimentConfig {
  std::string task = "watermark";
  std::vector<std::string> skew_strengths{"strong"};
  std::vector<std::string> skew_frequencies{"common"};
  std::vector<std::string> optimizers{"adamw-scratch"};
  std::string net = "minicnn6";
  std::size_t width = 8;
  std::size_t image_size = 32;
  std::size_t channels = 3;
  std::size_t classes = 10;
  std::uint16_t attributes = 2;
  double noise = 0.1;
  std::size_t train_size = 4096;
  std::size_t test_size = 2048;
  std::string data = "synthetic";
  std::string mode = "scratch";
  std::string checkpoint;
  std::size_t pretrain_steps = 0;  // 0 = same as steps
  std::string family = "suffix";
  std::vector<std::string> sets;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::uint64_t master_seed = 20240521;
  std::size_t steps = 1000;
  std::size_t batch_size = 32;
  double min_lr_ratio = 1e-3;
  int precision = 32;
  std::string mask_mode = "iid";
  std::vector<std::string> interventions{"lr_up", "lr_down", "wd_up", "wd_down", "freeze"};
  std::string targets = "all";
  double freeze_phase1 = 0.05;
  double freeze_phase2 = 0.05;
  double gap_floor = metrics::kDefaultGapFloor;
  std::size_t workers = 1;
  std::filesystem::path out = "results";
  bool debug_sync = false;

  /// Throws ConfigError naming the offending key.
  void validate() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path& path);

/// One grid cell: the config with every grid key fixed to a single value.
struct Cell {
  std::string skew_strength;
  std::string skew_frequency;
  std::string optimizer;
  /// Sorted key=value text of everything that determines the cell's runs.
  std::string key;
  /// Short stable identifier derived from `key`.
  std::string id;
};

std::vector<Cell> expand_grid(const ExperimentConfig& config);

skew::WatermarkSkewSpec watermark_spec(const std::string& strength);
net::NetSpec net_for(const ExperimentConfig& config);
std::vector<InterventionSet> family_sets(const ExperimentConfig& config, std::size_t m);

/// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view text);

}  // namespace sscope::expcli
