#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sscope/counterfact.hpp"
#include "sscope/expcli/config.hpp"
#include "sscope/expcli/store.hpp"

namespace sscope::expcli {

struct CellData {
  skew::PairedDataset train;
  skew::Dataset test_clean;
  skew::Dataset test_fully_skewed;
};

/// Training and test views for a cell; deterministic in master_seed.
CellData build_cell_data(const ExperimentConfig& config, const Cell& cell);

/// Writes train/test SSD1 files for every cell into `dir`.
std::vector<std::filesystem::path> gen_data(const ExperimentConfig& config,
                                            const std::filesystem::path& dir);

/// Identifies (cell, seed); every model of a trial shares its seed.
std::string trial_id(const Cell& cell, std::uint64_t seed);
/// split(master_seed, trial_id): adding cells never perturbs existing ones.
std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& trial_id);

/// Content hash of the cell config, seed, role, set and intervention.
std::string run_id(const Cell& cell, std::uint64_t seed, RunRole role, const std::string& set,
                   const std::string& intervention = "-", const std::string& targets = "-");

cf::TrainPlan plan_for(const ExperimentConfig& config, const Cell& cell, std::uint64_t seed,
                       cf::Role anchor_role,
                       std::shared_ptr<const net::ParamStore<float>> warm = nullptr);

/// Loads or trains (and caches under config.out) the warm-start weights;
/// null in scratch mode.
std::shared_ptr<const net::ParamStore<float>> warm_start(const ExperimentConfig& config,
                                                         const Cell& cell, std::ostream& log);

struct RunSummary {
  std::size_t trials_run = 0;
  std::size_t trials_skipped = 0;
  std::size_t records_written = 0;
  std::size_t trials_failed = 0;
};

std::filesystem::path store_path(const ExperimentConfig& config);
std::filesystem::path manifest_path(const ExperimentConfig& config);

/// Runs train_family for every (cell, seed) whose records are not yet
/// stored and appends anchors and intervened models to the store.
RunSummary run_counterfactual(const ExperimentConfig& config, std::ostream& log);

/// Runs every configured mitigation kind on every target, appending
/// "mitigation" records (and anchors when the store lacks them).
RunSummary run_interventions(const ExperimentConfig& config, std::ostream& log);

/// Trains one network on one data role of the first cell and writes an
/// SSC1 checkpoint.
void train_one(const ExperimentConfig& config, cf::Role role, std::uint64_t seed,
               const std::filesystem::path& checkpoint, std::ostream& log);

}  // namespace sscope::expcli
