#pragma once

// Layer-wise mitigation: retraining on skewed data with the learning rate or
// weight decay of target blocks rescaled for the whole schedule, and the
// freezing protocol (last block only, then all blocks, then one target).
// The extent of mitigation is the recovered share of the clean/skewed
// accuracy gap on the clean test set.

#include <cstddef>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "sscope/counterfact.hpp"
#include "sscope/metrics.hpp"
#include "sscope/stats.hpp"

namespace sscope::iv {

struct InterventionKind {
  enum class Tag { kLrScale, kWdScale, kFreeze };
  Tag tag = Tag::kLrScale;
  double factor = 1.0;

  static InterventionKind lr_up() { return {Tag::kLrScale, 3.0}; }
  static InterventionKind lr_down() { return {Tag::kLrScale, 1.0 / 3.0}; }
  static InterventionKind wd_up() { return {Tag::kWdScale, 10.0}; }
  static InterventionKind wd_down() { return {Tag::kWdScale, 0.1}; }
  static InterventionKind freeze() { return {Tag::kFreeze, 1.0}; }
  static std::vector<InterventionKind> all() {
    return {lr_up(), lr_down(), wd_up(), wd_down(), freeze()};
  }

  /// "lr_up", "lr_down", "wd_up", "wd_down", "freeze", or "lr*F" / "wd*F".
  static InterventionKind parse(std::string_view text);
  std::string name() const;
};

/// One block or two consecutive blocks.
struct TargetBlocks {
  std::size_t first = 0;
  std::size_t count = 1;

  static TargetBlocks single(std::size_t i) { return {i, 1}; }
  static TargetBlocks pair(std::size_t i) { return {i, 2}; }
  /// "3" or "3-4".
  static TargetBlocks parse(std::string_view text);

  void validate(std::size_t m) const;
  bool is_double() const noexcept { return count == 2; }
  bool contains(std::size_t b) const noexcept { return b >= first && b < first + count; }
  InterventionSet as_set(std::size_t m) const;
  std::string to_string() const;
  /// Every single block and every consecutive pair of an m-block network.
  static std::vector<TargetBlocks> enumerate(std::size_t m, bool include_pairs);
};

struct MitigationResult {
  metrics::ErrorRate err_intervened;
  double acc_intervened = 0.0;
  double acc_clean_anchor = 0.0;
  double acc_skewed_anchor = 0.0;
  double extent = 0.0;
  bool extent_defined = false;  // false when the anchor gap is below gap_floor
  std::string provenance;
};

/// (acc_int - acc_s) / (acc_c - acc_s); NaN and undefined below gap_floor.
MitigationResult mitigation_extent(const metrics::ErrorRate& err_intervened,
                                   const metrics::ErrorRate& err_clean_anchor,
                                   const metrics::ErrorRate& err_skewed_anchor,
                                   double gap_floor = metrics::kDefaultGapFloor);

/// Anchors' clean-test error rates and the clean test view.
struct MitigationContext {
  metrics::ErrorRate err_clean_anchor;
  metrics::ErrorRate err_skewed_anchor;
  net::DataView clean_test;
  double gap_floor = metrics::kDefaultGapFloor;
};

template <typename T>
struct MitigationRun {
  MitigationResult result;
  net::BlockNet<T> model;
};

struct FreezeConfig {
  double phase1_share = 0.05;  // last block only
  double phase2_share = 0.05;  // all blocks
  /// Explicit phase lengths override the shares when set.
  std::optional<std::size_t> phase1_steps;
  std::optional<std::size_t> phase2_steps;

  /// (T1, T2) for a schedule of T steps; throws ConfigError when T1 + T2 > T
  /// or both are zero.
  std::pair<std::size_t, std::size_t> phases(std::size_t total_steps) const;
};

template <typename T>
using Observer = std::function<void(std::size_t, const net::BlockNet<T>&)>;

/// Skewed-role training with the target blocks' LR or WD scaled for the full
/// schedule. Freeze kinds are routed to freeze_protocol.
template <typename T>
MitigationRun<T> retrain_with_intervention(const net::NetSpec& spec,
                                           const skew::PairedDataset& pd,
                                           const cf::TrainPlan& plan_skewed,
                                           const InterventionKind& kind,
                                           const TargetBlocks& targets,
                                           const MitigationContext& context,
                                           const FreezeConfig& freeze = {},
                                           const Observer<T>& observe = {});

template <typename T>
MitigationRun<T> freeze_protocol(const net::NetSpec& spec, const skew::PairedDataset& pd,
                                 const cf::TrainPlan& plan, const TargetBlocks& keep,
                                 const MitigationContext& context,
                                 const FreezeConfig& freeze = {},
                                 const Observer<T>& observe = {});

struct MitigationRow {
  std::string setting;  // key into the profile map
  TargetBlocks target;
  double extent = 0.0;
};

struct RegressionData {
  stats::Design full;        // metric columns, dummies, Const
  stats::Design restricted;  // dummies and Const only
  std::vector<double> y;
  std::vector<std::string> dropped;  // dummy columns removed for being all zero
  std::size_t q = 5;
};

/// Columns Enc, Fgt, Enc x Fgt, Enc^2, Fgt^2, First, Last, Double, Const.
/// Enc and Fgt are the target's per-block increase rates (summed over a
/// pair). Dummies that are zero in every row are dropped.
RegressionData build_mitigation_regression(
    const std::map<std::string, metrics::LocalizationProfile>& profiles,
    const std::vector<MitigationRow>& rows);

}  // namespace sscope::iv
