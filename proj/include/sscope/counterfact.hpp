#pragma once

// Lockstep counterfactual training.
//
// An anchor network trains on its own data role. The intervened network
// starts from the same weights, sees the same batch indices, but takes its
// gradient on the other role's batch and updates only the blocks in A. After
// each step every block outside A is overwritten with the anchor's value.
// The intervened optimizer holds state for blocks in A only.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>
#include <vector>

#include "sscope/intervention_set.hpp"
#include "sscope/net.hpp"
#include "sscope/optim.hpp"
#include "sscope/skew.hpp"

namespace sscope::cf {

enum class Role { kClean, kSkewed };

std::string_view role_name(Role r) noexcept;
inline Role opposite(Role r) noexcept { return r == Role::kClean ? Role::kSkewed : Role::kClean; }

struct TrainPlan {
  Role anchor_role = Role::kClean;
  std::size_t steps = 1;
  std::size_t batch_size = 32;
  std::uint64_t master_seed = 0;
  optim::OptimizerConfig optimizer{};
  double warmup_share = 0.05;
  double min_lr = 1e-6;
  /// Warm start; when null the network is initialized from master_seed.
  std::shared_ptr<const net::ParamStore<float>> init;

  void validate() const;
  optim::ScheduleConfig schedule() const { return {steps, warmup_share, min_lr}; }
  std::uint64_t init_seed() const noexcept;
  std::uint64_t shuffle_key() const noexcept;
  TrainPlan mirrored() const;
};

enum class SyncMode {
  kRestricted,  // update blocks A only
  kLiteral,     // update all blocks, then overwrite the shared ones
};

struct PairOptions {
  SyncMode mode = SyncMode::kRestricted;
  /// Compare shared-block bytes after every step instead of only the last.
  bool debug_sync = false;
};

struct SyncStats {
  std::size_t checked_steps = 0;   // steps at which shared blocks were compared
  std::size_t checked_blocks = 0;  // block comparisons performed
};

template <typename T>
struct PairOutcome {
  net::BlockNet<T> anchor;
  net::BlockNet<T> intervened;
  std::size_t steps = 0;
  std::uint64_t init_seed = 0;
  std::uint64_t shuffle_key = 0;
  SyncStats sync;
};

template <typename T>
PairOutcome<T> train_pair(const net::NetSpec& spec, const skew::PairedDataset& pd,
                          const TrainPlan& plan, const InterventionSet& A,
                          const PairOptions& options = {});

/// Per-step control for single-network training.
template <typename T>
struct DirectOptions {
  /// Blocks stepped at step t; all blocks when unset.
  std::function<InterventionSet(std::size_t)> trainable;
  /// Per-block LR/WD multipliers applied throughout.
  std::shared_ptr<const optim::BlockScales> scales;
  /// Called before step t with the current network, and once more with
  /// t == steps after the last one.
  std::function<void(std::size_t, const net::BlockNet<T>&)> observe;
};

/// Trains one network on one data role with the plan's seeds.
template <typename T>
net::BlockNet<T> train_direct(const net::NetSpec& spec, const skew::PairedDataset& pd,
                              const TrainPlan& plan, Role data_role,
                              const DirectOptions<T>& options = {});

template <typename T>
struct FamilyMember {
  InterventionSet set;
  net::BlockNet<T> clean_anchored;   // theta^{c,A}
  net::BlockNet<T> skewed_anchored;  // theta^{s,A}
};

template <typename T>
struct FamilyOutcome {
  net::BlockNet<T> clean;   // theta^c
  net::BlockNet<T> skewed;  // theta^s
  std::vector<FamilyMember<T>> members;
  std::size_t anchor_steps = 0;       // optimizer steps taken by both anchors together
  std::size_t intervened_steps = 0;   // optimizer steps taken by intervened models
  SyncStats sync;
};

/// Trains theta^c, theta^s and both intervened models for every set in one
/// lockstep loop; the anchors are trained once. Plans must be mirror images.
template <typename T>
FamilyOutcome<T> train_family(const net::NetSpec& spec, const skew::PairedDataset& pd,
                              const TrainPlan& plan_clean, const TrainPlan& plan_skewed,
                              const std::vector<InterventionSet>& sets,
                              const PairOptions& options = {});

}  // namespace sscope::cf
