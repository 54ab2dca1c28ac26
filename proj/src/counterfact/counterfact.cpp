#include "sscope/counterfact.hpp"

#include <optional>

#include "sscope/error.hpp"
#include "sscope/rng.hpp"

namespace sscope::cf {
namespace {

template <typename T>
net::BlockNet<T> initial_net(const net::NetSpec& spec, const TrainPlan& plan) {
  if (!plan.init) return net::BlockNet<T>(spec, plan.init_seed());
  return net::BlockNet<T>(spec, net::convert<T>(*plan.init));
}

template <typename T>
const net::Batch<T>& batch_for(const skew::PairedBatch<T>& pb, Role role) {
  return role == Role::kClean ? pb.clean : pb.skewed;
}

std::size_t lowest_member(const InterventionSet& a) {
  for (std::size_t b = 0; b < a.block_count(); ++b) {
    if (a.contains(b)) return b;
  }
  return a.block_count();
}

// One network in the lockstep loop. Anchors have no anchor index.
template <typename T>
struct Lane {
  net::BlockNet<T> net;
  optim::OptState<T> state;
  Role data;
  std::optional<std::size_t> anchor;
  InterventionSet A;
  InterventionSet shared;
};

struct Counters {
  std::size_t anchor_steps = 0;
  std::size_t intervened_steps = 0;
  SyncStats sync;
};

template <typename T>
void check_shared(const Lane<T>& lane, const Lane<T>& anchor, std::size_t t, SyncStats& stats) {
  for (std::size_t b : lane.shared.members()) {
    ++stats.checked_blocks;
    if (!lane.net.params().block_bytes_equal(anchor.net.params(), b)) {
      throw TrainingError(t, "shared block " + std::to_string(b) +
                                 " diverged from the anchor for A = " + lane.A.canonical());
    }
  }
}

template <typename T>
void run_lockstep(const net::NetSpec& spec, const skew::PairedDataset& pd, const TrainPlan& plan,
                  std::vector<Lane<T>>& lanes, const PairOptions& options, Counters& counters) {
  const auto schedule = plan.schedule();
  const auto full = InterventionSet::full(spec.blocks.size());
  skew::PairedBatches batches(pd, plan.batch_size, plan.shuffle_key());
  for (std::size_t t = 0; t < plan.steps; ++t) {
    const auto pb = batches.next<T>(spec.input_shape);
    try {
      for (auto& lane : lanes) {
        if (lane.anchor) continue;
        auto lg = lane.net.loss_and_grad(batch_for(pb, lane.data));
        optim::step(lane.net.mutable_params(), lg.grads, lane.state, plan.optimizer, schedule,
                    full);
        ++counters.anchor_steps;
      }
      for (auto& lane : lanes) {
        if (!lane.anchor) continue;
        const auto& anchor = lanes[*lane.anchor];
        if (!lane.A.is_empty()) {
          const bool literal = options.mode == SyncMode::kLiteral;
          const std::size_t first = literal ? 0 : lowest_member(lane.A);
          auto lg = lane.net.loss_and_grad(batch_for(pb, lane.data), first);
          optim::step(lane.net.mutable_params(), lg.grads, lane.state, plan.optimizer, schedule,
                      literal ? full : lane.A);
          ++counters.intervened_steps;
        }
        net::copy_blocks(anchor.net, lane.net, lane.shared);
      }
    } catch (const NumericError& e) {
      throw TrainingError(t, std::string("divergent training: ") + e.what());
    }
    if (options.debug_sync || t + 1 == plan.steps) {
      ++counters.sync.checked_steps;
      for (const auto& lane : lanes) {
        if (lane.anchor) check_shared(lane, lanes[*lane.anchor], t, counters.sync);
      }
    }
  }
}

template <typename T>
Lane<T> make_lane(const net::BlockNet<T>& init, Role data, std::optional<std::size_t> anchor,
                  const InterventionSet& A) {
  return Lane<T>{init, optim::OptState<T>(init.block_count()), data, anchor, A, A.complement()};
}

}  // namespace

std::string_view role_name(Role r) noexcept { return r == Role::kClean ? "clean" : "skewed"; }

void TrainPlan::validate() const {
  if (steps == 0) throw ConfigError("training needs steps > 0");
  if (batch_size == 0) throw ConfigError("training needs batch_size > 0");
  optimizer.validate();
  schedule().validate(optimizer.peak_lr);
}

std::uint64_t TrainPlan::init_seed() const noexcept { return rng::split(master_seed, "init"); }

std::uint64_t TrainPlan::shuffle_key() const noexcept {
  return rng::split(master_seed, "shuffle");
}

TrainPlan TrainPlan::mirrored() const {
  TrainPlan p = *this;
  p.anchor_role = opposite(anchor_role);
  return p;
}

template <typename T>
PairOutcome<T> train_pair(const net::NetSpec& spec, const skew::PairedDataset& pd,
                          const TrainPlan& plan, const InterventionSet& A,
                          const PairOptions& options) {
  plan.validate();
  if (A.block_count() != spec.blocks.size()) {
    throw UsageError("intervention set over " + std::to_string(A.block_count()) +
                     " blocks for a network of " + std::to_string(spec.blocks.size()));
  }
  const auto init = initial_net<T>(spec, plan);
  std::vector<Lane<T>> lanes;
  lanes.push_back(make_lane(init, plan.anchor_role, std::nullopt, InterventionSet::empty(A.block_count())));
  lanes.push_back(make_lane(init, opposite(plan.anchor_role), std::size_t{0}, A));
  Counters counters;
  run_lockstep(spec, pd, plan, lanes, options, counters);
  return PairOutcome<T>{std::move(lanes[0].net), std::move(lanes[1].net), plan.steps,
                        plan.init_seed(), plan.shuffle_key(), counters.sync};
}

template <typename T>
net::BlockNet<T> train_direct(const net::NetSpec& spec, const skew::PairedDataset& pd,
                              const TrainPlan& plan, Role data_role,
                              const DirectOptions<T>& options) {
  plan.validate();
  const auto schedule = plan.schedule();
  auto model = initial_net<T>(spec, plan);
  optim::OptState<T> state(model.block_count());
  const auto full = InterventionSet::full(model.block_count());
  skew::PairedBatches batches(pd, plan.batch_size, plan.shuffle_key());
  for (std::size_t t = 0; t < plan.steps; ++t) {
    const auto pb = batches.next<T>(spec.input_shape);
    if (options.observe) options.observe(t, model);
    const auto trainable = options.trainable ? options.trainable(t) : full;
    try {
      if (trainable.is_empty()) {
        ++state.t;
        continue;
      }
      auto lg = model.loss_and_grad(batch_for(pb, data_role), lowest_member(trainable));
      optim::step(model.mutable_params(), lg.grads, state, plan.optimizer, schedule, trainable,
                  options.scales.get());
    } catch (const NumericError& e) {
      throw TrainingError(t, std::string("divergent training: ") + e.what());
    }
  }
  if (options.observe) options.observe(plan.steps, model);
  return model;
}

template <typename T>
FamilyOutcome<T> train_family(const net::NetSpec& spec, const skew::PairedDataset& pd,
                              const TrainPlan& plan_clean, const TrainPlan& plan_skewed,
                              const std::vector<InterventionSet>& sets,
                              const PairOptions& options) {
  plan_clean.validate();
  plan_skewed.validate();
  if (plan_clean.anchor_role != Role::kClean || plan_skewed.anchor_role != Role::kSkewed) {
    throw UsageError("train_family needs a clean-anchored and a skewed-anchored plan");
  }
  if (plan_clean.steps != plan_skewed.steps || plan_clean.batch_size != plan_skewed.batch_size ||
      plan_clean.master_seed != plan_skewed.master_seed ||
      plan_clean.optimizer.to_string() != plan_skewed.optimizer.to_string() ||
      plan_clean.warmup_share != plan_skewed.warmup_share ||
      plan_clean.min_lr != plan_skewed.min_lr || plan_clean.init != plan_skewed.init) {
    throw UsageError("train_family plans must be mirror images of each other");
  }
  const std::size_t m = spec.blocks.size();
  for (const auto& A : sets) {
    if (A.block_count() != m) throw UsageError("intervention set block count mismatch");
  }
  const auto init = initial_net<T>(spec, plan_clean);
  const auto none = InterventionSet::empty(m);
  std::vector<Lane<T>> lanes;
  lanes.push_back(make_lane(init, Role::kClean, std::nullopt, none));
  lanes.push_back(make_lane(init, Role::kSkewed, std::nullopt, none));
  for (const auto& A : sets) {
    lanes.push_back(make_lane(init, Role::kSkewed, std::size_t{0}, A));
    lanes.push_back(make_lane(init, Role::kClean, std::size_t{1}, A));
  }
  Counters counters;
  run_lockstep(spec, pd, plan_clean, lanes, options, counters);

  FamilyOutcome<T> out{std::move(lanes[0].net), std::move(lanes[1].net), {},
                       counters.anchor_steps, counters.intervened_steps, counters.sync};
  for (std::size_t i = 0; i < sets.size(); ++i) {
    out.members.push_back(
        {sets[i], std::move(lanes[2 + 2 * i].net), std::move(lanes[3 + 2 * i].net)});
  }
  return out;
}

#define SSCOPE_INSTANTIATE(T)                                                                   \
  template PairOutcome<T> train_pair<T>(const net::NetSpec&, const skew::PairedDataset&,             \
                                        const TrainPlan&, const InterventionSet&,               \
                                        const PairOptions&);                                    \
  template net::BlockNet<T> train_direct<T>(const net::NetSpec&, const skew::PairedDataset&,         \
                                            const TrainPlan&, Role, const DirectOptions<T>&);   \
  template FamilyOutcome<T> train_family<T>(const net::NetSpec&, const skew::PairedDataset&,         \
                                            const TrainPlan&, const TrainPlan&,                 \
                                            const std::vector<InterventionSet>&,                \
                                            const PairOptions&);
SSCOPE_INSTANTIATE(float)
SSCOPE_INSTANTIATE(double)
#undef SSCOPE_INSTANTIATE

}  // namespace sscope::cf
