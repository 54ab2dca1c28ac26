#pragma once

// Optimizers and the warmup-cosine learning-rate schedule.
//
// SGD follows the PyTorch formulation with Nesterov lookahead:
//   g = grad + wd * p;  v = mu * v + g;  p -= lr * (g + mu * v)
// AdamW decays decoupled from the moments:
//   p *= 1 - lr * wd;  m = b1 m + (1 - b1) g;  v = b2 v + (1 - b2) g^2
//   p -= lr / (1 - b1^t) * m / (sqrt(v) / sqrt(1 - b2^t) + eps)
// State is allocated per block on the first step that touches it, so blocks
// that are never stepped (shared or frozen) carry no state at all.

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "sscope/intervention_set.hpp"
#include "sscope/net.hpp"

namespace sscope::optim {

enum class OptimizerKind { kSgdNesterov, kAdamW };

std::string_view kind_name(OptimizerKind kind) noexcept;
OptimizerKind parse_kind(std::string_view text);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kSgdNesterov;
  double peak_lr = 0.05;
  double weight_decay = 1e-4;
  double momentum = 0.9;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  /// Throws ConfigError on out-of-range fields.
  void validate() const;
  std::string to_string() const;

  static OptimizerConfig sgd_nesterov(double peak_lr, double weight_decay = 1e-4,
                                      double momentum = 0.9);
  static OptimizerConfig adamw(double peak_lr, double weight_decay = 0.01);
};

struct ScheduleConfig {
  std::size_t total_steps = 1;
  double warmup_share = 0.05;
  double min_lr = 1e-6;

  void validate(double peak_lr) const;
  std::size_t warmup_steps() const noexcept;
};

/// Linear ramp from 0 over the first floor(warmup_share * T) steps, then a
/// half cosine from peak_lr at the end of warmup to min_lr at t = T - 1.
double lr_at(std::size_t t, const ScheduleConfig& schedule, double peak_lr);

/// Per-block multipliers of the learning rate and the weight decay.
struct BlockScales {
  std::vector<double> lr;
  std::vector<double> wd;

  static BlockScales identity(std::size_t m) { return {std::vector<double>(m, 1.0), std::vector<double>(m, 1.0)}; }
};

template <typename T>
struct OptState {
  std::vector<std::vector<T>> first;   // velocity (SGD) or m (AdamW)
  std::vector<std::vector<T>> second;  // v (AdamW only)
  std::vector<std::size_t> block_steps;
  std::size_t t = 0;  // schedule position

  explicit OptState(std::size_t m = 0) : first(m), second(m), block_steps(m, 0) {}
  bool has_state(std::size_t block) const noexcept { return !first.at(block).empty(); }
};

/// Applies one update at schedule position state.t to the blocks in `blocks`
/// and advances state.t. Gradients of all selected blocks are checked before
/// any parameter changes; a non-finite entry throws NumericError naming the
/// block.
template <typename T>
void step(net::ParamStore<T>& params, const net::ParamStore<T>& grads, OptState<T>& state,
          const OptimizerConfig& config, const ScheduleConfig& schedule,
          const InterventionSet& blocks, const BlockScales* scales = nullptr);

/// Named desk-scale presets: "sgd" (fine-tune analog), "sgd-scratch",
/// "adamw", "adamw-scratch". Returns the optimizer and the warmup share.
struct Preset {
  OptimizerConfig optimizer;
  double warmup_share = 0.05;
};
Preset preset(std::string_view name);

}  // namespace sscope::optim
