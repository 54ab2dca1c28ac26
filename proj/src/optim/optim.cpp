#include "sscope/optim.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "sscope/error.hpp"
#include "sscope/kernels.hpp"

namespace sscope::optim {

std::string_view kind_name(OptimizerKind kind) noexcept {
  return kind == OptimizerKind::kAdamW ? "adamw" : "sgd_nesterov";
}

OptimizerKind parse_kind(std::string_view text) {
  if (text == "adamw" || text == "AdamW") return OptimizerKind::kAdamW;
  if (text == "sgd_nesterov" || text == "sgd" || text == "SGD_Nesterov") {
    return OptimizerKind::kSgdNesterov;
  }
  throw ConfigError("unknown optimizer '" + std::string(text) + "'");
}

void OptimizerConfig::validate() const {
  if (!(peak_lr > 0.0) || !std::isfinite(peak_lr)) throw ConfigError("peak_lr must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw ConfigError("weight_decay must be >= 0");
  }
  if (kind == OptimizerKind::kSgdNesterov && !(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (kind == OptimizerKind::kAdamW) {
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw ConfigError("AdamW betas must lie in (0, 1)");
    }
    if (!(epsilon > 0.0)) throw ConfigError("AdamW epsilon must be > 0");
  }
}

std::string OptimizerConfig::to_string() const {
  std::ostringstream os;
  os.precision(17);
  os << kind_name(kind) << " lr=" << peak_lr << " wd=" << weight_decay;
  if (kind == OptimizerKind::kSgdNesterov) {
    os << " momentum=" << momentum;
  } else {
    os << " betas=" << beta1 << "," << beta2 << " eps=" << epsilon;
  }
  return os.str();
}

OptimizerConfig OptimizerConfig::sgd_nesterov(double peak_lr, double weight_decay,
                                              double momentum) {
  OptimizerConfig c;
  c.kind = OptimizerKind::kSgdNesterov;
  c.peak_lr = peak_lr;
  c.weight_decay = weight_decay;
  c.momentum = momentum;
  return c;
}

OptimizerConfig OptimizerConfig::adamw(double peak_lr, double weight_decay) {
  OptimizerConfig c;
  c.kind = OptimizerKind::kAdamW;
  c.peak_lr = peak_lr;
  c.weight_decay = weight_decay;
  return c;
}

void ScheduleConfig::validate(double peak_lr) const {
  if (total_steps == 0) throw ConfigError("total_steps must be > 0");
  if (!(warmup_share >= 0.0 && warmup_share < 1.0)) {
    throw ConfigError("warmup_share must lie in [0, 1)");
  }
  if (!(min_lr > 0.0 && min_lr <= peak_lr)) throw ConfigError("min_lr must lie in (0, peak_lr]");
}

std::size_t ScheduleConfig::warmup_steps() const noexcept {
  return static_cast<std::size_t>(std::floor(warmup_share * static_cast<double>(total_steps)));
}

double lr_at(std::size_t t, const ScheduleConfig& schedule, double peak_lr) {
  if (t >= schedule.total_steps) {
    throw UsageError("step " + std::to_string(t) + " outside schedule of " +
                     std::to_string(schedule.total_steps) + " steps");
  }
  const std::size_t w = schedule.warmup_steps();
  if (t < w) return peak_lr * static_cast<double>(t) / static_cast<double>(w);
  const std::size_t span = schedule.total_steps - 1 - w;
  if (span == 0) return peak_lr;
  const double progress = static_cast<double>(t - w) / static_cast<double>(span);
  return schedule.min_lr +
         (peak_lr - schedule.min_lr) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
void step(net::ParamStore<T>& params, const net::ParamStore<T>& grads, OptState<T>& state,
          const OptimizerConfig& config, const ScheduleConfig& schedule,
          const InterventionSet& blocks, const BlockScales* scales) {
  const std::size_t m = params.block_count();
  if (grads.block_count() != m || state.first.size() != m || blocks.block_count() != m) {
    throw ShapeError("optimizer step: block counts disagree");
  }
  if (scales && (scales->lr.size() != m || scales->wd.size() != m)) {
    throw ShapeError("optimizer step: block scales need one entry per block");
  }
  const auto members = blocks.members();
  for (std::size_t b : members) {
    if (grads.blocks[b].size() != params.blocks[b].size()) {
      throw ShapeError("optimizer step: gradient of block " + std::to_string(b) +
                       " does not match its parameters");
    }
    for (T g : grads.blocks[b]) {
      if (!std::isfinite(g)) throw NumericError(b, "non-finite gradient");
    }
  }
  const double lr = lr_at(state.t, schedule, config.peak_lr);
  const auto& k = kernels::active<T>();
  for (std::size_t b : members) {
    const double block_lr = lr * (scales ? scales->lr[b] : 1.0);
    const double block_wd = config.weight_decay * (scales ? scales->wd[b] : 1.0);
    auto& p = params.blocks[b];
    const auto& g = grads.blocks[b];
    if (state.first[b].empty()) state.first[b].assign(p.size(), T(0));
    const std::size_t t = ++state.block_steps[b];
    if (config.kind == OptimizerKind::kSgdNesterov) {
      k.sgd_update(p.data(), g.data(), state.first[b].data(), p.size(), static_cast<T>(block_lr),
                   static_cast<T>(block_wd), static_cast<T>(config.momentum), true);
    } else {
      if (state.second[b].empty()) state.second[b].assign(p.size(), T(0));
      const double td = static_cast<double>(t);
      const double bias1 = 1.0 - std::pow(config.beta1, td);
      const double sqrt_bias2 = std::sqrt(1.0 - std::pow(config.beta2, td));
      k.adamw_update(p.data(), g.data(), state.first[b].data(), state.second[b].data(), p.size(),
                     static_cast<T>(1.0 - block_lr * block_wd), static_cast<T>(block_lr / bias1),
                     static_cast<T>(config.beta1), static_cast<T>(config.beta2),
                     static_cast<T>(sqrt_bias2), static_cast<T>(config.epsilon));
    }
  }
  ++state.t;
}

Preset preset(std::string_view name) {
  if (name == "sgd") return {OptimizerConfig::sgd_nesterov(0.02), 0.02};
  if (name == "sgd-scratch") return {OptimizerConfig::sgd_nesterov(0.05), 0.05};
  if (name == "adamw") return {OptimizerConfig::adamw(1e-3), 0.02};
  if (name == "adamw-scratch") return {OptimizerConfig::adamw(3e-3), 0.05};
  throw ConfigError("unknown optimizer preset '" + std::string(name) + "'");
}

template void step<float>(net::ParamStore<float>&, const net::ParamStore<float>&,
                          OptState<float>&, const OptimizerConfig&, const ScheduleConfig&,
                          const InterventionSet&, const BlockScales*);
template void step<double>(net::ParamStore<double>&, const net::ParamStore<double>&,
                           OptState<double>&, const OptimizerConfig&, const ScheduleConfig&,
                           const InterventionSet&, const BlockScales*);

}  // namespace sscope::optim
