#include "sscope/interventions.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "sscope/error.hpp"

namespace sscope::iv {
namespace {

std::string format_factor(double f) {
  std::ostringstream os;
  os.precision(6);
  os << f;
  return os.str();
}

template <typename T>
MitigationRun<T> finish(net::BlockNet<T> model, const MitigationContext& ctx,
                        std::string provenance) {
  const auto err = metrics::ErrorRate::from(net::evaluate(model, ctx.clean_test));
  auto result = mitigation_extent(err, ctx.err_clean_anchor, ctx.err_skewed_anchor, ctx.gap_floor);
  result.provenance = std::move(provenance);
  return MitigationRun<T>{std::move(result), std::move(model)};
}

}  // namespace

InterventionKind InterventionKind::parse(std::string_view text) {
  if (text == "lr_up") return lr_up();
  if (text == "lr_down") return lr_down();
  if (text == "wd_up") return wd_up();
  if (text == "wd_down") return wd_down();
  if (text == "freeze") return freeze();
  if (text.size() > 3 && (text.substr(0, 3) == "lr*" || text.substr(0, 3) == "wd*")) {
    double f = 0.0;
    const auto rest = text.substr(3);
    auto [ptr, ec] = std::from_chars(rest.data(), rest.data() + rest.size(), f);
    if (ec == std::errc{} && ptr == rest.data() + rest.size() && f > 0.0 && std::isfinite(f)) {
      return {text[0] == 'l' ? Tag::kLrScale : Tag::kWdScale, f};
    }
  }
  throw ConfigError("unknown intervention kind '" + std::string(text) + "'");
}

std::string InterventionKind::name() const {
  switch (tag) {
    case Tag::kFreeze:
      return "freeze";
    case Tag::kLrScale:
      if (factor == 3.0) return "lr_up";
      if (factor == 1.0 / 3.0) return "lr_down";
      return "lr*" + format_factor(factor);
    case Tag::kWdScale:
      if (factor == 10.0) return "wd_up";
      if (factor == 0.1) return "wd_down";
      return "wd*" + format_factor(factor);
  }
  return "?";
}

TargetBlocks TargetBlocks::parse(std::string_view text) {
  auto parse_index = [&](std::string_view s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
      throw ConfigError("malformed target blocks '" + std::string(text) + "'");
    }
    return v;
  };
  const auto dash = text.find('-');
  if (dash == std::string_view::npos) return single(parse_index(text));
  const auto a = parse_index(text.substr(0, dash)), b = parse_index(text.substr(dash + 1));
  if (b != a + 1) throw ConfigError("double targets must be consecutive blocks");
  return pair(a);
}

void TargetBlocks::validate(std::size_t m) const {
  if (count != 1 && count != 2) throw ConfigError("targets cover one or two blocks");
  if (first + count > m) {
    throw ConfigError("target blocks " + to_string() + " outside a " + std::to_string(m) +
                      "-block network");
  }
}

InterventionSet TargetBlocks::as_set(std::size_t m) const {
  validate(m);
  std::vector<std::size_t> members;
  for (std::size_t b = first; b < first + count; ++b) members.push_back(b);
  return InterventionSet::of(m, members);
}

std::string TargetBlocks::to_string() const {
  return count == 1 ? std::to_string(first)
                    : std::to_string(first) + "-" + std::to_string(first + count - 1);
}

std::vector<TargetBlocks> TargetBlocks::enumerate(std::size_t m, bool include_pairs) {
  std::vector<TargetBlocks> out;
  for (std::size_t i = 0; i < m; ++i) out.push_back(single(i));
  if (include_pairs) {
    for (std::size_t i = 0; i + 1 < m; ++i) out.push_back(pair(i));
  }
  return out;
}

MitigationResult mitigation_extent(const metrics::ErrorRate& err_intervened,
                                   const metrics::ErrorRate& err_clean_anchor,
                                   const metrics::ErrorRate& err_skewed_anchor,
                                   double gap_floor) {
  MitigationResult r;
  r.err_intervened = err_intervened;
  r.acc_intervened = 1.0 - err_intervened.value();
  r.acc_clean_anchor = 1.0 - err_clean_anchor.value();
  r.acc_skewed_anchor = 1.0 - err_skewed_anchor.value();
  // Accuracy differences equal error differences with the sign flipped, so
  // compute both terms on the exact rationals.
  const auto num = err_skewed_anchor.exact() - err_intervened.exact();
  const auto den = err_skewed_anchor.exact() - err_clean_anchor.exact();
  r.extent_defined = std::fabs(den.value()) >= gap_floor;
  if (!r.extent_defined) {
    r.extent = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.extent = (static_cast<long double>(num.num()) * den.den()) /
             (static_cast<long double>(num.den()) * den.num());
  return r;
}

std::pair<std::size_t, std::size_t> FreezeConfig::phases(std::size_t total_steps) const {
  auto resolve = [&](std::optional<std::size_t> steps, double share) -> std::size_t {
    if (steps) return *steps;
    if (!(share >= 0.0 && share <= 1.0)) throw ConfigError("freeze phase share outside [0, 1]");
    return static_cast<std::size_t>(std::floor(share * static_cast<double>(total_steps)));
  };
  const std::size_t t1 = resolve(phase1_steps, phase1_share);
  const std::size_t t2 = resolve(phase2_steps, phase2_share);
  if (t1 + t2 > total_steps) {
    throw ConfigError("freeze phases (" + std::to_string(t1) + " + " + std::to_string(t2) +
                      " steps) exceed the schedule of " + std::to_string(total_steps));
  }
  if (t1 == 0 && t2 == 0) {
    throw ConfigError("freeze protocol needs a non-empty warm-up phase (T1 + T2 > 0)");
  }
  return {t1, t2};
}

template <typename T>
MitigationRun<T> retrain_with_intervention(const net::NetSpec& spec,
                                           const skew::PairedDataset& pd,
                                           const cf::TrainPlan& plan_skewed,
                                           const InterventionKind& kind,
                                           const TargetBlocks& targets,
                                           const MitigationContext& context,
                                           const FreezeConfig& freeze,
                                           const Observer<T>& observe) {
  const std::size_t m = spec.blocks.size();
  targets.validate(m);
  if (kind.tag == InterventionKind::Tag::kFreeze) {
    return freeze_protocol<T>(spec, pd, plan_skewed, targets, context, freeze, observe);
  }
  if (!(kind.factor > 0.0) || !std::isfinite(kind.factor)) {
    throw ConfigError("intervention factor must be positive");
  }
  auto scales = std::make_shared<optim::BlockScales>(optim::BlockScales::identity(m));
  for (std::size_t b = targets.first; b < targets.first + targets.count; ++b) {
    (kind.tag == InterventionKind::Tag::kLrScale ? scales->lr : scales->wd)[b] = kind.factor;
  }
  cf::DirectOptions<T> options;
  options.scales = scales;
  options.observe = observe;
  auto model = cf::train_direct<T>(spec, pd, plan_skewed, cf::Role::kSkewed, options);
  return finish(std::move(model), context,
                "kind=" + kind.name() + " targets=" + targets.to_string() +
                    " scope=full_schedule data=skewed");
}

template <typename T>
MitigationRun<T> freeze_protocol(const net::NetSpec& spec, const skew::PairedDataset& pd,
                                 const cf::TrainPlan& plan, const TargetBlocks& keep,
                                 const MitigationContext& context, const FreezeConfig& freeze,
                                 const Observer<T>& observe) {
  const std::size_t m = spec.blocks.size();
  keep.validate(m);
  const auto [t1, t2] = freeze.phases(plan.steps);
  const auto last = InterventionSet::of(m, {m - 1});
  const auto all = InterventionSet::full(m);
  const auto kept = keep.as_set(m);
  cf::DirectOptions<T> options;
  options.trainable = [=, t1 = t1, t2 = t2](std::size_t t) {
    if (t < t1) return last;
    if (t < t1 + t2) return all;
    return kept;
  };
  options.observe = observe;
  auto model = cf::train_direct<T>(spec, pd, plan, plan.anchor_role, options);
  return finish(std::move(model), context,
                "kind=freeze keep=" + keep.to_string() + " T1=" + std::to_string(t1) +
                    " T2=" + std::to_string(t2) + " data=" +
                    std::string(cf::role_name(plan.anchor_role)));
}

RegressionData build_mitigation_regression(
    const std::map<std::string, metrics::LocalizationProfile>& profiles,
    const std::vector<MitigationRow>& rows) {
  if (rows.empty()) throw UsageError("no mitigation results to regress");
  std::vector<double> enc, fgt, first, last, dbl;
  RegressionData out;
  for (const auto& row : rows) {
    const auto it = profiles.find(row.setting);
    if (it == profiles.end()) {
      throw UsageError("no localization profile for setting '" + row.setting + "'");
    }
    const auto& p = it->second;
    row.target.validate(p.m);
    double e = 0.0, f = 0.0;
    for (std::size_t b = row.target.first; b < row.target.first + row.target.count; ++b) {
      e += p.enc_rates.at(b);
      f += p.fgt_rates.at(b);
    }
    enc.push_back(e);
    fgt.push_back(f);
    first.push_back(row.target.contains(0) ? 1.0 : 0.0);
    last.push_back(row.target.contains(p.m - 1) ? 1.0 : 0.0);
    dbl.push_back(row.target.is_double() ? 1.0 : 0.0);
    out.y.push_back(row.extent);
  }
  const std::size_t n = rows.size();
  std::vector<double> ef(n), e2(n), f2(n);
  for (std::size_t i = 0; i < n; ++i) {
    ef[i] = enc[i] * fgt[i];
    e2[i] = enc[i] * enc[i];
    f2[i] = fgt[i] * fgt[i];
  }
  out.full.add("Enc", enc);
  out.full.add("Fgt", fgt);
  out.full.add("Enc x Fgt", ef);
  out.full.add("Enc^2", e2);
  out.full.add("Fgt^2", f2);
  auto add_dummy = [&](const std::string& name, const std::vector<double>& col) {
    bool any = false;
    for (double v : col) any = any || v != 0.0;
    if (!any) {
      out.dropped.push_back(name);
      return;
    }
    out.full.add(name, col);
    out.restricted.add(name, col);
  };
  add_dummy("First", first);
  add_dummy("Last", last);
  add_dummy("Double", dbl);
  out.full.add("Const", std::vector<double>(n, 1.0));
  out.restricted.add("Const", std::vector<double>(n, 1.0));
  out.q = 5;
  return out;
}

#define SSCOPE_INSTANTIATE(T)                                                                 \
  template MitigationRun<T> retrain_with_intervention<T>(                                     \
      const net::NetSpec&, const skew::PairedDataset&, const cf::TrainPlan&,                  \
      const InterventionKind&, const TargetBlocks&, const MitigationContext&,                 \
      const FreezeConfig&, const Observer<T>&);                                               \
  template MitigationRun<T> freeze_protocol<T>(const net::NetSpec&,                           \
                                               const skew::PairedDataset&,                    \
                                               const cf::TrainPlan&, const TargetBlocks&,     \
                                               const MitigationContext&, const FreezeConfig&, \
                                               const Observer<T>&);
SSCOPE_INSTANTIATE(float)
SSCOPE_INSTANTIATE(double)
#undef SSCOPE_INSTANTIATE

}  // namespace sscope::iv
