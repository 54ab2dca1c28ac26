#include "sscope/expcli/runner.hpp"

#include <atomic>
#include <chrono>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <ostream>
#include <thread>

#include "sscope/checkpoint.hpp"
#include "sscope/error.hpp"
#include "sscope/rng.hpp"

namespace sscope::expcli {
namespace {

using Clock = std::chrono::steady_clock;
using nlohmann::json;

skew::TaskSpec task_spec(const ExperimentConfig& c, const std::string& strength) {
  skew::TaskSpec t;
  t.class_count = c.classes;
  t.shape = {c.channels, c.image_size, c.image_size};
  t.noise = c.noise;
  if (c.task == "watermark") {
    t.watermark = watermark_spec(strength);
  } else {
    t.attribute_count = c.attributes;
  }
  return t;
}

skew::SkewSpec skew_spec(const ExperimentConfig& c, const std::string& strength) {
  if (c.task == "watermark") return watermark_spec(strength);
  return skew::SamplingSkewSpec{c.attributes, rng::split(c.master_seed, "sampling-skew")};
}

std::uint64_t data_seed(const ExperimentConfig& c, std::string_view name) {
  return rng::split(c.master_seed, name);
}

json cell_json(const Cell& cell) {
  json j = json::object();
  std::size_t start = 0;
  while (start < cell.key.size()) {
    const auto nl = cell.key.find('\n', start);
    const auto line = cell.key.substr(start, nl - start);
    const auto eq = line.find('=');
    j[line.substr(0, eq)] = line.substr(eq + 1);
    start = nl + 1;
  }
  return j;
}

RunRecord base_record(const ExperimentConfig& c, const Cell& cell, std::uint64_t seed) {
  RunRecord r;
  r.trial_id = trial_id(cell, seed);
  r.cell = cell.id;
  r.task = c.task;
  r.skew_strength = cell.skew_strength;
  r.skew_frequency = skew::Fraction::parse(cell.skew_frequency).to_string();
  r.net = c.net;
  r.optimizer = cell.optimizer;
  r.mode = c.mode;
  r.steps = c.steps;
  r.batch_size = c.batch_size;
  r.precision = c.precision;
  r.seed = seed;
  return r;
}

std::string manifest_line(const RunRecord& r, const Cell& cell, const cf::TrainPlan& plan,
                          const json& extra) {
  json j;
  j["run_id"] = r.run_id;
  j["trial_id"] = r.trial_id;
  j["cell"] = cell.id;
  j["config"] = cell_json(cell);
  j["seed"] = r.seed;
  j["master_seed_of_trial"] = plan.master_seed;
  j["init_seed"] = plan.init_seed();
  j["shuffle_key"] = plan.shuffle_key();
  j["warm_start"] = plan.init != nullptr;
  j["role"] = role_name(r.role);
  j["set"] = r.set;
  j["optimizer"] = plan.optimizer.to_string();
  j["schedule"] = {{"steps", plan.steps},
                   {"warmup_share", plan.warmup_share},
                   {"min_lr", plan.min_lr}};
  j["batch_size"] = plan.batch_size;
  j["err_clean"] = r.err_clean.to_string();
  j["err_skewfull"] = r.err_skewfull.to_string();
  j["diverged"] = r.diverged;
  j["status"] = r.status;
  j["wall_time"] = r.wall_time;
  for (const auto& [k, v] : extra.items()) j[k] = v;
  return j.dump();
}

metrics::ModelErrors model_errors(const RunRecord& r) {
  return {r.err_clean.value(), r.err_skewfull.value()};
}

template <typename T>
std::pair<metrics::ErrorRate, metrics::ErrorRate> evaluate_both(const net::BlockNet<T>& model,
                                                                const CellData& data) {
  return {metrics::ErrorRate::from(net::evaluate(model, data.test_clean.view())),
          metrics::ErrorRate::from(net::evaluate(model, data.test_fully_skewed.view()))};
}

struct Trial {
  const Cell* cell;
  const CellData* data;
  std::uint64_t seed;
  std::shared_ptr<const net::ParamStore<float>> warm;
};

template <typename T>
void counterfactual_trial(const ExperimentConfig& c, const Trial& trial,
                          const std::vector<InterventionSet>& sets, const net::NetSpec& spec,
                          std::vector<RunRecord>& records, std::vector<std::string>& manifests) {
  const auto& cell = *trial.cell;
  const auto plan_c = plan_for(c, cell, trial.seed, cf::Role::kClean, trial.warm);
  const auto plan_s = plan_c.mirrored();
  const auto base = base_record(c, cell, trial.seed);
  const std::string none = InterventionSet::empty(spec.blocks.size()).canonical();

  auto make = [&](RunRole role, const std::string& set) {
    RunRecord r = base;
    r.role = role;
    r.set = set;
    r.intervention = "-";
    r.targets = "-";
    r.run_id = run_id(cell, trial.seed, role, set);
    return r;
  };
  std::vector<RunRecord> out{make(RunRole::kCleanAnchor, none), make(RunRole::kSkewedAnchor, none)};
  for (const auto& A : sets) {
    out.push_back(make(RunRole::kIntervenedC, A.canonical()));
    out.push_back(make(RunRole::kIntervenedS, A.canonical()));
  }

  const auto start = Clock::now();
  try {
    cf::PairOptions options;
    options.debug_sync = c.debug_sync;
    const auto fam = cf::train_family<T>(spec, trial.data->train, plan_c, plan_s, sets, options);
    std::tie(out[0].err_clean, out[0].err_skewfull) = evaluate_both(fam.clean, *trial.data);
    std::tie(out[1].err_clean, out[1].err_skewfull) = evaluate_both(fam.skewed, *trial.data);
    for (std::size_t i = 0; i < fam.members.size(); ++i) {
      auto& rc = out[2 + 2 * i];
      auto& rs = out[3 + 2 * i];
      std::tie(rc.err_clean, rc.err_skewfull) = evaluate_both(fam.members[i].clean_anchored, *trial.data);
      std::tie(rs.err_clean, rs.err_skewfull) = evaluate_both(fam.members[i].skewed_anchored, *trial.data);
      for (auto* r : {&rc, &rs}) {
        r->diverged =
            metrics::detect_divergence(model_errors(*r), model_errors(out[0]), model_errors(out[1]))
                .diverged;
      }
    }
  } catch (const TrainingError& e) {
    for (auto& r : out) {
      r.status = "failed";
      r.err_clean = {1, 1};
      r.err_skewfull = {1, 1};
    }
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  for (auto& r : out) {
    r.wall_time = secs / static_cast<double>(out.size());
    const cf::TrainPlan& plan =
        (r.role == RunRole::kSkewedAnchor || r.role == RunRole::kIntervenedS) ? plan_s : plan_c;
    json extra = {{"sync_mode", "restricted"},
                  {"shared_block_state", "weights_only"},
                  {"debug_sync", c.debug_sync},
                  {"data_role", (r.role == RunRole::kCleanAnchor || r.role == RunRole::kIntervenedS)
                                    ? "clean"
                                    : "skewed"}};
    manifests.push_back(manifest_line(r, cell, plan, extra));
  }
  records = std::move(out);
}

template <typename F>
void run_parallel(std::size_t count, std::size_t workers, F&& body) {
  std::atomic<std::size_t> next{0};
  std::mutex err_mu;
  std::exception_ptr first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        body(i);
      } catch (...) {
        std::lock_guard lock(err_mu);
        if (!first_error) first_error = std::current_exception();
        next = count;
        return;
      }
    }
  };
  const std::size_t n = std::min(workers, count);
  if (n <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n; ++w) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
}

template <typename T>
std::pair<net::BlockNet<T>, double> train_anchor(const ExperimentConfig& c, const Trial& trial,
                                                  const net::NetSpec& spec, cf::Role role) {
  const auto start = Clock::now();
  auto plan = plan_for(c, *trial.cell, trial.seed, role, trial.warm);
  auto model = cf::train_direct<T>(spec, trial.data->train, plan, role);
  return {std::move(model), std::chrono::duration<double>(Clock::now() - start).count()};
}

template <typename T>
void mitigation_trial(const ExperimentConfig& c, const Trial& trial, const net::NetSpec& spec,
                      const std::vector<RunRecord>& stored, StoreWriter& writer,
                      std::atomic<std::size_t>& written) {
  const auto& cell = *trial.cell;
  const std::size_t m = spec.blocks.size();
  const auto base = base_record(c, cell, trial.seed);
  const std::string none = InterventionSet::empty(m).canonical();
  const auto plan_c = plan_for(c, cell, trial.seed, cf::Role::kClean, trial.warm);
  const auto plan_s = plan_c.mirrored();

  // Anchors: reuse stored ones, otherwise train them directly.
  RunRecord anchors[2];
  for (int k = 0; k < 2; ++k) {
    const auto role = k == 0 ? RunRole::kCleanAnchor : RunRole::kSkewedAnchor;
    const auto id = run_id(cell, trial.seed, role, none);
    bool found = false;
    for (const auto& r : stored) {
      if (r.run_id == id) {
        anchors[k] = r;
        found = true;
      }
    }
    if (found) continue;
    RunRecord r = base;
    r.role = role;
    r.set = none;
    r.intervention = "-";
    r.targets = "-";
    r.run_id = id;
    auto [model, secs] =
        train_anchor<T>(c, trial, spec, k == 0 ? cf::Role::kClean : cf::Role::kSkewed);
    std::tie(r.err_clean, r.err_skewfull) = evaluate_both(model, *trial.data);
    r.wall_time = secs;
    anchors[k] = r;
    written += writer.append({r}, {manifest_line(r, cell, k == 0 ? plan_c : plan_s,
                                                 {{"data_role", k == 0 ? "clean" : "skewed"}})});
  }
  if (anchors[0].status != "ok" || anchors[1].status != "ok") return;

  iv::MitigationContext ctx{anchors[0].err_clean, anchors[1].err_clean,
                            trial.data->test_clean.view(), c.gap_floor};
  iv::FreezeConfig freeze;
  freeze.phase1_share = c.freeze_phase1;
  freeze.phase2_share = c.freeze_phase2;
  for (const auto& kind_name : c.interventions) {
    const auto kind = iv::InterventionKind::parse(kind_name);
    const bool is_freeze = kind.tag == iv::InterventionKind::Tag::kFreeze;
    for (const auto& target : iv::TargetBlocks::enumerate(m, c.targets == "all" && !is_freeze)) {
      std::string tag = target.to_string();
      if (is_freeze) {
        const auto [t1, t2] = freeze.phases(c.steps);
        tag += "@T1=" + std::to_string(t1) + ",T2=" + std::to_string(t2);
      }
      RunRecord r = base;
      r.role = RunRole::kMitigation;
      r.set = target.as_set(m).canonical();
      r.intervention = kind.name();
      r.targets = tag;
      r.run_id = run_id(cell, trial.seed, r.role, r.set, r.intervention, r.targets);
      if (writer.contains(r.run_id)) continue;
      const auto start = Clock::now();
      std::string provenance;
      try {
        auto run = iv::retrain_with_intervention<T>(spec, trial.data->train, plan_s, kind, target,
                                                    ctx, freeze);
        std::tie(r.err_clean, r.err_skewfull) = evaluate_both(run.model, *trial.data);
        provenance = run.result.provenance;
      } catch (const TrainingError& e) {
        r.status = "failed";
        r.err_clean = {1, 1};
        r.err_skewfull = {1, 1};
        provenance = e.what();
      }
      r.wall_time = std::chrono::duration<double>(Clock::now() - start).count();
      json extra = {{"intervention", kind.name()},
                    {"factor", kind.factor},
                    {"targets", target.to_string()},
                    {"scope", is_freeze ? "phases" : "full_schedule"},
                    {"provenance", provenance},
                    {"data_role", "skewed"}};
      written += writer.append({r}, {manifest_line(r, cell, plan_s, extra)});
    }
  }
}

}  // namespace

CellData build_cell_data(const ExperimentConfig& c, const Cell& cell) {
  const auto task = task_spec(c, cell.skew_strength);
  const auto skew = skew_spec(c, cell.skew_strength);
  const auto freq = skew::Fraction::parse(cell.skew_frequency);
  const auto mode = c.mask_mode == "exact" ? skew::MaskMode::kExactCount : skew::MaskMode::kIid;
  CellData d;
  skew::Dataset train_clean, train_fully;
  if (c.data == "synthetic") {
    train_clean = skew::gen_clean_synthetic(task, c.train_size, data_seed(c, "train-data"));
    d.test_clean = skew::gen_clean_synthetic(task, c.test_size, data_seed(c, "test-data"));
  } else {
    const std::filesystem::path dir = c.data;
    train_clean = skew::read_ssd1(dir / "train_clean.ssd1");
    d.test_clean = skew::read_ssd1(dir / "test_clean.ssd1");
  }
  auto fully_or_derive = [&](const skew::Dataset& clean, const char* file) {
    if (c.data != "synthetic" && std::filesystem::exists(std::filesystem::path(c.data) / file)) {
      return skew::read_ssd1(std::filesystem::path(c.data) / file);
    }
    return skew::make_fully_skewed(clean, skew);
  };
  train_fully = fully_or_derive(train_clean, "train_fully_skewed.ssd1");
  d.test_fully_skewed = fully_or_derive(d.test_clean, "test_fully_skewed.ssd1");
  d.train = skew::apply_frequency(std::move(train_clean), std::move(train_fully), freq,
                                  data_seed(c, "skew-mask:" + freq.to_string()), mode);
  return d;
}

std::vector<std::filesystem::path> gen_data(const ExperimentConfig& c,
                                            const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> written;
  for (const auto& cell : expand_grid(c)) {
    const auto d = build_cell_data(c, cell);
    const auto sub = dir / cell.id;
    std::filesystem::create_directories(sub);
    const std::pair<const char*, const skew::Dataset*> files[] = {
        {"train_clean.ssd1", &d.train.clean},
        {"train_fully_skewed.ssd1", &d.train.fully_skewed},
        {"train_skewed.ssd1", &d.train.skewed},
        {"test_clean.ssd1", &d.test_clean},
        {"test_fully_skewed.ssd1", &d.test_fully_skewed}};
    for (const auto& [name, data] : files) {
      skew::write_ssd1(sub / name, *data);
      written.push_back(sub / name);
    }
    std::ofstream(sub / "cell.txt") << cell.key;
  }
  return written;
}

std::string trial_id(const Cell& cell, std::uint64_t seed) {
  return sha256_hex(cell.key + "seed=" + std::to_string(seed) + "\n").substr(0, 16);
}

std::uint64_t trial_seed(std::uint64_t master_seed, const std::string& id) {
  return rng::split(master_seed, std::string_view(id));
}

std::string run_id(const Cell& cell, std::uint64_t seed, RunRole role, const std::string& set,
                   const std::string& intervention, const std::string& targets) {
  // Fields are sorted by name so the hash does not depend on their order.
  std::map<std::string, std::string> fields{{"cell", cell.key},
                                            {"seed", std::to_string(seed)},
                                            {"role", role_name(role)},
                                            {"set", set},
                                            {"intervention", intervention},
                                            {"targets", targets}};
  std::string text;
  for (const auto& [k, v] : fields) text += k + "=" + v + "\n";
  return sha256_hex(text).substr(0, 16);
}

cf::TrainPlan plan_for(const ExperimentConfig& c, const Cell& cell, std::uint64_t seed,
                       cf::Role anchor_role, std::shared_ptr<const net::ParamStore<float>> warm) {
  const auto preset = optim::preset(cell.optimizer);
  cf::TrainPlan p;
  p.anchor_role = anchor_role;
  p.steps = c.steps;
  p.batch_size = c.batch_size;
  p.master_seed = trial_seed(c.master_seed, trial_id(cell, seed));
  p.optimizer = preset.optimizer;
  p.warmup_share = preset.warmup_share;
  p.min_lr = preset.optimizer.peak_lr * c.min_lr_ratio;
  p.init = std::move(warm);
  return p;
}

std::shared_ptr<const net::ParamStore<float>> warm_start(const ExperimentConfig& c,
                                                         const Cell& cell, std::ostream& log) {
  if (c.mode != "warmstart") return nullptr;
  const auto spec = net_for(c);
  if (!c.checkpoint.empty()) {
    auto ck = net::load_checkpoint(c.checkpoint);
    if (net::to_canonical_text(ck.spec) != net::to_canonical_text(spec)) {
      throw ConfigError("checkpoint " + c.checkpoint + " does not match the configured net");
    }
    return std::make_shared<const net::ParamStore<float>>(std::move(ck.params));
  }
  // Pretrain on a related task: same generator, labels shifted by one class.
  const std::size_t steps = c.pretrain_steps ? c.pretrain_steps : c.steps;
  const std::string key = net::to_canonical_text(spec) + "task=" + c.task +
                          " strength=" + cell.skew_strength + " opt=" + cell.optimizer +
                          " steps=" + std::to_string(steps) + " batch=" +
                          std::to_string(c.batch_size) + " master=" + std::to_string(c.master_seed) +
                          " n=" + std::to_string(c.train_size) + " noise=" + std::to_string(c.noise);
  const auto path = c.out / ("pretrain-" + sha256_hex(key).substr(0, 12) + ".ssc1");
  if (std::filesystem::exists(path)) {
    return std::make_shared<const net::ParamStore<float>>(net::load_checkpoint(path).params);
  }
  auto task = task_spec(c, cell.skew_strength);
  task.class_shift = 1;
  auto clean = skew::gen_clean_synthetic(task, c.train_size, data_seed(c, "pretrain-data"));
  auto fully = clean;
  auto pd = skew::apply_frequency(std::move(clean), std::move(fully), {0, 1}, 0);
  cf::TrainPlan plan;
  plan.steps = steps;
  plan.batch_size = c.batch_size;
  plan.master_seed = data_seed(c, "pretrain");
  const auto preset = optim::preset(cell.optimizer);
  plan.optimizer = preset.optimizer;
  plan.warmup_share = preset.warmup_share;
  plan.min_lr = preset.optimizer.peak_lr * c.min_lr_ratio;
  log << "pretraining warm-start weights (" << steps << " steps) -> " << path.string() << "\n";
  auto model = cf::train_direct<float>(spec, pd, plan, cf::Role::kClean);
  std::filesystem::create_directories(c.out);
  net::save_checkpoint(path, model);
  return std::make_shared<const net::ParamStore<float>>(model.params());
}

std::filesystem::path store_path(const ExperimentConfig& c) { return c.out / "runs.csv"; }
std::filesystem::path manifest_path(const ExperimentConfig& c) {
  return c.out / "manifests.jsonl";
}

RunSummary run_counterfactual(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  const auto spec = net_for(c);
  const auto sets = family_sets(c, spec.blocks.size());
  const auto cells = expand_grid(c);
  std::filesystem::create_directories(c.out);
  StoreWriter writer(store_path(c), manifest_path(c));

  RunSummary summary;
  std::vector<Trial> pending;
  std::vector<CellData> data;
  data.reserve(cells.size());
  for (const auto& cell : cells) {
    std::vector<std::uint64_t> todo;
    const std::string none = InterventionSet::empty(spec.blocks.size()).canonical();
    for (auto seed : c.seeds) {
      bool done = writer.contains(run_id(cell, seed, RunRole::kCleanAnchor, none)) &&
                  writer.contains(run_id(cell, seed, RunRole::kSkewedAnchor, none));
      for (const auto& A : sets) {
        done = done && writer.contains(run_id(cell, seed, RunRole::kIntervenedC, A.canonical())) &&
               writer.contains(run_id(cell, seed, RunRole::kIntervenedS, A.canonical()));
      }
      if (done) {
        ++summary.trials_skipped;
      } else {
        todo.push_back(seed);
      }
    }
    if (todo.empty()) {
      data.emplace_back();
      continue;
    }
    data.push_back(build_cell_data(c, cell));
    const auto warm = warm_start(c, cell, log);
    for (auto seed : todo) pending.push_back({&cell, &data.back(), seed, warm});
  }

  std::mutex log_mu;
  std::atomic<std::size_t> written{0}, failed{0};
  run_parallel(pending.size(), c.workers, [&](std::size_t i) {
    const auto& trial = pending[i];
    std::vector<RunRecord> records;
    std::vector<std::string> manifests;
    if (c.precision == 64) {
      counterfactual_trial<double>(c, trial, sets, spec, records, manifests);
    } else {
      counterfactual_trial<float>(c, trial, sets, spec, records, manifests);
    }
    if (records.front().status != "ok") ++failed;
    written += writer.append(records, manifests);
    std::lock_guard lock(log_mu);
    log << "cell " << trial.cell->id << " seed " << trial.seed << ": clean "
        << records[0].err_clean.value() << " skewed " << records[1].err_clean.value() << " ("
        << records.size() << " models, " << records.front().status << ")\n";
  });
  summary.trials_run = pending.size();
  summary.records_written = written;
  summary.trials_failed = failed;
  return summary;
}

RunSummary run_interventions(const ExperimentConfig& c, std::ostream& log) {
  c.validate();
  if (std::find(c.interventions.begin(), c.interventions.end(), "freeze") != c.interventions.end()) {
    // Fail before any training when the freeze phases round to nothing.
    iv::FreezeConfig fc;
    fc.phase1_share = c.freeze_phase1;
    fc.phase2_share = c.freeze_phase2;
    (void)fc.phases(c.steps);
  }
  const auto spec = net_for(c);
  const auto cells = expand_grid(c);
  std::filesystem::create_directories(c.out);
  StoreWriter writer(store_path(c), manifest_path(c));
  const auto stored = read_store(store_path(c));
  std::vector<CellData> data;
  data.reserve(cells.size());
  std::vector<Trial> trials;
  for (const auto& cell : cells) {
    data.push_back(build_cell_data(c, cell));
    const auto warm = warm_start(c, cell, log);
    for (auto seed : c.seeds) trials.push_back({&cell, &data.back(), seed, warm});
  }
  std::atomic<std::size_t> written{0};
  std::mutex log_mu;
  run_parallel(trials.size(), c.workers, [&](std::size_t i) {
    if (c.precision == 64) {
      mitigation_trial<double>(c, trials[i], spec, stored, writer, written);
    } else {
      mitigation_trial<float>(c, trials[i], spec, stored, writer, written);
    }
    std::lock_guard lock(log_mu);
    log << "cell " << trials[i].cell->id << " seed " << trials[i].seed << ": interventions done\n";
  });
  RunSummary s;
  s.trials_run = trials.size();
  s.records_written = written;
  return s;
}

void train_one(const ExperimentConfig& c, cf::Role role, std::uint64_t seed,
               const std::filesystem::path& checkpoint, std::ostream& log) {
  c.validate();
  const auto cells = expand_grid(c);
  const auto& cell = cells.front();
  const auto data = build_cell_data(c, cell);
  const auto spec = net_for(c);
  const auto plan = plan_for(c, cell, seed, role, warm_start(c, cell, log));
  const auto model = cf::train_direct<float>(spec, data.train, plan, role);
  if (checkpoint.has_parent_path()) std::filesystem::create_directories(checkpoint.parent_path());
  net::save_checkpoint(checkpoint, model);
  log << "trained " << cf::role_name(role) << " model: clean-test error "
      << net::evaluate(model, data.test_clean.view()).error_rate() << ", fully-skewed-test error "
      << net::evaluate(model, data.test_fully_skewed.view()).error_rate() << " -> "
      << checkpoint.string() << "\n";
}

}  // namespace sscope::expcli
