// sscope: experiment runner for counterfactual block-wise training.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdlib>
#include <fstream>
#include <iostream>

#include "sscope/error.hpp"
#include "sscope/expcli/analysis.hpp"
#include "sscope/expcli/config.hpp"
#include "sscope/expcli/runner.hpp"
#include "sscope/expcli/store.hpp"

namespace {

using namespace sscope;
using namespace sscope::expcli;

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> out;
  std::optional<int> precision;
  std::optional<std::string> family;
  bool debug_sync = false;
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config_path, "experiment config file");
  app->add_option("--seed", c.seed, "master seed");
  app->add_option("--workers", c.workers, "parallel trials")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory (SSCOPE_OUT overrides)");
  app->add_option("--precision", c.precision, "32 or 64")->check(CLI::IsMember({32, 64}));
  app->add_option("--family", c.family, "intervention-set family")
      ->check(CLI::IsMember({"single", "suffix"}));
  app->add_flag("--debug-sync", c.debug_sync, "check shared-block equality every step");
}

ExperimentConfig resolve(const Common& c) {
  ExperimentConfig cfg = c.config_path.empty() ? ExperimentConfig{} : load_config(c.config_path);
  if (c.seed) cfg.master_seed = *c.seed;
  if (c.workers) cfg.workers = *c.workers;
  if (c.out) cfg.out = *c.out;
  if (const char* env = std::getenv("SSCOPE_OUT"); env && *env) cfg.out = env;
  if (c.precision) cfg.precision = *c.precision;
  if (c.family) cfg.family = *c.family;
  if (c.debug_sync) cfg.debug_sync = true;
  cfg.validate();
  return cfg;
}

std::vector<RunRecord> load_store(const ExperimentConfig& cfg) {
  const auto path = store_path(cfg);
  if (!std::filesystem::exists(path)) throw std::runtime_error("no results store at " + path.string());
  return read_store(path);
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path);
  os << text;
  if (!os) throw std::runtime_error("failed writing " + path.string());
}

void print_summary(const RunSummary& s) {
  std::cout << "trials run " << s.trials_run << ", skipped " << s.trials_skipped << ", failed "
            << s.trials_failed << ", records written " << s.records_written << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterfactual block-wise training experiments"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("gen-data", "write SSD1 datasets for every grid cell");
  std::string data_dir;
  gen->add_option("--dir", data_dir, "target directory (default <out>/data)");

  auto* train = app.add_subcommand("train", "train one network and save an SSC1 checkpoint");
  std::string role = "clean";
  std::uint64_t train_seed = 1;
  std::string ckpt;
  train->add_option("--role", role, "training data role")->check(CLI::IsMember({"clean", "skewed"}));
  train->add_option("--trial-seed", train_seed, "seed index of the trial");
  train->add_option("--checkpoint", ckpt, "output path (default <out>/<role>.ssc1)");

  auto* cfact = app.add_subcommand("counterfactual", "train anchors and intervened models over the grid");
  auto* metrics_cmd = app.add_subcommand("metrics", "contribution records and increase-rate profiles");
  auto* stats_cmd = app.add_subcommand("stats", "significance tests, variance decomposition, regression");
  auto* intervene = app.add_subcommand("intervene", "retrain skewed models with block interventions");
  auto* report = app.add_subcommand("report", "summary tables from the results store");
  std::string format = "markdown";
  for (auto* sub : {stats_cmd, report}) {
    sub->add_option("--format", format, "markdown or plain")->check(CLI::IsMember({"markdown", "plain"}));
  }
  for (auto* sub : {gen, train, cfact, metrics_cmd, stats_cmd, intervene, report}) add_common(sub, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    const auto cfg = resolve(common);
    const auto fmt = format == "plain" ? ReportFormat::kPlain : ReportFormat::kMarkdown;
    if (gen->parsed()) {
      const auto dir = data_dir.empty() ? cfg.out / "data" : std::filesystem::path(data_dir);
      for (const auto& p : gen_data(cfg, dir)) std::cout << p.string() << "\n";
    } else if (train->parsed()) {
      const auto r = role == "clean" ? cf::Role::kClean : cf::Role::kSkewed;
      const auto path = ckpt.empty() ? cfg.out / (role + ".ssc1") : std::filesystem::path(ckpt);
      train_one(cfg, r, train_seed, path, std::cerr);
      std::cout << path.string() << "\n";
    } else if (cfact->parsed()) {
      print_summary(run_counterfactual(cfg, std::cerr));
    } else if (intervene->parsed()) {
      print_summary(run_interventions(cfg, std::cerr));
    } else if (metrics_cmd->parsed()) {
      const auto records = load_store(cfg);
      const auto trials = compute_metrics(records, cfg.gap_floor);
      write_metrics(trials, cfg.out);
      std::size_t profiles = 0;
      for (const auto& t : trials) profiles += t.profile.has_value();
      std::cout << trials.size() << " trials, " << profiles << " complete suffix profiles -> "
                << (cfg.out / "contributions.csv").string() << ", "
                << (cfg.out / "profiles.csv").string() << "\n";
    } else if (stats_cmd->parsed()) {
      const auto r = build_stats(load_store(cfg), fmt, cfg.gap_floor);
      write_text(cfg.out / "stats.manifest.json", r.manifest_json);
      std::cout << r.text;
    } else if (report->parsed()) {
      const auto r = build_report(load_store(cfg), fmt, cfg.gap_floor);
      write_text(cfg.out / "report.manifest.json", r.manifest_json);
      std::cout << r.text;
    }
    return 0;
  } catch (const std::invalid_argument& e) {  // ConfigError, UsageError, ShapeError
    std::cerr << "sscope: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "sscope: " << e.what() << "\n";
    return 2;
  }
}
