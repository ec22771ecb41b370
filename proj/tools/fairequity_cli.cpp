// fairequity: run, compare and audit fair client-selection experiments.
//
//   fairequity run --config exp.cfg --out runs/a [--seed N] [--policy fairequity|random]
//   fairequity compare --runs runs/a runs/b ...
//   fairequity audit --run runs/a
//   fairequity dump-data --config exp.cfg --out data.txt [--seed N]

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fairequity/fairequity.hpp"

namespace fs = std::filesystem;
using namespace fairequity;

namespace {

int cmd_run(const std::string& config_path, const fs::path& out, std::optional<std::uint64_t> seed,
            const std::string& policy) {
  ExperimentConfig cfg = load_config(config_path);
  if (!policy.empty()) cfg.policy = parse_policy(policy);
  if (seed) cfg.seeds = {*seed};
  cfg.validate();

  const bool single = cfg.seeds.size() == 1;
  for (std::uint64_t s : cfg.seeds) {
    const RunLog log = run_experiment(cfg, s);
    const fs::path dir = single ? out : out / ("seed-" + std::to_string(s));
    write_run(log, dir);
    const auto& last = log.rounds.back();
    std::printf("%s seed=%llu rounds=%zu accuracy=%.4f loss=%.4f jfi=%.4f fingerprint=%s -> %s\n",
                to_string(cfg.policy), static_cast<unsigned long long>(s), log.rounds.size(), last.accuracy,
                last.loss, log.jfi, log.fingerprint.c_str(), dir.string().c_str());
  }
  return 0;
}

int cmd_compare(const std::vector<std::string>& dirs) {
  std::vector<RunSummary> runs;
  for (const auto& d : dirs) runs.push_back(load_run_summary(d));
  std::cout << to_csv(compare(runs));
  return 0;
}

int cmd_audit(const fs::path& dir) {
  const RunAudit audit = audit_run(dir);
  const auto& sel = audit.config.selection;
  std::printf("participation bounds N_Cmin=%u N_Cmax=%u over %u rounds\n", sel.min_selections, sel.max_selections,
              audit.config.total_rounds);
  std::printf("client_id,times_selected,status,cause\n");
  for (const auto& c : audit.report.clients) {
    const char* status = c.below_min ? "below_min" : c.above_max ? "above_max" : "ok";
    std::printf("%u,%u,%s,%s\n", c.client_id, c.times_selected, status, to_string(c.cause));
  }
  std::printf("violations=%u lower=%u upper=%u selector_attributed=%u\n", audit.report.violations(),
              audit.report.lower_violations, audit.report.upper_violations, audit.report.selector_attributed);
  return 0;
}

int cmd_dump_data(const std::string& config_path, const fs::path& out, std::optional<std::uint64_t> seed) {
  ExperimentConfig cfg = load_config(config_path);
  if (seed) cfg.seeds = {*seed};
  cfg = cfg.with_seed(cfg.primary_seed());
  cfg.validate();
  const auto clients = generate(cfg.data, cfg.selection.total_clients);
  std::ofstream os(out);
  if (!os) throw Error("data_fabric", "cannot write " + out.string());
  dump_dataset(os, cfg.data, clients);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fair client selection for federated learning: experiments, comparisons, audits"};
  app.require_subcommand(1);

  std::string config_path, out_dir, policy, audit_dir;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> run_dirs;

  auto* run = app.add_subcommand("run", "Run an experiment and write metrics.csv, fairness.json, events.log");
  run->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_option("--seed", seed, "Override the config seeds with a single seed");
  run->add_option("--policy", policy, "fairequity or random")->check(CLI::IsMember({"fairequity", "random"}));

  auto* cmp = app.add_subcommand("compare", "Median comparison table (CSV) across run directories");
  cmp->add_option("--runs", run_dirs, "Run directories")->required()->expected(1, -1);

  auto* audit = app.add_subcommand("audit", "Check N_Cmin <= T_i <= N_Cmax for a finished run");
  audit->add_option("--run", audit_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* dump = app.add_subcommand("dump-data", "Write the generated federated dataset as text");
  dump->add_option("--config", config_path, "Experiment config file")->required()->check(CLI::ExistingFile);
  dump->add_option("--out", out_dir, "Output file")->required();
  dump->add_option("--seed", seed, "Dataset seed");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir, seed, policy);
    if (*cmp) return cmd_compare(run_dirs);
    if (*audit) return cmd_audit(audit_dir);
    if (*dump) return cmd_dump_data(config_path, out_dir, seed);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: harness_cli: %s\n", e.what());
    return 2;
  }
  return 1;
}
