#include <gtest/gtest.h>

#include <filesystem>
#include <set>
#include <sstream>
#include <vector>

#include "fairequity/harness.hpp"

namespace fe = fairequity;
namespace fs = std::filesystem;

namespace {

fe::ExperimentConfig small_config() {
  std::istringstream text(R"(
    # tiny scenario
    clients = 20
    per_round = 4
    n_cmax = 6
    n_cmin = 1
    gap_min = 1
    gap_max = 5
    lambda = 3
    lambda_max = 1
    overlooked_cap = 2
    rounds = 12
    samples_per_class = 40
    shard_size = 10
    num_features = 5
    test_per_class = 20
    poisoned_clients = 1
  )");
  return fe::parse_config(text);
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("fairequity_test_" + name);
  fs::remove_all(dir);
  return dir;
}

}  // namespace

TEST(Config, ParsesOverridesOnTopOfDefaults) {
  const auto cfg = small_config();
  EXPECT_EQ(cfg.selection.total_clients, 20u);
  EXPECT_EQ(cfg.selection.per_round, 4u);
  EXPECT_EQ(cfg.poisoned_clients, 1u);
  EXPECT_EQ(cfg.guard.qualifying_rounds, fe::GuardConfig{}.qualifying_rounds);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Config, RejectsUnknownDuplicateAndMalformedLines) {
  std::istringstream unknown("clients = 10\nbogus = 1\n");
  EXPECT_THROW(fe::parse_config(unknown), fe::Error);
  std::istringstream dup("clients = 10\nclients = 12\n");
  EXPECT_THROW(fe::parse_config(dup), fe::Error);
  std::istringstream noeq("clients 10\n");
  EXPECT_THROW(fe::parse_config(noeq), fe::Error);
  std::istringstream badnum("clients = ten\n");
  EXPECT_THROW(fe::parse_config(badnum), fe::Error);
}

TEST(Config, CanonicalFormRoundTripsAndFingerprintIsStable) {
  auto cfg = small_config();
  cfg.seeds = {3, 4};
  cfg.train.local_lr = 0.05;
  const auto text = fe::canonical_config(cfg);
  std::istringstream in(text);
  const auto back = fe::parse_config(in);
  EXPECT_EQ(fe::canonical_config(back), text);
  EXPECT_EQ(fe::config_fingerprint(back), fe::config_fingerprint(cfg));
  EXPECT_EQ(fe::config_fingerprint(cfg).size(), 16u);

  auto other = cfg;
  other.guard.suspension_rounds += 1;
  EXPECT_NE(fe::config_fingerprint(other), fe::config_fingerprint(cfg));
}

TEST(Config, RunIdentityKeysAreExcludedFromDatasetKey) {
  auto a = small_config();
  auto b = a;
  b.policy = fe::Policy::random;
  b.seeds = {9};
  EXPECT_EQ(fe::canonical_config(a, false), fe::canonical_config(b, false));
  EXPECT_NE(fe::canonical_config(a), fe::canonical_config(b));
}

TEST(Config, ValidationNamesTheModule) {
  auto cfg = small_config();
  cfg.selection.min_selections = cfg.selection.max_selections + 1;
  try {
    cfg.validate();
    FAIL() << "expected an error";
  } catch (const fe::Error& e) {
    EXPECT_EQ(e.module(), "selector");
  }
}

TEST(RunExperiment, SingleRandomRoundSelectsPerRound) {
  auto cfg = small_config();
  cfg.total_rounds = 1;
  cfg.policy = fe::Policy::random;
  const auto log = fe::run_experiment(cfg);
  ASSERT_EQ(log.rounds.size(), 1u);
  EXPECT_EQ(log.rounds[0].plan.selected.size(), 4u);
  std::uint32_t total = 0;
  for (const auto& f : log.fairness) total += f.participation;
  EXPECT_EQ(total, 4u);
}

TEST(RunExperiment, FairPolicyRespectsCapAndSuspensions) {
  const auto cfg = small_config();
  const auto log = fe::run_experiment(cfg);
  ASSERT_EQ(log.rounds.size(), 12u);
  for (const auto& r : log.tracker) EXPECT_LE(r.times_selected, cfg.selection.max_selections);
  std::vector<fe::Round> until(20, 0);
  for (const auto& round : log.rounds) {
    for (fe::ClientId id : round.plan.selected) EXPECT_LT(until[id], round.round) << "client " << id;
    for (const auto& s : round.suspensions) until[s.client_id] = s.until;
  }
  EXPECT_GT(log.jfi, 0.0);
  EXPECT_LE(log.jfi, 1.0);
}

TEST(RunExperiment, MetricsAreByteIdenticalAcrossRunsAndWorkerCounts) {
  auto cfg = small_config();
  const auto a = fe::metrics_csv(fe::run_experiment(cfg));
  const auto b = fe::metrics_csv(fe::run_experiment(cfg));
  cfg.workers = 3;
  const auto c = fe::metrics_csv(fe::run_experiment(cfg));
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
  EXPECT_NE(a, fe::metrics_csv(fe::run_experiment(cfg, 2)));
}

TEST(RunExperiment, SimulatedElapsedIsSlowestLatencyPerRound) {
  auto cfg = small_config();
  cfg.latency_spread = 0.0;
  cfg.latency_base_s = 2.0;
  const auto log = fe::run_experiment(cfg);
  for (std::size_t i = 0; i < log.rounds.size(); ++i) EXPECT_DOUBLE_EQ(log.rounds[i].elapsed_s, 2.0 * (i + 1));
}

TEST(RunExperiment, InvalidConfigIsReportedBeforeTraining) {
  auto cfg = small_config();
  cfg.selection.per_round = 0;
  EXPECT_THROW(fe::run_experiment(cfg), fe::Error);
}

TEST(RunExperiment, DivergenceIsReportedWithRoundAndModule) {
  auto cfg = small_config();
  cfg.train.local_lr = 1e200;
  cfg.data.class_separation = 1e150;
  try {
    fe::run_experiment(cfg);
    FAIL() << "expected divergence";
  } catch (const fe::Error& e) {
    EXPECT_EQ(e.module(), "fl_engine");
    EXPECT_NE(std::string(e.what()).find("round 1"), std::string::npos);
  }
}

TEST(Exports, EventsLogUsesFixedReasonStrings) {
  auto cfg = small_config();
  cfg.total_rounds = 30;
  cfg.poisoned_clients = 3;
  cfg.guard.qualifying_rounds = 1;
  const auto log = fe::run_experiment(cfg);
  const std::set<std::string> types{"select", "underfilled", "flag", "suspend"};
  const std::set<std::string> reasons{"unutilized", "overlooked", "random", "pool_exhausted", "ACC_TH", "LOSS_TH"};
  std::istringstream in(fe::events_log(log));
  std::string line;
  std::size_t selects = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> parts;
    std::stringstream ss(line);
    for (std::string p; std::getline(ss, p, ',');) parts.push_back(p);
    ASSERT_EQ(parts.size(), 4u) << line;
    EXPECT_TRUE(types.count(parts[1])) << line;
    EXPECT_TRUE(reasons.count(parts[3])) << line;
    selects += parts[1] == "select";
  }
  std::size_t expected = 0;
  for (const auto& r : log.rounds) expected += r.plan.selected.size();
  EXPECT_EQ(selects, expected);
}

TEST(Exports, WriteRunProducesLoadableSummary) {
  const auto dir = scratch("write_run");
  const auto log = fe::run_experiment(small_config());
  fe::write_run(log, dir);
  for (const char* f : {"metrics.csv", "fairness.json", "events.log", "config.fingerprint", "config.txt", "tracker.csv"})
    EXPECT_TRUE(fs::exists(dir / f)) << f;

  const auto loaded = fe::load_run_summary(dir);
  const auto direct = fe::summarize(log);
  EXPECT_EQ(loaded.policy, direct.policy);
  EXPECT_EQ(loaded.seed, direct.seed);
  EXPECT_EQ(loaded.dataset_key, direct.dataset_key);
  EXPECT_DOUBLE_EQ(loaded.jfi, direct.jfi);
  EXPECT_NEAR(loaded.max_accuracy, direct.max_accuracy, 1e-6);
  EXPECT_EQ(loaded.rounds_to_accuracy, direct.rounds_to_accuracy);
  EXPECT_EQ(fe::read_file(dir / "config.fingerprint"), log.fingerprint + "\n");
  fs::remove_all(dir);
}

TEST(Compare, IdenticalConfigsGiveIdenticalRows) {
  auto cfg = small_config();
  cfg.seeds = {1, 2};
  auto twin = cfg;
  twin.policy = fe::Policy::random;
  auto twin2 = twin;
  twin2.policy = fe::Policy::fairequity;
  const std::vector<fe::ExperimentConfig> configs{cfg, twin2};
  const auto table = fe::compare_configs(configs);
  ASSERT_EQ(table.rows.size(), 1u);
  EXPECT_EQ(table.rows[0].runs, 4u);

  std::vector<fe::RunSummary> runs;
  for (std::uint64_t s : {1, 2}) {
    runs.push_back(fe::summarize(fe::run_experiment(cfg, s)));
    runs.push_back(fe::summarize(fe::run_experiment(twin, s)));
  }
  const auto both = fe::compare(runs);
  ASSERT_EQ(both.rows.size(), 2u);
  EXPECT_EQ(both.rows[0].policy, "fairequity");
  EXPECT_EQ(both.rows[1].policy, "random");
  const auto csv = fe::to_csv(both);
  EXPECT_EQ(fe::to_csv(fe::compare(runs)), csv);
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "policy,runs,jfi,max_accuracy,rounds_to_accuracy,time_to_accuracy,final_loss");
}

TEST(Compare, RefusesMismatchedScenariosAndSingleRuns) {
  auto a = small_config();
  auto b = a;
  b.data.class_separation = 2.0;
  std::vector<fe::RunSummary> runs{fe::summarize(fe::run_experiment(a)), fe::summarize(fe::run_experiment(b))};
  EXPECT_THROW(fe::compare(runs), fe::Error);
  runs.pop_back();
  EXPECT_THROW(fe::compare(runs), fe::Error);
}

TEST(Compare, UnreachedTargetIsNA) {
  auto cfg = small_config();
  cfg.target_accuracy = 1.0;
  cfg.seeds = {1, 2};
  const std::vector<fe::ExperimentConfig> configs{cfg};
  const auto csv = fe::to_csv(fe::compare_configs(configs));
  EXPECT_NE(csv.find(",NA,NA,"), std::string::npos) << csv;
}

TEST(Audit, WrittenRunAuditsClean) {
  const auto dir = scratch("audit");
  auto cfg = small_config();
  cfg.total_rounds = 40;
  fe::write_run(fe::run_experiment(cfg), dir);
  const auto audit = fe::audit_run(dir);
  EXPECT_EQ(audit.report.clients.size(), 20u);
  for (const auto& c : audit.report.clients) {
    EXPECT_LE(c.times_selected, cfg.selection.max_selections);
    EXPECT_NE(c.cause, fe::ViolationCause::capacity);
    EXPECT_NE(c.cause, fe::ViolationCause::selector);
  }
  fs::remove_all(dir);
}
