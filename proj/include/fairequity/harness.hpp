#pragma once
#ifndef FAIREQUITY_HARNESS_HPP
#define FAIREQUITY_HARNESS_HPP

// Round loop: availability draw -> selection -> local training ->
// aggregation -> evaluation -> outlier guard -> tracker update -> metrics.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "fairequity/config.hpp"
#include "fairequity/data_fabric.hpp"
#include "fairequity/error.hpp"
#include "fairequity/fl_engine.hpp"
#include "fairequity/metrics.hpp"
#include "fairequity/outlier_guard.hpp"
#include "fairequity/random.hpp"
#include "fairequity/selector.hpp"

namespace fairequity {

struct RoundReport {
  Round round = 0;
  RoundPlan plan;
  double accuracy = 0.0;
  double loss = 0.0;
  double elapsed_s = 0.0;  // cumulative
  std::optional<FlagReason> flag;
  std::vector<Suspension> suspensions;
  std::uint32_t n_suspended = 0;  // clients serving a suspension this round
};

struct ClientFairness {
  ClientId client_id = 0;
  std::uint32_t participation = 0;  // S_i
  double quality = 1.0;             // Q_i
  std::uint32_t n_class = 0;
  double p_noisy = 0.0;
  bool poisoned = false;

  double ratio() const { return participation / quality; }
};

struct RunLog {
  ExperimentConfig config;  // bound to `seed`
  std::uint64_t seed = 0;
  std::string fingerprint;
  std::vector<RoundReport> rounds;
  std::vector<ClientTrackerRecord> tracker;
  SuspicionLedger ledger{0};
  std::vector<ClientFairness> fairness;
  double jfi = 0.0;
  ConvergenceRecord convergence;
  ModelParams final_params;
};

namespace detail {

enum HarnessStream : std::uint64_t { scenario = 101, availability_draw, selection_draw, training, latency };

struct Scenario {
  std::vector<ClientDataset> clients;
  std::vector<Sample> test;
  std::vector<double> latency_s;
};

inline Scenario build_scenario(const ExperimentConfig& cfg) {
  const std::uint64_t seed = cfg.primary_seed();
  const std::uint32_t k = cfg.selection.total_clients;
  Scenario sc;
  sc.clients = generate(cfg.data, k);
  sc.test = generate_test_set(cfg.data, cfg.test_per_class);

  // The first `poisoned_clients` of a random permutation are malicious, the
  // next round(noisy_fraction * honest) get label noise.
  std::vector<ClientId> order(k);
  for (ClientId i = 0; i < k; ++i) order[i] = i;
  Rng rng(derive_seed(seed, scenario));
  rng.shuffle(std::span<ClientId>(order));
  const std::uint32_t honest = k - cfg.poisoned_clients;
  const auto noisy = static_cast<std::uint32_t>(std::lround(cfg.noisy_fraction * honest));
  for (std::uint32_t i = 0; i < k; ++i) {
    auto& c = sc.clients[order[i]];
    const std::uint64_t client_seed = derive_seed(seed, scenario, c.client_id);
    if (i < cfg.poisoned_clients)
      c = mark_poisoned(std::move(c), cfg.poison_mode, cfg.data.num_classes, client_seed);
    else if (i < cfg.poisoned_clients + noisy && cfg.noise_level > 0.0)
      c = inject_label_noise(std::move(c), cfg.noise_level, cfg.data.num_classes, client_seed);
  }

  Rng lat(derive_seed(seed, latency));
  sc.latency_s.resize(k);
  for (auto& l : sc.latency_s) l = cfg.latency_base_s * (1.0 + cfg.latency_spread * lat.uniform());
  return sc;
}

template <Model M>
std::vector<LocalUpdate> train_selected(const M& model, const ModelParams& global, const Scenario& sc,
                                        const RoundPlan& plan, const ExperimentConfig& cfg) {
  std::vector<LocalUpdate> updates(plan.selected.size());
  auto train_one = [&](const M& m, std::size_t i) {
    const ClientId id = plan.selected[i];
    updates[i] = local_train(m, global, sc.clients[id], cfg.train,
                             derive_seed(cfg.train.seed, training, plan.round_k, id));
  };
  const std::size_t workers = std::min<std::size_t>(cfg.workers, plan.selected.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < updates.size(); ++i) train_one(model, i);
    return updates;
  }
  // Per-client seeds make the result independent of the worker split.
  std::vector<std::exception_ptr> errors(workers);
  {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          const M local_model = model;
          for (std::size_t i = w; i < updates.size(); i += workers) train_one(local_model, i);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return updates;
}

}  // namespace detail

/// Runs one seed of an experiment. Throws fairequity::Error naming the
/// failing module and round.
inline RunLog run_experiment(const ExperimentConfig& base, std::optional<std::uint64_t> seed_override = std::nullopt) {
  const std::uint64_t seed = seed_override.value_or(base.primary_seed());
  const ExperimentConfig cfg = base.with_seed(seed);
  cfg.validate();

  RunLog log;
  log.config = cfg;
  log.seed = seed;
  log.fingerprint = config_fingerprint(cfg);

  const auto sc = detail::build_scenario(cfg);
  const SoftmaxRegression model(cfg.data.num_classes, cfg.data.num_features);
  const std::uint32_t k = cfg.selection.total_clients;
  const bool fair = cfg.policy == Policy::fairequity;
  const std::uint32_t cap = fair ? cfg.selection.max_selections : std::numeric_limits<std::uint32_t>::max();

  ModelParams params = model.zeros();
  auto records = make_tracker(k);
  SuspicionLedger ledger(k);
  double elapsed = 0.0;

  for (Round round = 1; round <= cfg.total_rounds; ++round) {
    const auto wall_start = std::chrono::steady_clock::now();
    std::string stage = "selector";
    try {
      Rng avail(derive_seed(seed, detail::availability_draw, round));
      std::uint32_t n_suspended = 0;
      for (auto& r : records) {
        r.available = cfg.availability >= 1.0 || avail.bernoulli(cfg.availability);
        r.suspended_until = ledger.suspension_end_or_zero(r.client_id);
        n_suspended += r.is_suspended(round);
      }

      Rng select_rng(derive_seed(seed, detail::selection_draw, round));
      RoundReport report;
      report.round = round;
      report.n_suspended = n_suspended;
      report.plan = fair ? select_round(records, cfg.selection, round, select_rng)
                         : select_random(records, cfg.selection.per_round, round, select_rng);

      stage = "fl_engine";
      if (!report.plan.selected.empty()) {
        const auto updates = detail::train_selected(model, params, sc, report.plan, cfg);
        params = aggregate(params, updates, cfg.train.global_lr_at(round - 1), cfg.train.weighted_aggregation);
      }
      const auto eval = evaluate(model, params, sc.test);
      report.accuracy = eval.accuracy;
      report.loss = eval.loss;

      if (fair) {
        stage = "outlier_guard";
        const auto verdict = ledger.record_round({round, eval.accuracy, eval.loss, report.plan.selected}, cfg.guard);
        report.flag = verdict.reason;
        report.suspensions = verdict.newly_suspended;
      }

      stage = "selector";
      records = update_tracker(std::move(records), report.plan, cap);

      stage = "metrics";
      if (cfg.timing == TimingMode::simulated) {
        double slowest = 0.0;
        for (ClientId id : report.plan.selected) slowest = std::max(slowest, sc.latency_s[id]);
        elapsed += slowest;
      } else {
        elapsed += std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
      }
      report.elapsed_s = elapsed;
      log.convergence.append({round, elapsed, report.accuracy, report.loss});
      log.rounds.push_back(std::move(report));
    } catch (const Error& e) {
      std::string what = e.what();
      what.erase(0, e.module().size() + 2);
      throw Error(e.module(), "round " + std::to_string(round) + ": " + what);
    } catch (const std::exception& e) {
      throw Error(stage, "round " + std::to_string(round) + ": " + e.what());
    }
  }

  for (const auto& c : sc.clients) {
    ClientFairness f;
    f.client_id = c.client_id;
    f.participation = records[c.client_id].times_selected;
    f.n_class = c.true_n_class;
    f.p_noisy = c.true_p_noisy;
    f.poisoned = c.poisoned;
    f.quality = data_quality(c.true_n_class, c.true_p_noisy, cfg.data.num_classes);
    log.fairness.push_back(f);
  }
  std::vector<FairnessInput> inputs;
  for (const auto& f : log.fairness) inputs.push_back({static_cast<double>(f.participation), f.quality});
  log.jfi = jain_fairness_index(inputs);
  log.tracker = std::move(records);
  log.ledger = std::move(ledger);
  log.final_params = std::move(params);
  return log;
}

// --- exports ---------------------------------------------------------------

inline std::string metrics_csv(const RunLog& log) {
  std::string out = "round,accuracy,loss,elapsed_s,n_selected,n_suspended\n";
  char buf[160];
  for (const auto& r : log.rounds) {
    std::snprintf(buf, sizeof buf, "%u,%.6f,%.8f,%.4f,%zu,%u\n", r.round, r.accuracy, r.loss, r.elapsed_s,
                  r.plan.selected.size(), r.n_suspended);
    out += buf;
  }
  return out;
}

inline nlohmann::json fairness_json(const RunLog& log) {
  nlohmann::json j;
  j["policy"] = to_string(log.config.policy);
  j["seed"] = log.seed;
  j["jfi"] = log.jfi;
  auto& clients = j["clients"] = nlohmann::json::array();
  for (const auto& f : log.fairness)
    clients.push_back({{"client_id", f.client_id},
                       {"S", f.participation},
                       {"Q", f.quality},
                       {"r", f.ratio()},
                       {"n_class", f.n_class},
                       {"p_noisy", f.p_noisy},
                       {"poisoned", f.poisoned}});
  return j;
}

/// One event per line: round,type,client_id,reason.
inline std::string events_log(const RunLog& log) {
  std::ostringstream os;
  for (const auto& r : log.rounds) {
    for (ClientId id : r.plan.forced_unutilized) os << r.round << ",select," << id << ",unutilized\n";
    for (ClientId id : r.plan.forced_overlooked) os << r.round << ",select," << id << ",overlooked\n";
    for (ClientId id : r.plan.random_fill) os << r.round << ",select," << id << ",random\n";
    if (r.plan.underfilled) os << r.round << ",underfilled,-,pool_exhausted\n";
    if (r.flag)
      for (ClientId id : r.plan.selected) os << r.round << ",flag," << id << ',' << to_string(*r.flag) << '\n';
    for (const auto& s : r.suspensions)
      os << r.round << ",suspend," << s.client_id << ',' << to_string(s.reason) << '\n';
  }
  return os.str();
}

inline std::string tracker_csv(std::span<const ClientTrackerRecord> records) {
  std::ostringstream os;
  os << "client_id,times_selected,gap,ever_selected,suspended_until,rounds_suspended,rounds_unavailable\n";
  for (const auto& r : records)
    os << r.client_id << ',' << r.times_selected << ',' << r.gap << ',' << (r.ever_selected ? 1 : 0) << ','
       << r.suspended_until << ',' << r.rounds_suspended << ',' << r.rounds_unavailable << '\n';
  return os.str();
}

inline void write_file(const std::filesystem::path& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("harness_cli", "cannot write " + path.string());
  out << body;
}

/// Writes metrics.csv, fairness.json, events.log, config.fingerprint,
/// config.txt and tracker.csv into `dir`.
inline void write_run(const RunLog& log, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_file(dir / "metrics.csv", metrics_csv(log));
  write_file(dir / "fairness.json", fairness_json(log).dump(2) + "\n");
  write_file(dir / "events.log", events_log(log));
  write_file(dir / "config.fingerprint", log.fingerprint + "\n");
  write_file(dir / "config.txt", canonical_config(log.config));
  write_file(dir / "tracker.csv", tracker_csv(log.tracker));
}

// --- comparison ------------------------------------------------------------

struct RunSummary {
  std::string policy;
  std::uint64_t seed = 0;
  std::string dataset_key;  // canonical config minus policy/seeds
  double jfi = 0.0;
  double max_accuracy = 0.0;
  std::optional<Round> rounds_to_accuracy;
  std::optional<double> time_to_accuracy;
  double final_loss = 0.0;
  double target_accuracy = 0.0;
};

inline RunSummary summarize(const RunLog& log) {
  RunSummary s;
  s.policy = to_string(log.config.policy);
  s.seed = log.seed;
  s.dataset_key = canonical_config(log.config, false);
  s.jfi = log.jfi;
  s.max_accuracy = max_accuracy(log.convergence);
  s.target_accuracy = log.config.target_accuracy;
  s.rounds_to_accuracy = rounds_to_accuracy(log.convergence, s.target_accuracy);
  s.time_to_accuracy = time_to_accuracy(log.convergence, s.target_accuracy);
  s.final_loss = log.convergence.rounds.empty() ? 0.0 : log.convergence.rounds.back().loss;
  return s;
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("harness_cli", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Rebuilds a RunSummary from a directory written by write_run.
inline RunSummary load_run_summary(const std::filesystem::path& dir) {
  std::istringstream cfg_text(read_file(dir / "config.txt"));
  const ExperimentConfig cfg = parse_config(cfg_text);
  const auto fairness = nlohmann::json::parse(read_file(dir / "fairness.json"));

  ConvergenceRecord record;
  std::istringstream metrics(read_file(dir / "metrics.csv"));
  std::string line;
  std::getline(metrics, line);
  while (std::getline(metrics, line)) {
    if (line.empty()) continue;
    RoundMetric m;
    if (std::sscanf(line.c_str(), "%u,%lf,%lf,%lf", &m.round, &m.accuracy, &m.loss, &m.elapsed_s) != 4)
      throw Error("harness_cli", "bad metrics.csv row in " + dir.string());
    record.append(m);
  }

  RunSummary s;
  s.policy = to_string(cfg.policy);
  s.seed = cfg.primary_seed();
  s.dataset_key = canonical_config(cfg, false);
  s.jfi = fairness.at("jfi").get<double>();
  s.max_accuracy = max_accuracy(record);
  s.target_accuracy = cfg.target_accuracy;
  s.rounds_to_accuracy = rounds_to_accuracy(record, s.target_accuracy);
  s.time_to_accuracy = time_to_accuracy(record, s.target_accuracy);
  s.final_loss = record.rounds.empty() ? 0.0 : record.rounds.back().loss;
  return s;
}

struct ComparisonRow {
  std::string policy;
  std::size_t runs = 0;
  double jfi = 0.0;  // medians over runs from here on
  double max_accuracy = 0.0;
  double rounds_to_accuracy = 0.0;  // +inf when the median run never got there
  double time_to_accuracy = 0.0;
  double final_loss = 0.0;
};

struct ComparisonTable {
  double target_accuracy = 0.0;
  std::vector<ComparisonRow> rows;  // policies in order of first appearance
};

/// Aligns runs by policy and reports per-policy medians. All runs must share
/// everything except policy and seed.
inline ComparisonTable compare(std::span<const RunSummary> runs) {
  if (runs.size() < 2) throw Error("harness_cli", "compare needs at least two runs");
  for (const auto& r : runs)
    if (r.dataset_key != runs.front().dataset_key)
      throw Error("harness_cli", "runs differ in more than policy/seed; refusing to compare");

  ComparisonTable table;
  table.target_accuracy = runs.front().target_accuracy;
  std::vector<std::string> order;
  std::map<std::string, std::vector<const RunSummary*>> groups;
  for (const auto& r : runs) {
    if (!groups.count(r.policy)) order.push_back(r.policy);
    groups[r.policy].push_back(&r);
  }
  constexpr double inf = std::numeric_limits<double>::infinity();
  for (const auto& policy : order) {
    const auto& g = groups[policy];
    auto med = [&](auto field) {
      std::vector<double> v;
      for (const auto* r : g) v.push_back(field(*r));
      return median(std::move(v));
    };
    ComparisonRow row;
    row.policy = policy;
    row.runs = g.size();
    row.jfi = med([](const RunSummary& r) { return r.jfi; });
    row.max_accuracy = med([](const RunSummary& r) { return r.max_accuracy; });
    row.rounds_to_accuracy =
        med([&](const RunSummary& r) { return r.rounds_to_accuracy ? double(*r.rounds_to_accuracy) : inf; });
    row.time_to_accuracy = med([&](const RunSummary& r) { return r.time_to_accuracy.value_or(inf); });
    row.final_loss = med([](const RunSummary& r) { return r.final_loss; });
    table.rows.push_back(row);
  }
  return table;
}

inline std::string to_csv(const ComparisonTable& table) {
  std::string out = "policy,runs,jfi,max_accuracy,rounds_to_accuracy,time_to_accuracy,final_loss\n";
  auto num = [](double v, const char* fmt) {
    if (!std::isfinite(v)) return std::string("NA");
    char buf[64];
    std::snprintf(buf, sizeof buf, fmt, v);
    return std::string(buf);
  };
  for (const auto& r : table.rows)
    out += r.policy + "," + std::to_string(r.runs) + "," + num(r.jfi, "%.6f") + "," + num(r.max_accuracy, "%.6f") +
           "," + num(r.rounds_to_accuracy, "%.1f") + "," + num(r.time_to_accuracy, "%.4f") + "," +
           num(r.final_loss, "%.8f") + "\n";
  return out;
}

/// Convenience: run every config (one run per listed seed) and compare.
inline ComparisonTable compare_configs(std::span<const ExperimentConfig> configs) {
  std::vector<RunSummary> runs;
  for (const auto& c : configs)
    for (std::uint64_t seed : c.seeds) runs.push_back(summarize(run_experiment(c, seed)));
  return compare(runs);
}

// --- audit -----------------------------------------------------------------

inline std::vector<ClientTrackerRecord> parse_tracker_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  std::getline(is, line);
  std::vector<ClientTrackerRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    ClientTrackerRecord r;
    unsigned ever = 0;
    if (std::sscanf(line.c_str(), "%u,%u,%u,%u,%u,%u,%u", &r.client_id, &r.times_selected, &r.gap, &ever,
                    &r.suspended_until, &r.rounds_suspended, &r.rounds_unavailable) != 7)
      throw Error("harness_cli", "bad tracker.csv row '" + line + "'");
    r.ever_selected = ever != 0;
    records.push_back(r);
  }
  return records;
}

struct RunAudit {
  ExperimentConfig config;
  AuditReport report;
};

inline RunAudit audit_run(const std::filesystem::path& dir) {
  std::istringstream cfg_text(read_file(dir / "config.txt"));
  RunAudit a;
  a.config = parse_config(cfg_text);
  const auto records = parse_tracker_csv(read_file(dir / "tracker.csv"));
  a.report = end_of_training_audit(records, a.config.selection, a.config.total_rounds);
  return a;
}

}  // namespace fairequity

#endif  // FAIREQUITY_HARNESS_HPP
