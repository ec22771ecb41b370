#pragma once
#ifndef FAIREQUITY_CONFIG_HPP
#define FAIREQUITY_CONFIG_HPP

// Experiment configuration: a flat `key = value` text file. Unknown or
// repeated keys are errors. The canonical form (every key, table order,
// shortest round-trip numbers) feeds the config fingerprint.

#include <array>
#include <charconv>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <istream>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fairequity/data_fabric.hpp"
#include "fairequity/error.hpp"
#include "fairequity/fl_engine.hpp"
#include "fairequity/outlier_guard.hpp"
#include "fairequity/selector.hpp"

namespace fairequity {

enum class Policy { fairequity, random };

inline const char* to_string(Policy p) { return p == Policy::fairequity ? "fairequity" : "random"; }

inline Policy parse_policy(const std::string& s) {
  if (s == "fairequity") return Policy::fairequity;
  if (s == "random") return Policy::random;
  throw Error("harness_cli", "unknown policy '" + s + "' (expected fairequity or random)");
}

enum class TimingMode { simulated, measured };

inline const char* to_string(TimingMode t) { return t == TimingMode::simulated ? "simulated" : "measured"; }

inline TimingMode parse_timing(const std::string& s) {
  if (s == "simulated") return TimingMode::simulated;
  if (s == "measured") return TimingMode::measured;
  throw Error("harness_cli", "unknown timing mode '" + s + "'");
}

struct ExperimentConfig {
  SelectionConfig selection;
  GuardConfig guard;
  TrainConfig train;
  DatasetSpec data;
  std::uint32_t total_rounds = 100;
  Policy policy = Policy::fairequity;
  double availability = 1.0;  // per-client, per-round Bernoulli probability
  std::vector<std::uint64_t> seeds{1};

  // Scenario knobs.
  std::uint32_t test_per_class = 100;
  double noisy_fraction = 0.2;  // share of honest clients given label noise
  double noise_level = 0.3;
  std::uint32_t poisoned_clients = 0;
  PoisonMode poison_mode = PoisonMode::update_negate;

  // Round duration: simulated = slowest selected client's latency, where
  // latency_i = base * (1 + spread * u_i), u_i ~ U[0, 1) per client.
  TimingMode timing = TimingMode::simulated;
  double latency_base_s = 1.0;
  double latency_spread = 1.0;

  double target_accuracy = 0.85;  // A for RA_A / TA_A in comparisons
  std::uint32_t workers = 1;      // local-training threads

  std::uint64_t primary_seed() const { return seeds.front(); }

  /// Copy bound to a single seed; data and training streams derive from it.
  ExperimentConfig with_seed(std::uint64_t seed) const {
    ExperimentConfig c = *this;
    c.seeds = {seed};
    c.data.seed = seed;
    c.train.seed = seed;
    return c;
  }

  void validate() const {
    selection.validate();
    guard.validate();
    train.validate();
    data.validate(selection.total_clients);
    auto fail = [](const std::string& msg) { throw Error("harness_cli", "invalid ExperimentConfig: " + msg); };
    if (total_rounds < 1) fail("rounds must be >= 1");
    if (seeds.empty()) fail("at least one seed is required");
    if (!(availability >= 0.0 && availability <= 1.0)) fail("availability must lie in [0, 1]");
    if (test_per_class < 1) fail("test_per_class must be >= 1");
    if (!(noisy_fraction >= 0.0 && noisy_fraction <= 1.0)) fail("noisy_fraction must lie in [0, 1]");
    if (!(noise_level >= 0.0 && noise_level <= 1.0)) fail("noise_level must lie in [0, 1]");
    if (poisoned_clients > selection.total_clients) fail("more poisoned clients than clients");
    if (poisoned_clients > 0 && poison_mode == PoisonMode::none) fail("poison_mode none with poisoned clients");
    if (!(latency_base_s >= 0.0 && latency_spread >= 0.0)) fail("latency parameters must be >= 0");
    if (!(target_accuracy > 0.0 && target_accuracy <= 1.0)) fail("target_accuracy must lie in (0, 1]");
    if (workers < 1) fail("workers must be >= 1");
  }
};

namespace detail {

inline std::string format_double(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

template <typename T>
T parse_number(std::string_view key, std::string_view text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw Error("harness_cli", "bad value '" + std::string(text) + "' for key '" + std::string(key) + "'");
  return value;
}

inline bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw Error("harness_cli", "bad boolean '" + std::string(text) + "' for key '" + std::string(key) + "'");
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

struct ConfigField {
  std::string key;
  std::function<std::string(const ExperimentConfig&)> get;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  bool identifies_run = false;  // policy / seeds: ignored when matching datasets
};

template <typename Access>
ConfigField uint_field(std::string key, Access access) {
  return {key,
          [access](const ExperimentConfig& c) {
            return std::to_string(access(const_cast<ExperimentConfig&>(c)));
          },
          [access, key](ExperimentConfig& c, const std::string& v) {
            using T = std::remove_reference_t<decltype(access(c))>;
            access(c) = parse_number<T>(key, v);
          }};
}

template <typename Access>
ConfigField double_field(std::string key, Access access) {
  return {key, [access](const ExperimentConfig& c) { return format_double(access(const_cast<ExperimentConfig&>(c))); },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_number<double>(key, v); }};
}

template <typename Access>
ConfigField bool_field(std::string key, Access access) {
  return {key,
          [access](const ExperimentConfig& c) {
            return std::string(access(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
          },
          [access, key](ExperimentConfig& c, const std::string& v) { access(c) = parse_bool(key, v); }};
}

#define FE_ACCESS(member) [](ExperimentConfig& c) -> auto& { return c.member; }

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = [] {
    std::vector<ConfigField> f;
    f.push_back({"policy", [](const ExperimentConfig& c) { return std::string(to_string(c.policy)); },
                 [](ExperimentConfig& c, const std::string& v) { c.policy = parse_policy(v); }, true});
    f.push_back({"seeds",
                 [](const ExperimentConfig& c) {
                   std::string out;
                   for (std::size_t i = 0; i < c.seeds.size(); ++i) out += (i ? "," : "") + std::to_string(c.seeds[i]);
                   return out;
                 },
                 [](ExperimentConfig& c, const std::string& v) {
                   c.seeds.clear();
                   std::stringstream ss(v);
                   std::string item;
                   while (std::getline(ss, item, ','))
                     c.seeds.push_back(parse_number<std::uint64_t>("seeds", trim(item)));
                   if (c.seeds.empty()) throw Error("harness_cli", "seeds must list at least one seed");
                 },
                 true});
    f.push_back(uint_field("rounds", FE_ACCESS(total_rounds)));
    f.push_back(uint_field("clients", FE_ACCESS(selection.total_clients)));
    f.push_back(uint_field("per_round", FE_ACCESS(selection.per_round)));
    f.push_back(uint_field("n_cmax", FE_ACCESS(selection.max_selections)));
    f.push_back(uint_field("n_cmin", FE_ACCESS(selection.min_selections)));
    f.push_back(uint_field("gap_min", FE_ACCESS(selection.gap_min)));
    f.push_back(uint_field("gap_max", FE_ACCESS(selection.gap_max)));
    f.push_back(uint_field("lambda", FE_ACCESS(selection.lambda)));
    f.push_back(uint_field("lambda_max", FE_ACCESS(selection.lambda_max)));
    f.push_back(uint_field("overlooked_cap", FE_ACCESS(selection.overlooked_cap)));
    f.push_back(double_field("slots_fraction", FE_ACCESS(selection.slots_fraction)));
    f.push_back(double_field("acc_threshold_pct", FE_ACCESS(guard.accuracy_threshold_pct)));
    f.push_back(double_field("loss_threshold_pct", FE_ACCESS(guard.loss_threshold_pct)));
    f.push_back(uint_field("qualifying_rounds", FE_ACCESS(guard.qualifying_rounds)));
    f.push_back(uint_field("suspension_rounds", FE_ACCESS(guard.suspension_rounds)));
    f.push_back(bool_field("decay_on_clean", FE_ACCESS(guard.decay_on_clean)));
    f.push_back(uint_field("local_epochs", FE_ACCESS(train.local_epochs)));
    f.push_back(uint_field("batch_size", FE_ACCESS(train.batch_size)));
    f.push_back(double_field("local_lr", FE_ACCESS(train.local_lr)));
    f.push_back(double_field("global_lr", FE_ACCESS(train.global_lr)));
    f.push_back(double_field("global_lr_decay", FE_ACCESS(train.global_lr_decay)));
    f.push_back(bool_field("weighted_aggregation", FE_ACCESS(train.weighted_aggregation)));
    f.push_back(double_field("poison_scale", FE_ACCESS(train.poison_scale)));
    f.push_back(uint_field("num_classes", FE_ACCESS(data.num_classes)));
    f.push_back(uint_field("num_features", FE_ACCESS(data.num_features)));
    f.push_back(uint_field("samples_per_class", FE_ACCESS(data.samples_per_class)));
    f.push_back(uint_field("shards_per_client", FE_ACCESS(data.shards_per_client)));
    f.push_back(uint_field("shard_size", FE_ACCESS(data.shard_size)));
    f.push_back(double_field("class_separation", FE_ACCESS(data.class_separation)));
    f.push_back(double_field("shard_purity", FE_ACCESS(data.shard_purity)));
    f.push_back(uint_field("test_per_class", FE_ACCESS(test_per_class)));
    f.push_back(double_field("noisy_fraction", FE_ACCESS(noisy_fraction)));
    f.push_back(double_field("noise_level", FE_ACCESS(noise_level)));
    f.push_back(uint_field("poisoned_clients", FE_ACCESS(poisoned_clients)));
    f.push_back({"poison_mode", [](const ExperimentConfig& c) { return std::string(to_string(c.poison_mode)); },
                 [](ExperimentConfig& c, const std::string& v) { c.poison_mode = parse_poison_mode(v); }});
    f.push_back(double_field("availability", FE_ACCESS(availability)));
    f.push_back({"timing", [](const ExperimentConfig& c) { return std::string(to_string(c.timing)); },
                 [](ExperimentConfig& c, const std::string& v) { c.timing = parse_timing(v); }});
    f.push_back(double_field("latency_base_s", FE_ACCESS(latency_base_s)));
    f.push_back(double_field("latency_spread", FE_ACCESS(latency_spread)));
    f.push_back(double_field("target_accuracy", FE_ACCESS(target_accuracy)));
    f.push_back(uint_field("workers", FE_ACCESS(workers)));
    return f;
  }();
  return fields;
}

#undef FE_ACCESS

}  // namespace detail

/// Applies one `key = value` setting.
inline void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& f : detail::config_fields()) {
    if (f.key == key) {
      f.set(cfg, value);
      return;
    }
  }
  throw Error("harness_cli", "unknown config key '" + key + "'");
}

/// Parses a config file body on top of the defaults.
inline ExperimentConfig parse_config(std::istream& is) {
  ExperimentConfig cfg;
  std::set<std::string> seen;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    const std::string body = detail::trim(std::string_view(line).substr(0, hash));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw Error("harness_cli", "config line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    const std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (!seen.insert(key).second) throw Error("harness_cli", "config key '" + key + "' given twice");
    set_config_value(cfg, key, value);
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("harness_cli", "cannot open config '" + path + "'");
  return parse_config(in);
}

/// Every key in table order, one `key=value` per line.
inline std::string canonical_config(const ExperimentConfig& cfg, bool include_run_identity = true) {
  std::string out;
  for (const auto& f : detail::config_fields()) {
    if (!include_run_identity && f.identifies_run) continue;
    out += f.key + "=" + f.get(cfg) + "\n";
  }
  return out;
}

/// FNV-1a 64 of the canonical serialization, as 16 hex digits.
inline std::string config_fingerprint(const ExperimentConfig& cfg) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_config(cfg)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace fairequity

#endif  // FAIREQUITY_CONFIG_HPP
