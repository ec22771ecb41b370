#pragma once
#ifndef FAIREQUITY_DATA_FABRIC_HPP
#define FAIREQUITY_DATA_FABRIC_HPP

// Synthetic federated data: class-conditional Gaussian clusters, sorted by
// class, cut into shards and dealt to clients at random. Label noise and
// poisoning are layered on per client.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fairequity/error.hpp"
#include "fairequity/random.hpp"
#include "fairequity/selector.hpp"

namespace fairequity {

using Label = std::uint32_t;

struct Sample {
  std::vector<double> x;
  Label label = 0;
};

enum class PoisonMode { none, label_flip_all, update_negate };

inline const char* to_string(PoisonMode m) {
  switch (m) {
    case PoisonMode::none: return "none";
    case PoisonMode::label_flip_all: return "label_flip_all";
    case PoisonMode::update_negate: return "update_negate";
  }
  return "unknown";
}

inline PoisonMode parse_poison_mode(const std::string& s) {
  if (s == "none") return PoisonMode::none;
  if (s == "label_flip_all") return PoisonMode::label_flip_all;
  if (s == "update_negate") return PoisonMode::update_negate;
  throw Error("data_fabric", "unknown poison mode '" + s + "'");
}

struct ClientDataset {
  ClientId client_id = 0;
  std::vector<Sample> samples;
  std::uint32_t true_n_class = 0;  // distinct labels before any noise
  double true_p_noisy = 0.0;       // realized fraction of flipped labels
  bool poisoned = false;
  PoisonMode poison_mode = PoisonMode::none;
};

struct DatasetSpec {
  std::uint32_t num_classes = 10;
  std::uint32_t num_features = 20;
  std::uint32_t samples_per_class = 2000;
  std::uint32_t shards_per_client = 2;
  std::uint32_t shard_size = 100;
  double class_separation = 3.5;
  double shard_purity = 0.8;  // 1 = each shard drawn from one contiguous class run
  std::uint64_t seed = 1;

  std::uint64_t total_samples() const { return std::uint64_t{num_classes} * samples_per_class; }

  void validate(std::uint32_t total_clients) const {
    auto fail = [](const std::string& msg) { throw Error("data_fabric", "invalid DatasetSpec: " + msg); };
    if (num_classes < 2) fail("num_classes must be >= 2");
    if (num_features < 1) fail("num_features must be >= 1");
    if (shards_per_client < 1 || shard_size < 1) fail("shards_per_client and shard_size must be >= 1");
    if (!(class_separation > 0.0)) fail("class_separation must be > 0");
    if (!(shard_purity >= 0.0 && shard_purity <= 1.0)) fail("shard_purity must lie in [0, 1]");
    if (total_clients < 1) fail("need at least one client");
    const std::uint64_t needed = std::uint64_t{total_clients} * shards_per_client * shard_size;
    if (needed > total_samples())
      fail("shard plan needs " + std::to_string(needed) + " samples, only " + std::to_string(total_samples()) +
           " available");
  }
};

namespace detail {

// Independent random streams derived from the dataset seed.
enum Stream : std::uint64_t { means = 1, train_samples, shard_mix, shard_deal, test_samples };

inline Sample draw_sample(const std::vector<std::vector<double>>& means, Label label, Rng& rng) {
  Sample s;
  s.label = label;
  s.x.resize(means[label].size());
  for (std::size_t j = 0; j < s.x.size(); ++j) s.x[j] = means[label][j] + rng.normal();
  return s;
}

inline std::uint32_t count_classes(const std::vector<Sample>& samples) {
  std::set<Label> labels;
  for (const auto& s : samples) labels.insert(s.label);
  return static_cast<std::uint32_t>(labels.size());
}

}  // namespace detail

/// Cluster centres: random unit directions scaled by class_separation.
inline std::vector<std::vector<double>> class_means(const DatasetSpec& spec) {
  Rng rng(derive_seed(spec.seed, detail::means));
  std::vector<std::vector<double>> means(spec.num_classes, std::vector<double>(spec.num_features));
  for (auto& m : means) {
    double norm = 0.0;
    for (auto& v : m) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : m) v *= spec.class_separation / norm;
  }
  return means;
}

/// Splits the class-sorted sample sequence into consecutive shards, then
/// replaces a (1 - purity) share of every shard with samples pooled from all
/// shards. Every sample still lands in exactly one shard.
inline std::vector<std::vector<Sample>> make_shards(const DatasetSpec& spec, std::uint32_t total_shards) {
  const auto means = class_means(spec);
  Rng sample_rng(derive_seed(spec.seed, detail::train_samples));
  const std::uint64_t used = std::uint64_t{total_shards} * spec.shard_size;

  std::vector<Sample> all;
  all.reserve(spec.total_samples());
  for (Label c = 0; c < spec.num_classes; ++c)
    for (std::uint32_t i = 0; i < spec.samples_per_class; ++i) all.push_back(detail::draw_sample(means, c, sample_rng));

  // Surplus samples are dropped uniformly at random; class order is kept.
  std::vector<Sample> sorted;
  if (used == all.size()) {
    sorted = std::move(all);
  } else {
    std::vector<std::size_t> idx(all.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    auto keep = sample_rng.sample_without_replacement(std::move(idx), used);
    std::sort(keep.begin(), keep.end());
    sorted.reserve(used);
    for (std::size_t i : keep) sorted.push_back(std::move(all[i]));
  }

  std::vector<std::vector<Sample>> shards(total_shards);
  for (std::uint32_t s = 0; s < total_shards; ++s) {
    auto first = sorted.begin() + static_cast<std::ptrdiff_t>(std::uint64_t{s} * spec.shard_size);
    shards[s].assign(std::make_move_iterator(first), std::make_move_iterator(first + spec.shard_size));
  }

  const auto mixed = static_cast<std::uint32_t>(std::lround((1.0 - spec.shard_purity) * spec.shard_size));
  if (mixed > 0 && total_shards > 1) {
    Rng mix_rng(derive_seed(spec.seed, detail::shard_mix));
    std::vector<std::pair<std::uint32_t, std::uint32_t>> holes;  // (shard, position)
    std::vector<Sample> pool;
    std::vector<std::uint32_t> positions(spec.shard_size);
    for (std::uint32_t s = 0; s < total_shards; ++s) {
      for (std::uint32_t p = 0; p < spec.shard_size; ++p) positions[p] = p;
      for (std::uint32_t p : mix_rng.sample_without_replacement(positions, mixed)) {
        holes.emplace_back(s, p);
        pool.push_back(std::move(shards[s][p]));
      }
    }
    mix_rng.shuffle(std::span<Sample>(pool));
    for (std::size_t i = 0; i < holes.size(); ++i) shards[holes[i].first][holes[i].second] = std::move(pool[i]);
  }
  return shards;
}

/// Deals `shards_per_client` random shards to each of `total_clients`
/// clients without replacement.
inline std::vector<ClientDataset> generate(const DatasetSpec& spec, std::uint32_t total_clients) {
  spec.validate(total_clients);
  const std::uint32_t total_shards = total_clients * spec.shards_per_client;
  auto shards = make_shards(spec, total_shards);

  std::vector<std::uint32_t> order(total_shards);
  for (std::uint32_t i = 0; i < total_shards; ++i) order[i] = i;
  Rng deal_rng(derive_seed(spec.seed, detail::shard_deal));
  deal_rng.shuffle(std::span<std::uint32_t>(order));

  std::vector<ClientDataset> clients(total_clients);
  for (std::uint32_t k = 0; k < total_clients; ++k) {
    auto& c = clients[k];
    c.client_id = k;
    for (std::uint32_t j = 0; j < spec.shards_per_client; ++j) {
      auto& shard = shards[order[k * spec.shards_per_client + j]];
      c.samples.insert(c.samples.end(), std::make_move_iterator(shard.begin()), std::make_move_iterator(shard.end()));
    }
    c.true_n_class = detail::count_classes(c.samples);
  }
  return clients;
}

/// Clean, balanced held-out set drawn from the same clusters.
inline std::vector<Sample> generate_test_set(const DatasetSpec& spec, std::uint32_t per_class) {
  const auto means = class_means(spec);
  Rng rng(derive_seed(spec.seed, detail::test_samples));
  std::vector<Sample> test;
  test.reserve(std::size_t{per_class} * spec.num_classes);
  for (std::uint32_t i = 0; i < per_class; ++i)
    for (Label c = 0; c < spec.num_classes; ++c) test.push_back(detail::draw_sample(means, c, rng));
  return test;
}

/// Flips exactly round(p_noisy * |samples|) labels, each to a uniformly
/// chosen different class.
inline ClientDataset inject_label_noise(ClientDataset dataset, double p_noisy, std::uint32_t num_classes,
                                        std::uint64_t seed) {
  if (!(p_noisy >= 0.0 && p_noisy <= 1.0)) throw Error("data_fabric", "p_noisy must lie in [0, 1]");
  if (num_classes < 2) throw Error("data_fabric", "label noise needs at least two classes");
  const std::size_t n = dataset.samples.size();
  const auto flips = static_cast<std::size_t>(std::llround(p_noisy * static_cast<double>(n)));
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  Rng rng(seed);
  for (std::size_t i : rng.sample_without_replacement(std::move(idx), flips)) {
    auto& label = dataset.samples[i].label;
    const auto shift = static_cast<Label>(1 + rng.below(num_classes - 1));
    label = (label + shift) % num_classes;
  }
  dataset.true_p_noisy = n == 0 ? 0.0 : static_cast<double>(flips) / static_cast<double>(n);
  return dataset;
}

/// Flags a client as malicious. label_flip_all rewrites every label now;
/// update_negate is applied by local training (negated, scaled delta).
inline ClientDataset mark_poisoned(ClientDataset dataset, PoisonMode mode, std::uint32_t num_classes,
                                   std::uint64_t seed) {
  switch (mode) {
    case PoisonMode::label_flip_all:
      dataset = inject_label_noise(std::move(dataset), 1.0, num_classes, seed);
      break;
    case PoisonMode::update_negate:
      break;
    default:
      throw Error("data_fabric", "mark_poisoned needs label_flip_all or update_negate");
  }
  dataset.poisoned = true;
  dataset.poison_mode = mode;
  return dataset;
}

// --- text dump -------------------------------------------------------------
//
//   fairequity-dataset 1
//   num_classes=<C> ... seed=<s>          (one key=value per line)
//   clients=<K>
//   client <id> <n_samples> <true_n_class> <true_p_noisy> <poison_mode>
//   ... one line per client ...
//   <client_id> <label> <f_1> ... <f_F>   (one line per sample, clients in order)

inline void dump_dataset(std::ostream& os, const DatasetSpec& spec, const std::vector<ClientDataset>& clients) {
  os << "fairequity-dataset 1\n" << std::setprecision(17);
  os << "num_classes=" << spec.num_classes << "\nnum_features=" << spec.num_features
     << "\nsamples_per_class=" << spec.samples_per_class << "\nshards_per_client=" << spec.shards_per_client
     << "\nshard_size=" << spec.shard_size << "\nclass_separation=" << spec.class_separation
     << "\nshard_purity=" << spec.shard_purity << "\nseed=" << spec.seed << "\nclients=" << clients.size() << "\n";
  for (const auto& c : clients)
    os << "client " << c.client_id << ' ' << c.samples.size() << ' ' << c.true_n_class << ' ' << c.true_p_noisy << ' '
       << to_string(c.poison_mode) << '\n';
  for (const auto& c : clients)
    for (const auto& s : c.samples) {
      os << c.client_id << ' ' << s.label;
      for (double v : s.x) os << ' ' << v;
      os << '\n';
    }
}

struct LoadedDataset {
  DatasetSpec spec;
  std::vector<ClientDataset> clients;
};

inline LoadedDataset load_dataset(std::istream& is) {
  auto fail = [](const std::string& msg) -> void { throw Error("data_fabric", "dataset load: " + msg); };
  std::string line;
  if (!std::getline(is, line) || line != "fairequity-dataset 1") fail("bad header");

  LoadedDataset out;
  std::size_t client_count = 0;
  for (int i = 0; i < 9; ++i) {
    if (!std::getline(is, line)) fail("truncated header");
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key=value, got '" + line + "'");
    const std::string key = line.substr(0, eq);
    std::istringstream value(line.substr(eq + 1));
    auto& sp = out.spec;
    if (key == "num_classes") value >> sp.num_classes;
    else if (key == "num_features") value >> sp.num_features;
    else if (key == "samples_per_class") value >> sp.samples_per_class;
    else if (key == "shards_per_client") value >> sp.shards_per_client;
    else if (key == "shard_size") value >> sp.shard_size;
    else if (key == "class_separation") value >> sp.class_separation;
    else if (key == "shard_purity") value >> sp.shard_purity;
    else if (key == "seed") value >> sp.seed;
    else if (key == "clients") value >> client_count;
    else fail("unknown key '" + key + "'");
    if (value.fail()) fail("bad value for '" + key + "'");
  }

  out.clients.resize(client_count);
  std::vector<std::size_t> expected(client_count);
  for (std::size_t k = 0; k < client_count; ++k) {
    if (!std::getline(is, line)) fail("truncated client table");
    std::istringstream row(line);
    std::string tag, mode;
    auto& c = out.clients[k];
    row >> tag >> c.client_id >> expected[k] >> c.true_n_class >> c.true_p_noisy >> mode;
    if (row.fail() || tag != "client" || c.client_id != k) fail("bad client line '" + line + "'");
    c.poison_mode = parse_poison_mode(mode);
    c.poisoned = c.poison_mode != PoisonMode::none;
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    ClientId id = 0;
    Sample s;
    row >> id >> s.label;
    if (row.fail() || id >= client_count) fail("bad sample line");
    s.x.resize(out.spec.num_features);
    for (auto& v : s.x) row >> v;
    if (row.fail()) fail("short feature row for client " + std::to_string(id));
    out.clients[id].samples.push_back(std::move(s));
  }
  for (std::size_t k = 0; k < client_count; ++k)
    if (out.clients[k].samples.size() != expected[k]) fail("sample count mismatch for client " + std::to_string(k));
  return out;
}

}  // namespace fairequity

#endif  // FAIREQUITY_DATA_FABRIC_HPP
