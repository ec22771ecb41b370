#include <gtest/gtest.h>

#include <map>
#include <set>
#include <sstream>
#include <vector>

#include "fairequity/data_fabric.hpp"
#include "fairequity/fl_engine.hpp"

namespace fe = fairequity;

namespace {

fe::DatasetSpec pure_spec(std::uint32_t samples_per_class, std::uint32_t shard_size, std::uint32_t shards_per_client) {
  fe::DatasetSpec spec;
  spec.num_classes = 10;
  spec.num_features = 4;
  spec.samples_per_class = samples_per_class;
  spec.shard_size = shard_size;
  spec.shards_per_client = shards_per_client;
  spec.shard_purity = 1.0;
  spec.seed = 3;
  return spec;
}

// Fingerprint of a sample, used to check the partition is exact.
std::pair<double, fe::Label> key(const fe::Sample& s) { return {s.x[0] * 1e6 + s.x[1], s.label}; }

}  // namespace

TEST(Generate, PureSingleShardClientsHoldOneClass) {
  const auto spec = pure_spec(40, 10, 1);
  const auto clients = fe::generate(spec, 40);
  ASSERT_EQ(clients.size(), 40u);
  for (const auto& c : clients) {
    EXPECT_EQ(c.true_n_class, 1u);
    EXPECT_EQ(c.samples.size(), 10u);
  }
}

TEST(Generate, SingleClientHoldsEveryClass) {
  const auto spec = pure_spec(20, 10, 20);
  const auto clients = fe::generate(spec, 1);
  ASSERT_EQ(clients.size(), 1u);
  EXPECT_EQ(clients[0].true_n_class, 10u);
  EXPECT_EQ(clients[0].samples.size(), 200u);
}

TEST(Generate, ShardLotteryMatchesCombinatorialOracle) {
  // 20 clients x 2 pure shards, 4 shards per class: a client holds a single
  // class iff its second shard is one of the 3 remaining shards of the first
  // shard's class among the other 39, so P(n_class = 1) = 3 / 39.
  const double expected = 3.0 / 39.0;

  // Monte Carlo replay of the same lottery with the library's deal stream.
  double simulated = 0.0;
  double observed = 0.0;
  constexpr int kSeeds = 300;
  for (int seed = 1; seed <= kSeeds; ++seed) {
    auto spec = pure_spec(40, 10, 2);
    spec.seed = static_cast<std::uint64_t>(seed);
    const auto clients = fe::generate(spec, 20);
    for (const auto& c : clients) observed += c.true_n_class == 1;

    std::vector<std::uint32_t> order(40);
    for (std::uint32_t i = 0; i < 40; ++i) order[i] = i;
    fe::Rng deal(fe::derive_seed(spec.seed, fe::detail::shard_deal));
    deal.shuffle(std::span<std::uint32_t>(order));
    for (int k = 0; k < 20; ++k) simulated += order[2 * k] / 4 == order[2 * k + 1] / 4;
  }
  observed /= 20.0 * kSeeds;
  simulated /= 20.0 * kSeeds;
  EXPECT_DOUBLE_EQ(observed, simulated);
  EXPECT_NEAR(observed, expected, 0.02);
}

TEST(Generate, PartitionIsExactAndReproducible) {
  fe::DatasetSpec spec;
  spec.num_features = 3;
  spec.samples_per_class = 30;
  spec.shard_size = 15;
  spec.shards_per_client = 2;
  spec.shard_purity = 0.6;
  const auto a = fe::generate(spec, 10);
  const auto b = fe::generate(spec, 10);

  std::multiset<std::pair<double, fe::Label>> dealt;
  for (const auto& c : a)
    for (const auto& s : c.samples) dealt.insert(key(s));
  EXPECT_EQ(dealt.size(), 300u);
  std::set<std::pair<double, fe::Label>> unique(dealt.begin(), dealt.end());
  EXPECT_EQ(unique.size(), 300u);

  for (std::size_t k = 0; k < a.size(); ++k) {
    ASSERT_EQ(a[k].samples.size(), b[k].samples.size());
    for (std::size_t i = 0; i < a[k].samples.size(); ++i) {
      EXPECT_EQ(a[k].samples[i].x, b[k].samples[i].x);
      EXPECT_EQ(a[k].samples[i].label, b[k].samples[i].label);
    }
  }
}

TEST(Generate, ImpureShardsMixClasses) {
  fe::DatasetSpec spec;
  spec.samples_per_class = 200;
  spec.shard_size = 100;
  spec.shards_per_client = 1;
  spec.shard_purity = 0.8;
  const auto clients = fe::generate(spec, 20);
  double mean_classes = 0.0;
  for (const auto& c : clients) {
    std::map<fe::Label, int> counts;
    for (const auto& s : c.samples) ++counts[s.label];
    int top = 0;
    for (auto [l, n] : counts) top = std::max(top, n);
    EXPECT_GE(top, 80);  // the home class keeps at least the pure share
    mean_classes += c.true_n_class;
  }
  EXPECT_GT(mean_classes / 20.0, 5.0);
}

TEST(Generate, SurplusSamplesKeepAllClasses) {
  fe::DatasetSpec spec;  // 20000 samples, K=50 uses half
  const auto clients = fe::generate(spec, 50);
  std::set<fe::Label> labels;
  for (const auto& c : clients)
    for (const auto& s : c.samples) labels.insert(s.label);
  EXPECT_EQ(labels.size(), 10u);
}

TEST(Generate, RejectsInsufficientSamples) {
  const auto spec = pure_spec(10, 10, 2);
  EXPECT_THROW(fe::generate(spec, 51), fe::Error);
}

TEST(LabelNoise, ExactFlipCount) {
  const auto clean = fe::generate(pure_spec(50, 50, 1), 10)[0];
  ASSERT_EQ(clean.samples.size(), 50u);

  const auto none = fe::inject_label_noise(clean, 0.0, 10, 1);
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(none.samples[i].label, clean.samples[i].label);
  EXPECT_EQ(none.true_p_noisy, 0.0);

  const auto some = fe::inject_label_noise(clean, 0.2, 10, 1);
  int flipped = 0;
  for (std::size_t i = 0; i < 50; ++i) flipped += some.samples[i].label != clean.samples[i].label;
  EXPECT_EQ(flipped, 10);
  EXPECT_DOUBLE_EQ(some.true_p_noisy, 0.2);

  const auto all = fe::inject_label_noise(clean, 1.0, 10, 1);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_NE(all.samples[i].label, clean.samples[i].label);
    EXPECT_LT(all.samples[i].label, 10u);
  }
  EXPECT_EQ(all.true_n_class, clean.true_n_class);
  EXPECT_THROW(fe::inject_label_noise(clean, 1.5, 10, 1), fe::Error);
}

TEST(LabelNoise, RealizedFractionWithinOneSample) {
  const auto clean = fe::generate(pure_spec(70, 7, 1), 10)[0];
  for (double p : {0.05, 0.33, 0.5, 0.77}) {
    const auto noisy = fe::inject_label_noise(clean, p, 10, 9);
    EXPECT_LE(std::abs(noisy.true_p_noisy - p), 1.0 / 7.0 + 1e-12);
  }
}

TEST(MarkPoisoned, LabelFlipAllEqualsFullNoise) {
  const auto clean = fe::generate(pure_spec(20, 20, 1), 10)[2];
  const auto poisoned = fe::mark_poisoned(clean, fe::PoisonMode::label_flip_all, 10, 4);
  const auto noisy = fe::inject_label_noise(clean, 1.0, 10, 4);
  EXPECT_TRUE(poisoned.poisoned);
  for (std::size_t i = 0; i < clean.samples.size(); ++i) EXPECT_EQ(poisoned.samples[i].label, noisy.samples[i].label);
  EXPECT_THROW(fe::mark_poisoned(clean, fe::PoisonMode::none, 10, 4), fe::Error);
  EXPECT_THROW(fe::parse_poison_mode("sybil"), fe::Error);
}

TEST(MarkPoisoned, NegatingClientAloneRaisesGlobalLoss) {
  fe::DatasetSpec spec;
  spec.samples_per_class = 100;
  spec.shard_size = 50;
  auto clients = fe::generate(spec, 10);
  const fe::SoftmaxRegression model(spec.num_classes, spec.num_features);
  fe::TrainConfig cfg;

  // Warm start: a few honest rounds over everybody.
  fe::ModelParams w = model.zeros();
  for (int round = 0; round < 3; ++round) {
    std::vector<fe::LocalUpdate> ups;
    for (const auto& c : clients) ups.push_back(fe::local_train(model, w, c, cfg, 10 + round));
    w = fe::aggregate(w, ups, 1.0);
  }
  const double before = fe::global_loss(model, w, clients);
  auto bad = fe::mark_poisoned(clients[0], fe::PoisonMode::update_negate, 10, 1);
  const auto up = fe::local_train(model, w, bad, cfg, 99);
  const double after = fe::global_loss(model, fe::aggregate(w, std::vector<fe::LocalUpdate>{up}, 1.0), clients);
  EXPECT_GT(after, before);
}

TEST(DatasetDump, RoundTripsExactly) {
  fe::DatasetSpec spec;
  spec.num_features = 3;
  spec.samples_per_class = 6;
  spec.shard_size = 3;
  auto clients = fe::generate(spec, 4);
  clients[1] = fe::inject_label_noise(clients[1], 0.5, spec.num_classes, 2);
  clients[2] = fe::mark_poisoned(clients[2], fe::PoisonMode::update_negate, spec.num_classes, 2);

  std::stringstream buf;
  fe::dump_dataset(buf, spec, clients);
  const auto loaded = fe::load_dataset(buf);
  EXPECT_EQ(loaded.spec.seed, spec.seed);
  EXPECT_EQ(loaded.spec.class_separation, spec.class_separation);
  ASSERT_EQ(loaded.clients.size(), clients.size());
  for (std::size_t k = 0; k < clients.size(); ++k) {
    EXPECT_EQ(loaded.clients[k].true_n_class, clients[k].true_n_class);
    EXPECT_EQ(loaded.clients[k].true_p_noisy, clients[k].true_p_noisy);
    EXPECT_EQ(loaded.clients[k].poison_mode, clients[k].poison_mode);
    ASSERT_EQ(loaded.clients[k].samples.size(), clients[k].samples.size());
    for (std::size_t i = 0; i < clients[k].samples.size(); ++i) {
      EXPECT_EQ(loaded.clients[k].samples[i].x, clients[k].samples[i].x);
      EXPECT_EQ(loaded.clients[k].samples[i].label, clients[k].samples[i].label);
    }
  }
}

TEST(DatasetDump, RejectsMalformedInput) {
  std::stringstream bad("not-a-dataset\n");
  EXPECT_THROW(fe::load_dataset(bad), fe::Error);
}
