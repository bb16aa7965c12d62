// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/federation.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "fedlsr/error.hpp"
#include "fedlsr/evaluate.hpp"

namespace fedlsr {
namespace {

using Shapes = std::vector<LayerShape>;

// Small synthetic federation shared by the engine-level tests.
struct World {
  LabeledDataset train;
  LabeledDataset test;
  std::vector<ClientShard> partition;
  FederationSetup setup;
};

World make_world(NoiseSpec noise, int clients = 8, std::size_t n = 1200) {
  World w;
  const auto full = generate_synthetic(n + 400, 10, 16, 5);
  auto [train, test] = split_holdout(full, 40);
  w.train = inject_noise(train, noise);
  w.test = std::move(test);
  w.partition = partition_iid(w.train, clients, 9);
  w.setup.fed.num_clients = clients;
  w.setup.fed.clients_per_round = 3;
  w.setup.fed.rounds = 3;
  w.setup.fed.local_epochs = 2;
  w.setup.fed.batch_size = 30;
  w.setup.fed.warmup_rounds = 2;
  w.setup.hidden_layers = {12, 8};
  w.setup.augment.ops = {FeatureJitter{0.1}};
  w.setup.seed = 17;
  return w;
}

// ------------------------------------------------------------ selection

TEST(SelectClients, AllWhenKEqualsN) {
  RngStream rng(1);
  auto ids = select_clients(6, 6, rng);
  std::sort(ids.begin(), ids.end());
  EXPECT_EQ(ids, (std::vector<int>{0, 1, 2, 3, 4, 5}));
}

TEST(SelectClients, DistinctInRangeAndDeterministic) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    RngStream a(seed, {4, 2});
    RngStream b(seed, {4, 2});
    const auto ids = select_clients(100, 5, a);
    EXPECT_EQ(ids, select_clients(100, 5, b));
    const std::set<int> unique(ids.begin(), ids.end());
    EXPECT_EQ(unique.size(), 5u);
    EXPECT_GE(*unique.begin(), 0);
    EXPECT_LT(*unique.rbegin(), 100);
  }
}

TEST(SelectClients, RoughlyUniform) {
  std::vector<int> hits(10, 0);
  for (std::uint64_t t = 0; t < 4000; ++t) {
    RngStream rng(3, {t});
    for (int id : select_clients(10, 2, rng)) ++hits[static_cast<std::size_t>(id)];
  }
  // Each id is expected 800 times; 5 sigma is about 130.
  for (int h : hits) EXPECT_NEAR(h, 800, 130);
}

TEST(SelectClients, RejectsOversizedK) {
  RngStream rng(1);
  EXPECT_THROW(select_clients(3, 4, rng), InvalidParameter);
}

// ------------------------------------------------------------- schedules

TEST(GammaSchedule, Examples) {
  EXPECT_EQ(gamma_schedule(0, 20, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(gamma_schedule(10, 20, 0.3), 0.15);
  EXPECT_DOUBLE_EQ(gamma_schedule(20, 20, 0.3), 0.3);
  EXPECT_DOUBLE_EQ(gamma_schedule(0, 0, 0.3), 0.3);
  EXPECT_THROW(gamma_schedule(-1, 20, 0.3), InvalidParameter);
}

TEST(GammaSchedule, NonDecreasingAndFlatAfterWarmup) {
  for (int tw : {0, 1, 7, 40}) {
    double prev = 0.0;
    for (int t = 0; t < 100; ++t) {
      const double g = gamma_schedule(t, tw, 0.6);
      EXPECT_GE(g, prev);
      if (t >= tw) {
        EXPECT_EQ(g, 0.6);
      }
      prev = g;
    }
  }
}

TEST(CoteachingKeepRatio, Schedule) {
  CoteachingConfig ct;
  ct.forget_rate = 0.4;
  ct.ramp_length = 10;
  EXPECT_EQ(coteaching_keep_ratio(0, ct), 1.0);
  EXPECT_DOUBLE_EQ(coteaching_keep_ratio(5, ct), 0.8);
  EXPECT_DOUBLE_EQ(coteaching_keep_ratio(10, ct), 0.6);
  EXPECT_DOUBLE_EQ(coteaching_keep_ratio(500, ct), 0.6);
  ct.forget_rate = 0.0;
  EXPECT_EQ(coteaching_keep_ratio(7, ct), 1.0);
}

TEST(Configs, Validation) {
  FedConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.clients_per_round = 101;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  cfg = FedConfig{};
  cfg.batch_size = 0;
  EXPECT_THROW(cfg.validate(), InvalidParameter);
  CoteachingConfig ct;
  ct.forget_rate = 1.0;
  EXPECT_THROW(ct.validate(), InvalidParameter);
  EXPECT_THROW(parse_method("fedprox"), InvalidParameter);
  EXPECT_EQ(parse_method("sym_ce_lsr"), Method::kSymCeLsr);
}

// ----------------------------------------------------------- aggregation

TEST(Aggregate, Examples) {
  const Shapes one{{1, 1}};  // two parameters: weight and bias
  const ModelParams a(one, {1.0, 3.0});
  const ModelParams b(one, {3.0, 5.0});
  EXPECT_EQ(aggregate(std::vector<ModelParams>{a}, std::vector<std::size_t>{7}), a);
  const std::vector<std::size_t> equal{4, 4};
  EXPECT_EQ(aggregate(std::vector<ModelParams>{a, b}, equal).flat(), (std::vector<double>{2.0, 4.0}));

  const ModelParams zero(one, {0.0, 0.0});
  const ModelParams four(one, {4.0, 4.0});
  const std::vector<std::size_t> sizes{1, 3};
  EXPECT_EQ(aggregate(std::vector<ModelParams>{zero, four}, sizes).flat(), (std::vector<double>{3.0, 3.0}));
}

TEST(Aggregate, Errors) {
  const ModelParams a(Shapes{{1, 1}}, {1.0, 3.0});
  const ModelParams b(Shapes{{1, 2}}, {1.0, 3.0, 0.0, 0.0});
  EXPECT_THROW(aggregate(std::vector<ModelParams>{}, std::vector<std::size_t>{}), InvalidInput);
  EXPECT_THROW(aggregate(std::vector<ModelParams>{a, b}, std::vector<std::size_t>{1, 1}), InvalidInput);
  EXPECT_THROW(aggregate(std::vector<ModelParams>{a, a}, std::vector<std::size_t>{1, 0}), InvalidInput);
  EXPECT_THROW(aggregate(std::vector<ModelParams>{a, a}, std::vector<std::size_t>{1}), InvalidInput);
}

TEST(Aggregate, IdenticalModelsReturnThatModelExactly) {
  const std::vector<std::size_t> s{5, 3, 3};
  const ModelParams m = init_params(s, 4);
  const std::vector<std::size_t> sizes{13, 7, 29};
  EXPECT_EQ(aggregate(std::vector<ModelParams>(3, m), sizes), m);
}

TEST(Aggregate, PermutationInvariant) {
  const std::vector<std::size_t> s{4, 6, 3};
  std::vector<ModelParams> models;
  std::vector<std::size_t> sizes;
  for (std::uint64_t k = 0; k < 5; ++k) {
    models.push_back(init_params(s, k + 1));
    sizes.push_back(10 + 7 * k);
  }
  const ModelParams ref = aggregate(models, sizes);
  std::vector<std::size_t> perm(5);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  while (std::next_permutation(perm.begin(), perm.end())) {
    std::vector<ModelParams> pm;
    std::vector<std::size_t> ps;
    for (std::size_t i : perm) {
      pm.push_back(models[i]);
      ps.push_back(sizes[i]);
    }
    const ModelParams got = aggregate(pm, ps);
    for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(got.flat()[i], ref.flat()[i], 1e-15);
  }
}

// -------------------------------------------------------- local trainers

TEST(LocalTrainCe, HandComputedStep) {
  // Linear 1 -> 2 model from zero; x = 1, y = 0: p = [1/2, 1/2], so the
  // gradient of every weight and bias is p - onehot = [-1/2, 1/2].
  LabeledDataset ds;
  ds.features = Matrix(1, 1, 1.0);
  ds.true_labels = {0};
  ds.observed_labels = {0};
  ds.num_classes = 2;
  const ModelParams global(Shapes{{1, 2}});
  FedConfig cfg;
  cfg.local_epochs = 1;
  cfg.batch_size = 1;
  cfg.lr = 0.1;
  const ClientShard shard{0, {0}};
  const LocalResult out = local_train_ce(global, ds, shard, cfg, RngStream(1));
  EXPECT_EQ(out.params.flat(), (std::vector<double>{0.05, -0.05, 0.05, -0.05}));
  EXPECT_DOUBLE_EQ(out.mean_loss, std::log(2.0));
}

TEST(LocalTrain, ZeroEpochsOrZeroLrKeepGlobal) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 3});
  const ModelParams global = initial_params(w.setup, w.train.dim(), 10);
  FedConfig cfg = w.setup.fed;
  cfg.local_epochs = 0;
  const RngStream rng(5);
  EXPECT_EQ(local_train_lsr(global, w.train, w.partition[0], cfg, w.setup.lsr, w.setup.augment, rng, 0.2).params,
            global);
  cfg.local_epochs = 2;
  cfg.lr = 0.0;
  EXPECT_EQ(local_train_ce(global, w.train, w.partition[0], cfg, rng).params, global);
  EXPECT_EQ(local_train_symce(global, w.train, w.partition[0], cfg, SymCeParams{}, rng).params, global);
}

TEST(LocalTrain, DeterministicUnderSeed) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 3});
  const ModelParams global = initial_params(w.setup, w.train.dim(), 10);
  const FedConfig& cfg = w.setup.fed;
  const auto run = [&](std::uint64_t seed) {
    return local_train_lsr(global, w.train, w.partition[1], cfg, w.setup.lsr, w.setup.augment,
                           RngStream(seed), 0.3)
        .params;
  };
  EXPECT_EQ(run(8), run(8));
  EXPECT_NE(run(8), run(9));
}

TEST(LocalTrain, LsrCollapsesToCeBitExactly) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 3});
  const ModelParams global = initial_params(w.setup, w.train.dim(), 10);
  LsrHyperParams hp;
  hp.sharpen_temperature = 1.0;
  hp.fixed_mix_weight = 1.0;
  const RngStream rng(21);
  const LocalResult lsr =
      local_train_lsr(global, w.train, w.partition[2], w.setup.fed, hp, AugmentPolicy{}, rng, 0.0);
  const LocalResult ce = local_train_ce(global, w.train, w.partition[2], w.setup.fed, rng);
  EXPECT_EQ(lsr.params, ce.params);
  EXPECT_EQ(lsr.mean_loss, ce.mean_loss);
}

TEST(LocalTrain, OversizedBatchUsesWholeShard) {
  World w = make_world({NoiseKind::kNone, 0.0, 0});
  const ModelParams global = initial_params(w.setup, w.train.dim(), 10);
  FedConfig big = w.setup.fed;
  big.batch_size = 100000;
  FedConfig exact = w.setup.fed;
  exact.batch_size = static_cast<int>(w.partition[0].size());
  const RngStream rng(2);
  EXPECT_EQ(local_train_ce(global, w.train, w.partition[0], big, rng).params,
            local_train_ce(global, w.train, w.partition[0], exact, rng).params);
}

TEST(LocalTrain, EmptyShardIsRejected) {
  World w = make_world({NoiseKind::kNone, 0.0, 0});
  const ModelParams global = initial_params(w.setup, w.train.dim(), 10);
  EXPECT_THROW(local_train_ce(global, w.train, ClientShard{0, {}}, w.setup.fed, RngStream(1)), InvalidInput);
}

TEST(LocalTrainCoteaching, ZeroForgetRateIsTwoIndependentCeTrainers) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 3});
  const ModelParams a = initial_params(w.setup, w.train.dim(), 10);
  const ModelParams b = initial_params(w.setup, w.train.dim(), 10, true);
  CoteachingConfig ct;
  ct.forget_rate = 0.0;
  const RngStream rng(4);
  const PeerResult pr = local_train_coteaching({a, b}, w.train, w.partition[0], w.setup.fed, ct, rng, 5);
  const ModelParams ca = local_train_ce(a, w.train, w.partition[0], w.setup.fed, rng).params;
  const ModelParams cb = local_train_ce(b, w.train, w.partition[0], w.setup.fed, rng).params;
  for (std::size_t i = 0; i < ca.size(); ++i) {
    EXPECT_NEAR(pr.first.flat()[i], ca.flat()[i], 1e-12);
    EXPECT_NEAR(pr.second.flat()[i], cb.flat()[i], 1e-12);
  }
  EXPECT_EQ(pr.selection.selected, pr.selection.seen);
}

// ------------------------------------------------------------ the engine

TEST(RunFederation, ZeroRoundsReturnsInitialModel) {
  World w = make_world({NoiseKind::kNone, 0.0, 0});
  w.setup.fed.rounds = 0;
  const auto result = run_federation(w.setup, w.train, w.partition, w.test);
  EXPECT_TRUE(result.metrics.empty());
  EXPECT_EQ(result.global, initial_params(w.setup, w.train.dim(), 10));
}

TEST(RunFederation, SingleClientRoundEqualsLocalOutput) {
  World w = make_world({NoiseKind::kSymmetric, 0.3, 1});
  w.setup.fed.clients_per_round = 1;
  w.setup.fed.rounds = 1;
  w.setup.fed.method = Method::kLsr;
  const auto result = run_federation(w.setup, w.train, w.partition, w.test);
  ASSERT_EQ(result.metrics.size(), 1u);
  const int id = result.metrics[0].selected_clients.at(0);
  const RngStream rng = RngStream(w.setup.seed).child(Purpose::kLocalTrain).child(0).child(static_cast<std::uint64_t>(id));
  const LocalResult local =
      local_train_lsr(initial_params(w.setup, w.train.dim(), 10), w.train,
                      w.partition[static_cast<std::size_t>(id)], w.setup.fed, w.setup.lsr,
                      w.setup.augment, rng, 0.0);
  EXPECT_EQ(result.global, local.params);
  EXPECT_EQ(result.metrics[0].test_accuracy, evaluate(local.params, w.test));
}

TEST(RunFederation, MetricsFollowSchedule) {
  World w = make_world({NoiseKind::kSymmetric, 0.3, 1});
  w.setup.fed.rounds = 4;
  w.setup.lsr.gamma = 0.5;
  const auto result = run_federation(w.setup, w.train, w.partition, w.test);
  ASSERT_EQ(result.metrics.size(), 4u);
  for (const auto& m : result.metrics) {
    EXPECT_EQ(m.gamma_t, gamma_schedule(m.round, w.setup.fed.warmup_rounds, 0.5));
    EXPECT_GE(m.test_accuracy, 0.0);
    EXPECT_LE(m.test_accuracy, 1.0);
    EXPECT_EQ(m.selected_clients.size(), 3u);
    EXPECT_FALSE(m.selection.has_value());
  }
}

TEST(RunFederation, PartitionSizeMustMatchClients) {
  World w = make_world({NoiseKind::kNone, 0.0, 0});
  w.partition.pop_back();
  EXPECT_THROW(run_federation(w.setup, w.train, w.partition, w.test), InvalidParameter);
}

class WorkerDeterminism : public ::testing::TestWithParam<Method> {};

TEST_P(WorkerDeterminism, BitIdenticalAcrossWorkerCounts) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 2});
  w.setup.fed.method = GetParam();
  w.setup.fed.clients_per_round = 4;
  w.setup.lsr.entropy_weight = 0.6;
  const auto ref = run_federation(w.setup, w.train, w.partition, w.test);
  for (int workers : {2, 3, 4}) {
    w.setup.fed.workers = workers;
    const auto got = run_federation(w.setup, w.train, w.partition, w.test);
    EXPECT_EQ(got.global, ref.global) << workers;
    EXPECT_EQ(got.peer, ref.peer) << workers;
    ASSERT_EQ(got.metrics.size(), ref.metrics.size());
    for (std::size_t t = 0; t < ref.metrics.size(); ++t) {
      EXPECT_EQ(got.metrics[t].test_accuracy, ref.metrics[t].test_accuracy);
      EXPECT_EQ(got.metrics[t].mean_train_loss, ref.metrics[t].mean_train_loss);
      EXPECT_EQ(got.metrics[t].selected_clients, ref.metrics[t].selected_clients);
    }
  }
}

INSTANTIATE_TEST_SUITE_P(AllMethods, WorkerDeterminism,
                         ::testing::Values(Method::kFedAvgCe, Method::kLsr, Method::kLsrPlus,
                                           Method::kSymCe, Method::kCoteaching,
                                           Method::kCoteachingLsr, Method::kSymCeLsr,
                                           Method::kLsrNoMixup),
                         [](const auto& info) { return to_string(info.param); });

TEST(RunFederation, LsrCollapseMatchesCeRunBitExactly) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 2});
  w.setup.fed.method = Method::kFedAvgCe;
  const auto ce = run_federation(w.setup, w.train, w.partition, w.test);
  w.setup.fed.method = Method::kLsr;
  w.setup.lsr.sharpen_temperature = 1.0;
  w.setup.lsr.fixed_mix_weight = 1.0;
  w.setup.lsr.gamma = 0.0;
  w.setup.augment = AugmentPolicy{};
  const auto lsr = run_federation(w.setup, w.train, w.partition, w.test);
  EXPECT_EQ(lsr.global, ce.global);
  for (std::size_t t = 0; t < ce.metrics.size(); ++t) {
    EXPECT_EQ(lsr.metrics[t].test_accuracy, ce.metrics[t].test_accuracy);
    EXPECT_EQ(lsr.metrics[t].mean_train_loss, ce.metrics[t].mean_train_loss);
  }
}

TEST(RunFederation, CoteachingSelectsCleanerSamplesAfterWarmup) {
  World w = make_world({NoiseKind::kSymmetric, 0.4, 2}, 10, 3000);
  w.setup.fed.method = Method::kCoteaching;
  w.setup.fed.rounds = 12;
  w.setup.fed.local_epochs = 3;
  w.setup.fed.lr = 0.1;
  w.setup.coteaching.forget_rate = 0.4;
  w.setup.coteaching.ramp_length = 5;
  const auto result = run_federation(w.setup, w.train, w.partition, w.test);
  int cleaner = 0;
  for (const auto& m : result.metrics) {
    ASSERT_TRUE(m.selection.has_value());
    if (m.round < 5) continue;
    const auto& s = *m.selection;
    const double selected = static_cast<double>(s.selected_clean) / static_cast<double>(s.selected);
    const double seen = static_cast<double>(s.seen_clean) / static_cast<double>(s.seen);
    if (selected > seen) ++cleaner;
  }
  EXPECT_EQ(cleaner, 7);
}

}  // namespace
}  // namespace fedlsr
