// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fedlsr/augment.hpp"
#include "fedlsr/data.hpp"
#include "fedlsr/losses.hpp"
#include "fedlsr/model.hpp"
#include "fedlsr/rng.hpp"

namespace fedlsr {

/// Local training rule run on every selected client.
enum class Method {
  kFedAvgCe,      ///< plain cross entropy
  kLsr,           ///< local self-regularization
  kLsrPlus,       ///< LSR with entropy regularization on both heads
  kSymCe,         ///< Symmetric CE
  kCoteaching,    ///< two peer networks exchanging small-loss samples
  kCoteachingLsr, ///< Co-teaching on sharpened predictions
  kSymCeLsr,      ///< Symmetric CE on mixed logits plus self distillation
  kLsrNoMixup,    ///< ablation: CE over original and augmented samples
};

std::string to_string(Method method);
Method parse_method(const std::string& name);
bool uses_two_networks(Method method);

struct FedConfig {
  int num_clients = 100;
  int clients_per_round = 5;
  int rounds = 100;
  int local_epochs = 5;
  int batch_size = 60;
  double lr = 0.15;
  Method method = Method::kLsr;
  int warmup_rounds = 20;
  /// Threads used for client training within a round. Results do not depend on it.
  int workers = 1;

  void validate() const;
};

struct CoteachingConfig {
  double forget_rate = 0.4;  ///< tau, the assumed noise ratio
  int ramp_length = 10;      ///< T_k: rounds (or epochs) until R reaches 1 - tau
  bool per_epoch = false;    ///< advance the schedule per local epoch instead of per round

  void validate() const;
};

/// Fraction of clean labels among Co-teaching's kept samples vs. whole batches.
struct SelectionStats {
  std::size_t selected = 0;
  std::size_t selected_clean = 0;
  std::size_t seen = 0;
  std::size_t seen_clean = 0;

  SelectionStats& operator+=(const SelectionStats& o);
};

struct RoundMetrics {
  int round = 0;
  double test_accuracy = 0.0;
  double mean_train_loss = 0.0;
  double gamma_t = 0.0;
  std::vector<int> selected_clients;
  std::optional<SelectionStats> selection;
};

/// k distinct client ids drawn uniformly without replacement, in draw order.
std::vector<int> select_clients(int num_clients, int k, RngStream& rng);

/// gamma * min(t / t_w, 1); gamma when t_w == 0.
double gamma_schedule(int t, int warmup_rounds, double gamma);

/// Co-teaching keep ratio R(t) = 1 - min(tau * t / T_k, tau).
double coteaching_keep_ratio(int t, const CoteachingConfig& ct);

struct LocalResult {
  ModelParams params;
  double mean_loss = 0.0;
};

struct PeerResult {
  ModelParams first;
  ModelParams second;
  double mean_loss = 0.0;
  SelectionStats selection;
};

LocalResult local_train_ce(const ModelParams& global, const LabeledDataset& ds,
                           const ClientShard& shard, const FedConfig& cfg, const RngStream& rng);

LocalResult local_train_symce(const ModelParams& global, const LabeledDataset& ds,
                              const ClientShard& shard, const FedConfig& cfg,
                              const SymCeParams& sp, const RngStream& rng);

/// One client's LSR update: dual forward on x and Augment(x), MixUp weight per
/// batch, lsr_plus_loss (which is plain LSR when hp.entropy_weight == 0).
LocalResult local_train_lsr(const ModelParams& global, const LabeledDataset& ds,
                            const ClientShard& shard, const FedConfig& cfg,
                            const LsrHyperParams& hp, const AugmentPolicy& policy,
                            const RngStream& rng, double gamma_t);

/// Symmetric CE on MixUp-mixed logits plus gamma_t * self distillation.
LocalResult local_train_symce_lsr(const ModelParams& global, const LabeledDataset& ds,
                                  const ClientShard& shard, const FedConfig& cfg,
                                  const LsrHyperParams& hp, const SymCeParams& sp,
                                  const AugmentPolicy& policy, const RngStream& rng,
                                  double gamma_t);

/// Ablation without MixUp prediction: the augmented view expands the batch
/// and both views are trained with vanilla CE.
LocalResult local_train_lsr_no_mixup(const ModelParams& global, const LabeledDataset& ds,
                                     const ClientShard& shard, const FedConfig& cfg,
                                     const AugmentPolicy& policy, const RngStream& rng);

/// Co-teaching on one client. Each network ranks the batch by its own loss
/// and the other network steps on the kept samples. With `sharpen_temperature`
/// set, both ranking and training use CE of the sharpened prediction.
PeerResult local_train_coteaching(const std::pair<ModelParams, ModelParams>& global,
                                  const LabeledDataset& ds, const ClientShard& shard,
                                  const FedConfig& cfg, const CoteachingConfig& ct,
                                  const RngStream& rng, int round,
                                  std::optional<double> sharpen_temperature = std::nullopt,
                                  double clamp_lo = 1e-6);

/// Sample-count weighted average of parameter vectors.
ModelParams aggregate(std::span<const ModelParams> models, std::span<const std::size_t> sizes);

/// Everything run_federation needs besides data.
struct FederationSetup {
  FedConfig fed;
  LsrHyperParams lsr;
  SymCeParams symce;
  CoteachingConfig coteaching;
  AugmentPolicy augment;
  std::vector<std::size_t> hidden_layers = {128, 64};
  std::uint64_t seed = 0;
};

struct FederationResult {
  std::vector<RoundMetrics> metrics;
  ModelParams global;
  std::optional<ModelParams> peer;  ///< second network for Co-teaching methods
};

/// Called after each round with the new global model(s).
using RoundObserver =
    std::function<void(const RoundMetrics&, const ModelParams& global, const ModelParams* peer)>;

/// Runs `rounds` communication rounds: select clients, train locally from the
/// current global model, aggregate with FedAvg, evaluate on `test`.
FederationResult run_federation(const FederationSetup& setup, const LabeledDataset& train,
                                const std::vector<ClientShard>& partition,
                                const LabeledDataset& test, const RoundObserver& observer = {});

/// Initial global parameters for a setup (and the peer for two-network methods).
ModelParams initial_params(const FederationSetup& setup, std::size_t input_dim, int num_classes,
                           bool peer = false);

}  // namespace fedlsr
