// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/federation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <numeric>
#include <thread>

#include "fedlsr/error.hpp"
#include "fedlsr/evaluate.hpp"

namespace fedlsr {
namespace {

struct Batch {
  std::vector<std::size_t> index;
  Matrix x;
  std::vector<int> y;
};

Batch gather(const LabeledDataset& ds, std::span<const std::size_t> index) {
  Batch b;
  b.index.assign(index.begin(), index.end());
  b.x = Matrix(index.size(), ds.dim());
  b.y.reserve(index.size());
  for (std::size_t r = 0; r < index.size(); ++r) {
    std::copy_n(ds.features.row(index[r]).begin(), ds.dim(), b.x.row(r).begin());
    b.y.push_back(ds.observed_labels[index[r]]);
  }
  return b;
}

void warn_oversized_batch(std::size_t batch, std::size_t shard) {
  static std::atomic<bool> warned{false};
  if (!warned.exchange(true)) {
    spdlog::warn("batch size {} exceeds shard size {}; training on the full shard as one batch",
                 batch, shard);
  }
}

// Calls fn(epoch, batch_no, batch) for every local mini-batch. Each epoch
// reshuffles the shard from its own sub-stream.
template <class Fn>
void for_each_batch(const LabeledDataset& ds, const ClientShard& shard, const FedConfig& cfg,
                    const RngStream& rng, Fn&& fn) {
  if (shard.indices.empty()) throw InvalidInput("local training on an empty shard");
  auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  if (batch_size > shard.size()) {
    warn_oversized_batch(batch_size, shard.size());
    batch_size = shard.size();
  }
  const RngStream shuffle_rng = rng.child(Purpose::kShuffle);
  std::vector<std::size_t> order = shard.indices;
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    RngStream epoch_rng = shuffle_rng.child(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), epoch_rng);
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += batch_size, ++batch_no) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      Batch b = gather(ds, std::span<const std::size_t>(order).subspan(start, stop - start));
      fn(epoch, batch_no, b);
    }
  }
}

Matrix augment_batch(const Batch& b, const LabeledDataset& ds, const AugmentPolicy& policy,
                     const RngStream& epoch_rng) {
  if (policy.empty()) return b.x;
  Matrix out(b.x.rows(), b.x.cols());
  for (std::size_t r = 0; r < b.x.rows(); ++r) {
    const auto view = apply(policy, b.x.row(r), ds.image, epoch_rng.child(b.index[r]));
    std::copy(view.begin(), view.end(), out.row(r).begin());
  }
  return out;
}

double draw_mix_weight(const LsrHyperParams& hp, const RngStream& rng, int epoch, int batch_no) {
  if (hp.fixed_mix_weight) return *hp.fixed_mix_weight;
  RngStream r = rng.child(Purpose::kMixWeight)
                    .child(static_cast<std::uint64_t>(epoch))
                    .child(static_cast<std::uint64_t>(batch_no));
  return sample_mix_weight(r);
}

// Backward both heads through the shared parameters; a head whose adjoint is
// identically zero contributes nothing and is skipped.
Gradients dual_backward(const ModelParams& params, const ForwardCache& c1, const ForwardCache& c2,
                        const LossOutput& loss) {
  Gradients g = backward(params, c1, loss.adjoint_o1);
  if (loss.uses_second_head()) backward(params, c2, loss.adjoint_o2, g);
  return g;
}

// Shared skeleton for the two-view trainers: forward x and Augment(x), compute
// the loss, step.
template <class LossFn>
LocalResult train_two_view(const ModelParams& global, const LabeledDataset& ds,
                           const ClientShard& shard, const FedConfig& cfg,
                           const AugmentPolicy& policy, const RngStream& rng, LossFn&& loss_fn) {
  ModelParams local = global;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const RngStream aug_rng = rng.child(Purpose::kAugment);
  for_each_batch(ds, shard, cfg, rng, [&](int epoch, int batch_no, Batch& b) {
    const Matrix x_aug =
        augment_batch(b, ds, policy, aug_rng.child(static_cast<std::uint64_t>(epoch)));
    ForwardCache c1;
    ForwardCache c2;
    const Matrix o1 = forward(local, b.x, &c1);
    const Matrix o2 = forward(local, x_aug, &c2);
    const LossOutput loss = loss_fn(epoch, batch_no, o1, o2, b.y);
    sgd_step_inplace(local, dual_backward(local, c1, c2, loss), cfg.lr);
    loss_sum += loss.value;
    ++batches;
  });
  return {std::move(local), batches ? loss_sum / static_cast<double>(batches) : 0.0};
}

template <class LossFn>
LocalResult train_single_view(const ModelParams& global, const LabeledDataset& ds,
                              const ClientShard& shard, const FedConfig& cfg,
                              const RngStream& rng, LossFn&& loss_fn) {
  ModelParams local = global;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  for_each_batch(ds, shard, cfg, rng, [&](int, int, Batch& b) {
    ForwardCache cache;
    const Matrix o = forward(local, b.x, &cache);
    const LossOutput loss = loss_fn(o, b.y);
    sgd_step_inplace(local, backward(local, cache, loss.adjoint_o1), cfg.lr);
    loss_sum += loss.value;
    ++batches;
  });
  return {std::move(local), batches ? loss_sum / static_cast<double>(batches) : 0.0};
}

Matrix gather_rows(const Matrix& m, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::copy_n(m.row(rows[r]).begin(), m.cols(), out.row(r).begin());
  }
  return out;
}

// Loss on the kept rows only, with the adjoint scattered back to batch shape.
LossOutput subset_loss(const Matrix& logits, const std::vector<int>& labels,
                       std::span<const std::size_t> keep, std::optional<double> sharpen_t,
                       double clamp_lo) {
  const Matrix sub = gather_rows(logits, keep);
  std::vector<int> sub_y;
  for (std::size_t r : keep) sub_y.push_back(labels[r]);
  LossOutput inner;
  if (sharpen_t) {
    LsrHyperParams hp;
    hp.sharpen_temperature = *sharpen_t;
    hp.clamp_lo = clamp_lo;
    inner = lsr_cls_loss(sub, sub, sub_y, 1.0, hp);
  } else {
    inner = ce_loss(sub, sub_y);
  }
  LossOutput out{inner.value, Matrix(logits.rows(), logits.cols()), Matrix()};
  for (std::size_t r = 0; r < keep.size(); ++r) {
    std::copy_n(inner.adjoint_o1.row(r).begin(), logits.cols(), out.adjoint_o1.row(keep[r]).begin());
  }
  return out;
}

}  // namespace

std::string to_string(Method method) {
  switch (method) {
    case Method::kFedAvgCe: return "fedavg_ce";
    case Method::kLsr: return "lsr";
    case Method::kLsrPlus: return "lsr_plus";
    case Method::kSymCe: return "sym_ce";
    case Method::kCoteaching: return "coteaching";
    case Method::kCoteachingLsr: return "coteaching_lsr";
    case Method::kSymCeLsr: return "sym_ce_lsr";
    case Method::kLsrNoMixup: return "lsr_no_mixup";
  }
  return "fedavg_ce";
}

Method parse_method(const std::string& name) {
  for (Method m : {Method::kFedAvgCe, Method::kLsr, Method::kLsrPlus, Method::kSymCe,
                   Method::kCoteaching, Method::kCoteachingLsr, Method::kSymCeLsr,
                   Method::kLsrNoMixup}) {
    if (to_string(m) == name) return m;
  }
  throw InvalidParameter("unknown method '" + name + "'");
}

bool uses_two_networks(Method method) {
  return method == Method::kCoteaching || method == Method::kCoteachingLsr;
}

void FedConfig::validate() const {
  if (num_clients < 1) throw InvalidParameter("num_clients must be >= 1");
  if (clients_per_round < 1 || clients_per_round > num_clients) {
    throw InvalidParameter("clients_per_round must lie in [1, num_clients]");
  }
  if (rounds < 0) throw InvalidParameter("rounds must be >= 0");
  if (local_epochs < 0) throw InvalidParameter("local_epochs must be >= 0");
  if (batch_size < 1) throw InvalidParameter("batch_size must be >= 1");
  if (!(lr >= 0.0)) throw InvalidParameter("lr must be >= 0");
  if (warmup_rounds < 0) throw InvalidParameter("warmup_rounds must be >= 0");
  if (workers < 1) throw InvalidParameter("workers must be >= 1");
}

void CoteachingConfig::validate() const {
  if (!(forget_rate >= 0.0 && forget_rate < 1.0)) throw InvalidParameter("forget_rate must lie in [0, 1)");
  if (ramp_length < 0) throw InvalidParameter("ramp_length must be >= 0");
}

SelectionStats& SelectionStats::operator+=(const SelectionStats& o) {
  selected += o.selected;
  selected_clean += o.selected_clean;
  seen += o.seen;
  seen_clean += o.seen_clean;
  return *this;
}

std::vector<int> select_clients(int num_clients, int k, RngStream& rng) {
  if (k < 0 || k > num_clients) throw InvalidParameter("select_clients: k must lie in [0, N]");
  std::vector<int> ids(static_cast<std::size_t>(num_clients));
  std::iota(ids.begin(), ids.end(), 0);
  // Partial Fisher-Yates: the first k slots are a uniform k-subset.
  for (int i = 0; i < k; ++i) {
    const auto remaining = static_cast<std::uint64_t>(num_clients - i);
    const auto j = static_cast<std::size_t>(i) + static_cast<std::size_t>(rng() % remaining);
    std::swap(ids[static_cast<std::size_t>(i)], ids[j]);
  }
  ids.resize(static_cast<std::size_t>(k));
  return ids;
}

double gamma_schedule(int t, int warmup_rounds, double gamma) {
  if (t < 0) throw InvalidParameter("gamma_schedule: t must be >= 0");
  if (warmup_rounds <= 0) return gamma;
  return gamma * std::min(static_cast<double>(t) / static_cast<double>(warmup_rounds), 1.0);
}

double coteaching_keep_ratio(int t, const CoteachingConfig& ct) {
  const double tau = ct.forget_rate;
  if (ct.ramp_length <= 0) return 1.0 - tau;
  return 1.0 - std::min(tau * static_cast<double>(t) / static_cast<double>(ct.ramp_length), tau);
}

LocalResult local_train_ce(const ModelParams& global, const LabeledDataset& ds,
                           const ClientShard& shard, const FedConfig& cfg, const RngStream& rng) {
  return train_single_view(global, ds, shard, cfg, rng,
                           [](const Matrix& o, const std::vector<int>& y) { return ce_loss(o, y); });
}

LocalResult local_train_symce(const ModelParams& global, const LabeledDataset& ds,
                              const ClientShard& shard, const FedConfig& cfg,
                              const SymCeParams& sp, const RngStream& rng) {
  return train_single_view(global, ds, shard, cfg, rng,
                           [&](const Matrix& o, const std::vector<int>& y) {
                             return symmetric_ce_loss(o, y, sp);
                           });
}

LocalResult local_train_lsr(const ModelParams& global, const LabeledDataset& ds,
                            const ClientShard& shard, const FedConfig& cfg,
                            const LsrHyperParams& hp, const AugmentPolicy& policy,
                            const RngStream& rng, double gamma_t) {
  hp.validate();
  return train_two_view(global, ds, shard, cfg, policy, rng,
                        [&](int epoch, int batch_no, const Matrix& o1, const Matrix& o2,
                            const std::vector<int>& y) {
                          const double lambda = draw_mix_weight(hp, rng, epoch, batch_no);
                          return lsr_plus_loss(o1, o2, y, lambda, gamma_t, hp);
                        });
}

LocalResult local_train_symce_lsr(const ModelParams& global, const LabeledDataset& ds,
                                  const ClientShard& shard, const FedConfig& cfg,
                                  const LsrHyperParams& hp, const SymCeParams& sp,
                                  const AugmentPolicy& policy, const RngStream& rng,
                                  double gamma_t) {
  hp.validate();
  return train_two_view(global, ds, shard, cfg, policy, rng,
                        [&](int epoch, int batch_no, const Matrix& o1, const Matrix& o2,
                            const std::vector<int>& y) {
                          const double lambda = draw_mix_weight(hp, rng, epoch, batch_no);
                          LossOutput loss = mixed_symmetric_ce_loss(o1, o2, y, lambda, sp);
                          if (gamma_t == 0.0 || hp.distill == DistillKind::kNone) return loss;
                          return add_scaled(std::move(loss), self_distill_loss(o1, o2, hp), gamma_t);
                        });
}

// Ablation without MixUp prediction: each epoch the shard is expanded with a
// fresh augmented copy of every sample, and the 2n samples are shuffled
// together and trained with plain CE. An epoch therefore takes twice as many
// steps as on the original shard.
LocalResult local_train_lsr_no_mixup(const ModelParams& global, const LabeledDataset& ds,
                                     const ClientShard& shard, const FedConfig& cfg,
                                     const AugmentPolicy& policy, const RngStream& rng) {
  if (shard.indices.empty()) throw InvalidInput("local training on an empty shard");
  const std::size_t n = shard.size();
  auto batch_size = static_cast<std::size_t>(cfg.batch_size);
  if (batch_size > 2 * n) {
    warn_oversized_batch(batch_size, 2 * n);
    batch_size = 2 * n;
  }
  ModelParams local = global;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  const RngStream shuffle_rng = rng.child(Purpose::kShuffle);
  const RngStream aug_rng = rng.child(Purpose::kAugment);
  // Entry e < n is original sample e, entry n + e its augmented copy.
  std::vector<std::size_t> order(2 * n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Matrix expanded(2 * n, ds.dim());
  for (int epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    const Batch all = gather(ds, shard.indices);
    const Matrix aug = augment_batch(all, ds, policy, aug_rng.child(static_cast<std::uint64_t>(epoch)));
    std::copy(all.x.data().begin(), all.x.data().end(), expanded.data().begin());
    std::copy(aug.data().begin(), aug.data().end(),
              expanded.data().begin() + static_cast<std::ptrdiff_t>(n * ds.dim()));
    RngStream epoch_rng = shuffle_rng.child(static_cast<std::uint64_t>(epoch));
    std::shuffle(order.begin(), order.end(), epoch_rng);
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      const std::size_t stop = std::min(order.size(), start + batch_size);
      const auto rows = std::span<const std::size_t>(order).subspan(start, stop - start);
      const Matrix x = gather_rows(expanded, rows);
      std::vector<int> y;
      y.reserve(rows.size());
      for (std::size_t e : rows) y.push_back(all.y[e % n]);
      ForwardCache cache;
      const Matrix o = forward(local, x, &cache);
      const LossOutput loss = ce_loss(o, y);
      sgd_step_inplace(local, backward(local, cache, loss.adjoint_o1), cfg.lr);
      loss_sum += loss.value;
      ++batches;
    }
  }
  return {std::move(local), batches ? loss_sum / static_cast<double>(batches) : 0.0};
}

PeerResult local_train_coteaching(const std::pair<ModelParams, ModelParams>& global,
                                  const LabeledDataset& ds, const ClientShard& shard,
                                  const FedConfig& cfg, const CoteachingConfig& ct,
                                  const RngStream& rng, int round,
                                  std::optional<double> sharpen_temperature, double clamp_lo) {
  ct.validate();
  PeerResult out{global.first, global.second, 0.0, {}};
  double loss_sum = 0.0;
  std::size_t batches = 0;

  auto per_sample = [&](const Matrix& o, const std::vector<int>& y) {
    return sharpen_temperature ? per_sample_sharpened_ce(o, y, *sharpen_temperature, clamp_lo)
                               : per_sample_ce(o, y);
  };

  for_each_batch(ds, shard, cfg, rng, [&](int epoch, int, Batch& b) {
    const int t = ct.per_epoch ? round * cfg.local_epochs + epoch : round;
    const double keep_ratio = coteaching_keep_ratio(t, ct);

    ForwardCache ca;
    ForwardCache cb;
    const Matrix oa = forward(out.first, b.x, &ca);
    const Matrix ob = forward(out.second, b.x, &cb);
    const auto keep_by_a = small_loss_select(per_sample(oa, b.y), keep_ratio);
    const auto keep_by_b = small_loss_select(per_sample(ob, b.y), keep_ratio);
    if (keep_by_a.empty() || keep_by_b.empty()) {
      spdlog::warn("co-teaching: empty keep set, skipping batch");
      return;
    }

    for (std::size_t r = 0; r < b.index.size(); ++r) {
      const bool clean = ds.observed_labels[b.index[r]] == ds.true_labels[b.index[r]];
      out.selection.seen += 2;
      out.selection.seen_clean += clean ? 2 : 0;
    }
    for (const auto* keep : {&keep_by_a, &keep_by_b}) {
      for (std::size_t r : *keep) {
        ++out.selection.selected;
        if (ds.observed_labels[b.index[r]] == ds.true_labels[b.index[r]]) ++out.selection.selected_clean;
      }
    }

    // Each network learns from the samples its peer considers clean.
    const LossOutput la = subset_loss(oa, b.y, keep_by_b, sharpen_temperature, clamp_lo);
    const LossOutput lb = subset_loss(ob, b.y, keep_by_a, sharpen_temperature, clamp_lo);
    sgd_step_inplace(out.first, backward(out.first, ca, la.adjoint_o1), cfg.lr);
    sgd_step_inplace(out.second, backward(out.second, cb, lb.adjoint_o1), cfg.lr);
    loss_sum += 0.5 * (la.value + lb.value);
    ++batches;
  });
  out.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
  return out;
}

ModelParams aggregate(std::span<const ModelParams> models, std::span<const std::size_t> sizes) {
  if (models.empty()) throw InvalidInput("aggregate: no models");
  if (models.size() != sizes.size()) throw InvalidInput("aggregate: one size per model required");
  double total = 0.0;
  for (std::size_t k = 0; k < models.size(); ++k) {
    if (!models[k].same_shape(models.front())) throw InvalidInput("aggregate: model shapes differ");
    if (sizes[k] == 0) throw InvalidInput("aggregate: client sizes must be > 0");
    total += static_cast<double>(sizes[k]);
  }
  if (models.size() == 1) return models.front();
  // Offsets from the first model: an entry on which all models agree is
  // reproduced exactly, whatever the weights.
  ModelParams out = models.front();
  auto& acc = out.flat();
  const auto& base = models.front().flat();
  for (std::size_t k = 1; k < models.size(); ++k) {
    const double w = static_cast<double>(sizes[k]) / total;
    const auto& src = models[k].flat();
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += w * (src[i] - base[i]);
  }
  return out;
}

ModelParams initial_params(const FederationSetup& setup, std::size_t input_dim, int num_classes,
                           bool peer) {
  std::vector<std::size_t> sizes{input_dim};
  sizes.insert(sizes.end(), setup.hidden_layers.begin(), setup.hidden_layers.end());
  sizes.push_back(static_cast<std::size_t>(num_classes));
  std::uint64_t seed = setup.seed;
  if (peer) seed = RngStream(setup.seed, {static_cast<std::uint64_t>(Purpose::kPeerInit)})();
  return init_params(sizes, seed);
}

FederationResult run_federation(const FederationSetup& setup, const LabeledDataset& train,
                                const std::vector<ClientShard>& partition,
                                const LabeledDataset& test, const RoundObserver& observer) {
  const FedConfig& cfg = setup.fed;
  cfg.validate();
  setup.lsr.validate();
  setup.symce.validate();
  setup.coteaching.validate();
  setup.augment.validate();
  if (partition.size() != static_cast<std::size_t>(cfg.num_clients)) {
    throw InvalidParameter("partition has " + std::to_string(partition.size()) +
                           " shards but num_clients is " + std::to_string(cfg.num_clients));
  }

  const bool two_nets = uses_two_networks(cfg.method);
  FederationResult result;
  result.global = initial_params(setup, train.dim(), train.num_classes);
  if (two_nets) result.peer = initial_params(setup, train.dim(), train.num_classes, true);

  LsrHyperParams hp = setup.lsr;
  if (cfg.method != Method::kLsrPlus) hp.entropy_weight = 0.0;

  const RngStream root(setup.seed);
  for (int t = 0; t < cfg.rounds; ++t) {
    RngStream select_rng = root.child(Purpose::kSelect).child(static_cast<std::uint64_t>(t));
    RoundMetrics m;
    m.round = t;
    m.gamma_t = gamma_schedule(t, cfg.warmup_rounds, hp.gamma);
    m.selected_clients = select_clients(cfg.num_clients, cfg.clients_per_round, select_rng);

    const std::size_t k = m.selected_clients.size();
    std::vector<ModelParams> locals(k);
    std::vector<ModelParams> peers(two_nets ? k : 0);
    std::vector<double> losses(k, 0.0);
    std::vector<SelectionStats> stats(k);
    std::vector<std::size_t> sizes(k);

    auto run_client = [&](std::size_t slot) {
      const int id = m.selected_clients[slot];
      const ClientShard& shard = partition[static_cast<std::size_t>(id)];
      const RngStream rng = root.child(Purpose::kLocalTrain)
                                .child(static_cast<std::uint64_t>(t))
                                .child(static_cast<std::uint64_t>(id));
      sizes[slot] = shard.size();
      LocalResult lr;
      switch (cfg.method) {
        case Method::kFedAvgCe: lr = local_train_ce(result.global, train, shard, cfg, rng); break;
        case Method::kSymCe:
          lr = local_train_symce(result.global, train, shard, cfg, setup.symce, rng);
          break;
        case Method::kLsr:
        case Method::kLsrPlus:
          lr = local_train_lsr(result.global, train, shard, cfg, hp, setup.augment, rng, m.gamma_t);
          break;
        case Method::kSymCeLsr:
          lr = local_train_symce_lsr(result.global, train, shard, cfg, hp, setup.symce,
                                     setup.augment, rng, m.gamma_t);
          break;
        case Method::kLsrNoMixup:
          lr = local_train_lsr_no_mixup(result.global, train, shard, cfg, setup.augment, rng);
          break;
        case Method::kCoteaching:
        case Method::kCoteachingLsr: {
          const std::optional<double> sharpen_t =
              cfg.method == Method::kCoteachingLsr ? std::optional<double>(hp.sharpen_temperature)
                                                   : std::nullopt;
          PeerResult pr = local_train_coteaching({result.global, *result.peer}, train, shard, cfg,
                                                 setup.coteaching, rng, t, sharpen_t, hp.clamp_lo);
          locals[slot] = std::move(pr.first);
          peers[slot] = std::move(pr.second);
          losses[slot] = pr.mean_loss;
          stats[slot] = pr.selection;
          return;
        }
      }
      locals[slot] = std::move(lr.params);
      losses[slot] = lr.mean_loss;
    };

    const auto n_workers = std::min<std::size_t>(static_cast<std::size_t>(cfg.workers), k);
    if (n_workers <= 1) {
      for (std::size_t s = 0; s < k; ++s) run_client(s);
    } else {
      std::atomic<std::size_t> next{0};
      std::vector<std::exception_ptr> errors(n_workers);
      std::vector<std::thread> pool;
      for (std::size_t w = 0; w < n_workers; ++w) {
        pool.emplace_back([&, w] {
          try {
            for (std::size_t s = next++; s < k; s = next++) run_client(s);
          } catch (...) {
            errors[w] = std::current_exception();
          }
        });
      }
      for (auto& th : pool) th.join();
      for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
      }
    }

    result.global = aggregate(locals, sizes);
    if (two_nets) result.peer = aggregate(peers, sizes);

    m.mean_train_loss =
        k ? std::accumulate(losses.begin(), losses.end(), 0.0) / static_cast<double>(k) : 0.0;
    if (two_nets) {
      m.test_accuracy = 0.5 * (evaluate(result.global, test) + evaluate(*result.peer, test));
      SelectionStats total;
      for (const auto& s : stats) total += s;
      m.selection = total;
    } else {
      m.test_accuracy = evaluate(result.global, test);
    }
    if (observer) observer(m, result.global, result.peer ? &*result.peer : nullptr);
    result.metrics.push_back(std::move(m));
  }
  return result;
}

}  // namespace fedlsr
