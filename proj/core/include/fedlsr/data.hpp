// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedlsr/matrix.hpp"

namespace fedlsr {

/// Spatial layout of image features, stored channel-last (HWC) in each row.
struct ImageShape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  std::size_t size() const { return height * width * channels; }
  bool operator==(const ImageShape&) const = default;
};

/// Features with their ground-truth labels and the labels a client observes.
struct LabeledDataset {
  Matrix features;
  std::vector<int> true_labels;
  std::vector<int> observed_labels;
  int num_classes = 0;
  std::optional<ImageShape> image;

  std::size_t size() const { return true_labels.size(); }
  std::size_t dim() const { return features.cols(); }

  /// Throws DataError if any invariant (label range, finiteness, sizes) fails.
  void validate() const;

  /// Subset in the given index order.
  LabeledDataset subset(const std::vector<std::size_t>& indices) const;
};

/// One client's slice of a training set.
struct ClientShard {
  int client_id = 0;
  std::vector<std::size_t> indices;

  std::size_t size() const { return indices.size(); }
  bool operator==(const ClientShard&) const = default;
};

enum class NoiseKind { kNone, kSymmetric, kPairwise };

struct NoiseSpec {
  NoiseKind kind = NoiseKind::kNone;
  double ratio = 0.0;
  std::uint64_t seed = 0;
};

std::string to_string(NoiseKind kind);
NoiseKind parse_noise_kind(const std::string& name);

/// Reads an IDX image file (magic 0x00000803) and its IDX label file
/// (magic 0x00000801). Pixels are scaled to [0, 1].
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int num_classes = 10);

/// One sample per row: label, then features. A non-numeric first row is
/// treated as a header and skipped. Features are taken as-is.
LabeledDataset load_csv(const std::filesystem::path& path, int num_classes);

/// Balanced Gaussian clusters around M random unit-sphere centres in d
/// dimensions, within-class standard deviation 0.25. Class of sample i is i mod M.
LabeledDataset generate_synthetic(std::size_t n, int num_classes, std::size_t dim,
                                  std::uint64_t seed);

/// Per true class, exactly round(ratio * count) samples are relabelled,
/// spread as evenly as possible over the other M - 1 classes.
LabeledDataset inject_symmetric_noise(const LabeledDataset& ds, const NoiseSpec& spec);

/// Per true class c, exactly round(ratio * count) samples are relabelled (c + 1) mod M.
LabeledDataset inject_pairwise_noise(const LabeledDataset& ds, const NoiseSpec& spec);

/// Dispatches on spec.kind; kNone returns a copy.
LabeledDataset inject_noise(const LabeledDataset& ds, const NoiseSpec& spec);

/// Target transition matrix T[true][observed] for a noise spec.
std::vector<std::vector<double>> noise_transition_matrix(NoiseKind kind, double ratio,
                                                         int num_classes);

/// Empirical counts C[true][observed].
std::vector<std::vector<std::size_t>> transition_counts(const LabeledDataset& ds);

/// Seeded global shuffle, then num_clients contiguous equal slices.
/// Throws PartitionError unless size is divisible by num_clients.
std::vector<ClientShard> partition_iid(const LabeledDataset& ds, int num_clients,
                                       std::uint64_t seed);

/// Each client holds samples from exactly classes_per_client true classes,
/// with equal shard sizes. Class choice is seeded and balanced so every class
/// is used by (almost) the same number of clients. Surplus samples that do
/// not fit an equal split are dropped with a warning.
std::vector<ClientShard> partition_noniid(const LabeledDataset& ds, int num_clients,
                                          int classes_per_client, std::uint64_t seed);

/// Deterministic stratified split: the first `per_class` samples of each
/// class (in index order) go to the second part.
std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& ds,
                                                        std::size_t per_class);

}  // namespace fedlsr
