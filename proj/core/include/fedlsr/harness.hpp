// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "fedlsr/data.hpp"
#include "fedlsr/federation.hpp"

namespace fedlsr {

/// Dataset family; selects the default gamma row, warm-up length and
/// augmentation policy.
enum class DatasetFamily { kMnist, kFashionMnist, kCifar10, kSynthetic };

std::string to_string(DatasetFamily family);
DatasetFamily parse_dataset_family(const std::string& name);

enum class DatasetSource { kSynthetic, kIdx, kCsv };

struct DatasetSpec {
  DatasetSource source = DatasetSource::kSynthetic;
  DatasetFamily family = DatasetFamily::kSynthetic;
  int num_classes = 10;
  // synthetic
  std::size_t n = 10000;
  std::size_t n_test = 2000;
  std::size_t dim = 32;
  std::optional<std::uint64_t> seed;  ///< defaults to a stream of the master seed
  // idx / csv
  std::filesystem::path train_images;
  std::filesystem::path train_labels;
  std::filesystem::path test_images;
  std::filesystem::path test_labels;
  std::filesystem::path train_csv;
  std::filesystem::path test_csv;
  std::optional<ImageShape> image_shape;  ///< csv only; idx derives it from the header
};

struct PartitionSpec {
  bool iid = true;
  int classes_per_client = 5;
};

/// Fully resolved experiment: every default has been applied.
struct ExperimentConfig {
  DatasetSpec dataset;
  NoiseSpec noise;
  PartitionSpec partition;
  FederationSetup setup;
  std::filesystem::path output = "out";

  std::uint64_t seed() const { return setup.seed; }
  /// Canonical JSON with every field explicit; parsing it back yields an
  /// identical config.
  std::string to_json() const;
};

/// CLI overrides; each present field replaces the config value before
/// defaults are resolved.
struct ConfigOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> method;
  std::optional<std::string> noise_type;
  std::optional<double> noise_ratio;
  std::optional<std::filesystem::path> out;
};

/// Gamma from the per-family coefficient table, nearest tabulated ratio for
/// the noise kind; 0 for noise-free data.
double default_gamma(DatasetFamily family, NoiseKind kind, double ratio);
/// Warm-up rounds per family: 10, 20, 40, 20 (synthetic).
int default_warmup(DatasetFamily family);
AugmentPolicy default_augment(DatasetFamily family);

/// Parses and resolves a JSON config. Throws ConfigError whose message names
/// the offending key and its line.
ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {},
                              const std::string& origin = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path,
                             const ConfigOverrides& overrides = {});

struct ExperimentData {
  LabeledDataset train;  ///< noisy observed labels
  LabeledDataset test;   ///< clean
  std::vector<ClientShard> partition;
};

ExperimentData prepare_data(const ExperimentConfig& config);

struct ExperimentSummary {
  std::optional<double> final_acc_last10_mean;
  std::optional<double> best_acc;
  std::uint64_t seed = 0;
};

/// Mean of the last min(10, rounds) test accuracies; empty for zero rounds.
ExperimentSummary summarize(const std::vector<RoundMetrics>& metrics, std::uint64_t seed);

std::string metrics_csv(const std::vector<RoundMetrics>& metrics);

/// Runs one experiment and writes metrics.csv and summary.json into
/// config.output. Throws on failure.
ExperimentSummary execute(const ExperimentConfig& config);

/// Exit-code wrapper around load_config + execute: 0 ok, 1 runtime failure,
/// 2 invalid config.
int run_experiment(const std::filesystem::path& config_path, const ConfigOverrides& overrides = {});

struct MethodSummary {
  std::string method;
  double mean = 0.0;
  double std = 0.0;  ///< sample standard deviation, 0 for one seed
  std::vector<double> finals;
};

/// Runs every (method, seed) pair into <out>/<method>/seed_<s>/ and writes
/// comparison.json and comparison.csv into <out>. Methods keep input order.
std::vector<MethodSummary> compare_methods(const std::filesystem::path& config_path,
                                           const std::vector<std::string>& methods,
                                           const std::vector<std::uint64_t>& seeds,
                                           const ConfigOverrides& overrides = {});

/// Writes via a sibling temp file and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace fedlsr
