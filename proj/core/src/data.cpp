// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/data.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "fedlsr/error.hpp"
#include "fedlsr/numerics.hpp"
#include "fedlsr/rng.hpp"

namespace fedlsr {
namespace {

constexpr std::uint32_t kIdxImageMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelMagic = 0x00000801;
constexpr double kSyntheticSigma = 0.25;

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  std::array<unsigned char, 4> b{};
  if (!in.read(reinterpret_cast<char*>(b.data()), 4)) {
    throw FormatError("IDX: truncated header in " + what);
  }
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

std::vector<unsigned char> read_payload(std::istream& in, std::size_t count,
                                        const std::string& what) {
  std::vector<unsigned char> buf(count);
  if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count))) {
    throw FormatError("IDX: payload shorter than declared dimensions in " + what);
  }
  return buf;
}

std::vector<std::vector<std::size_t>> indices_by_class(const std::vector<int>& labels,
                                                       int num_classes) {
  std::vector<std::vector<std::size_t>> out(static_cast<std::size_t>(num_classes));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    out[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  return out;
}

void check_ratio(const NoiseSpec& spec, int num_classes) {
  if (!(spec.ratio >= 0.0 && spec.ratio < 1.0)) {
    throw InvalidParameter("noise ratio must lie in [0, 1)");
  }
  if (num_classes < 2) throw InvalidParameter("noise injection needs at least 2 classes");
}

std::size_t flip_count(double ratio, std::size_t count) {
  return static_cast<std::size_t>(std::llround(ratio * static_cast<double>(count)));
}

}  // namespace

std::string to_string(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::kNone: return "none";
    case NoiseKind::kSymmetric: return "symmetric";
    case NoiseKind::kPairwise: return "pairwise";
  }
  return "none";
}

NoiseKind parse_noise_kind(const std::string& name) {
  if (name == "none") return NoiseKind::kNone;
  if (name == "symmetric") return NoiseKind::kSymmetric;
  if (name == "pairwise") return NoiseKind::kPairwise;
  throw InvalidParameter("unknown noise type '" + name + "'");
}

void LabeledDataset::validate() const {
  if (num_classes < 1) throw DataError("dataset needs at least one class");
  if (true_labels.size() != observed_labels.size() || true_labels.size() != features.rows()) {
    throw DataError("dataset sizes disagree");
  }
  for (std::size_t i = 0; i < true_labels.size(); ++i) {
    if (true_labels[i] < 0 || true_labels[i] >= num_classes || observed_labels[i] < 0 ||
        observed_labels[i] >= num_classes) {
      throw DataError("label out of range at sample " + std::to_string(i));
    }
  }
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  if (image && image->size() != features.cols()) {
    throw DataError("image shape does not match feature dimension");
  }
}

LabeledDataset LabeledDataset::subset(const std::vector<std::size_t>& indices) const {
  LabeledDataset out;
  out.num_classes = num_classes;
  out.image = image;
  out.features = Matrix(indices.size(), features.cols());
  out.true_labels.reserve(indices.size());
  out.observed_labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    const std::size_t i = indices.at(r);
    if (i >= size()) throw InvalidInput("subset index out of range");
    std::copy_n(features.row(i).begin(), features.cols(), out.features.row(r).begin());
    out.true_labels.push_back(true_labels[i]);
    out.observed_labels.push_back(observed_labels[i]);
  }
  return out;
}

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        int num_classes) {
  std::ifstream img(images, std::ios::binary);
  if (!img) throw FormatError("cannot open " + images.string());
  std::ifstream lab(labels, std::ios::binary);
  if (!lab) throw FormatError("cannot open " + labels.string());

  if (read_be32(img, images.string()) != kIdxImageMagic) {
    throw FormatError("IDX: bad image magic in " + images.string());
  }
  const std::size_t n = read_be32(img, images.string());
  const std::size_t rows = read_be32(img, images.string());
  const std::size_t cols = read_be32(img, images.string());

  if (read_be32(lab, labels.string()) != kIdxLabelMagic) {
    throw FormatError("IDX: bad label magic in " + labels.string());
  }
  const std::size_t n_labels = read_be32(lab, labels.string());
  if (n_labels != n) {
    throw FormatError("IDX: " + std::to_string(n) + " images but " + std::to_string(n_labels) +
                      " labels");
  }

  const std::size_t d = rows * cols;
  const auto pixels = read_payload(img, n * d, images.string());
  const auto raw_labels = read_payload(lab, n, labels.string());

  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.image = ImageShape{rows, cols, 1};
  ds.features = Matrix(n, d);
  for (std::size_t i = 0; i < n * d; ++i) ds.features.data()[i] = pixels[i] / 255.0;
  ds.true_labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int y = raw_labels[i];
    if (y >= num_classes) {
      throw DataError("IDX: label " + std::to_string(y) + " at sample " + std::to_string(i) +
                      " outside [0, " + std::to_string(num_classes) + ")");
    }
    ds.true_labels.push_back(y);
  }
  ds.observed_labels = ds.true_labels;
  return ds;
}

LabeledDataset load_csv(const std::filesystem::path& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());

  std::vector<int> labels;
  std::vector<double> values;
  std::size_t width = 0;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<double> fields;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        fields.push_back(std::stod(cell, &used));
        if (cell.find_first_not_of(" \t", used) != std::string::npos) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
      if (!numeric) break;
    }
    if (!numeric) {
      if (labels.empty() && width == 0 && line_no == 1) continue;  // header
      throw FormatError("CSV: non-numeric field on line " + std::to_string(line_no));
    }
    if (fields.size() < 2) throw FormatError("CSV: line " + std::to_string(line_no) + " has no features");
    if (width == 0) width = fields.size();
    if (fields.size() != width) {
      throw FormatError("CSV: line " + std::to_string(line_no) + " has " +
                        std::to_string(fields.size()) + " fields, expected " + std::to_string(width));
    }
    const double label = fields.front();
    if (label != std::floor(label) || label < 0 || label >= num_classes) {
      throw DataError("CSV: label out of range on line " + std::to_string(line_no));
    }
    labels.push_back(static_cast<int>(label));
    values.insert(values.end(), fields.begin() + 1, fields.end());
  }

  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix(labels.size(), width == 0 ? 0 : width - 1);
  ds.features.data() = std::move(values);
  ds.true_labels = labels;
  ds.observed_labels = labels;
  ds.validate();
  return ds;
}

LabeledDataset generate_synthetic(std::size_t n, int num_classes, std::size_t dim,
                                  std::uint64_t seed) {
  if (num_classes < 1 || n < static_cast<std::size_t>(num_classes)) {
    throw InvalidParameter("generate_synthetic: need n >= M >= 1");
  }
  if (dim < 2) throw InvalidParameter("generate_synthetic: need d >= 2");

  RngStream base(seed, {static_cast<std::uint64_t>(Purpose::kSynthetic)});
  RngStream centre_rng = base.child(0);
  Matrix centres(static_cast<std::size_t>(num_classes), dim);
  for (std::size_t c = 0; c < centres.rows(); ++c) {
    double norm = 0.0;
    for (double& v : centres.row(c)) {
      v = sample_normal(centre_rng, 0.0, 1.0);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (double& v : centres.row(c)) v /= norm;
  }

  RngStream sample_rng = base.child(1);
  LabeledDataset ds;
  ds.num_classes = num_classes;
  ds.features = Matrix(n, dim);
  ds.true_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = static_cast<int>(i % static_cast<std::size_t>(num_classes));
    ds.true_labels[i] = c;
    const auto centre = centres.row(static_cast<std::size_t>(c));
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      row[j] = centre[j] + sample_normal(sample_rng, 0.0, kSyntheticSigma);
    }
  }
  ds.observed_labels = ds.true_labels;
  return ds;
}

LabeledDataset inject_symmetric_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::kSymmetric) throw InvalidParameter("expected symmetric noise spec");
  check_ratio(spec, ds.num_classes);
  LabeledDataset out = ds;
  if (spec.ratio == 0.0) return out;

  const auto m = static_cast<std::size_t>(ds.num_classes);
  const auto by_class = indices_by_class(ds.true_labels, ds.num_classes);
  RngStream rng(spec.seed, {static_cast<std::uint64_t>(Purpose::kNoise)});
  for (std::size_t c = 0; c < m; ++c) {
    RngStream class_rng = rng.child(c);
    auto members = by_class[c];
    std::shuffle(members.begin(), members.end(), class_rng);
    const std::size_t k = flip_count(spec.ratio, members.size());

    // Wrong classes in a seeded order; the first (k mod (M-1)) get one extra.
    std::vector<int> others;
    for (std::size_t j = 0; j < m; ++j) {
      if (j != c) others.push_back(static_cast<int>(j));
    }
    std::shuffle(others.begin(), others.end(), class_rng);
    const std::size_t base = k / others.size();
    const std::size_t extra = k % others.size();

    std::size_t next = 0;
    for (std::size_t o = 0; o < others.size(); ++o) {
      const std::size_t quota = base + (o < extra ? 1 : 0);
      for (std::size_t q = 0; q < quota; ++q) out.observed_labels[members[next++]] = others[o];
    }
  }
  return out;
}

LabeledDataset inject_pairwise_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  if (spec.kind != NoiseKind::kPairwise) throw InvalidParameter("expected pairwise noise spec");
  check_ratio(spec, ds.num_classes);
  if (spec.ratio > 0.5) {
    spdlog::warn("pairwise noise ratio {} exceeds 0.5; the flipped class becomes the majority",
                 spec.ratio);
  }
  LabeledDataset out = ds;
  if (spec.ratio == 0.0) return out;

  const auto m = static_cast<std::size_t>(ds.num_classes);
  const auto by_class = indices_by_class(ds.true_labels, ds.num_classes);
  RngStream rng(spec.seed, {static_cast<std::uint64_t>(Purpose::kNoise)});
  for (std::size_t c = 0; c < m; ++c) {
    RngStream class_rng = rng.child(c);
    auto members = by_class[c];
    std::shuffle(members.begin(), members.end(), class_rng);
    const std::size_t k = flip_count(spec.ratio, members.size());
    const int target = static_cast<int>((c + 1) % m);
    for (std::size_t q = 0; q < k; ++q) out.observed_labels[members[q]] = target;
  }
  return out;
}

LabeledDataset inject_noise(const LabeledDataset& ds, const NoiseSpec& spec) {
  switch (spec.kind) {
    case NoiseKind::kNone: return ds;
    case NoiseKind::kSymmetric: return inject_symmetric_noise(ds, spec);
    case NoiseKind::kPairwise: return inject_pairwise_noise(ds, spec);
  }
  return ds;
}

std::vector<std::vector<double>> noise_transition_matrix(NoiseKind kind, double ratio,
                                                         int num_classes) {
  const auto m = static_cast<std::size_t>(num_classes);
  std::vector<std::vector<double>> t(m, std::vector<double>(m, 0.0));
  for (std::size_t c = 0; c < m; ++c) {
    switch (kind) {
      case NoiseKind::kNone: t[c][c] = 1.0; break;
      case NoiseKind::kSymmetric:
        for (std::size_t j = 0; j < m; ++j) {
          t[c][j] = (j == c) ? 1.0 - ratio : ratio / static_cast<double>(m - 1);
        }
        break;
      case NoiseKind::kPairwise:
        t[c][c] = 1.0 - ratio;
        t[c][(c + 1) % m] += ratio;
        break;
    }
  }
  return t;
}

std::vector<std::vector<std::size_t>> transition_counts(const LabeledDataset& ds) {
  const auto m = static_cast<std::size_t>(ds.num_classes);
  std::vector<std::vector<std::size_t>> counts(m, std::vector<std::size_t>(m, 0));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ++counts[static_cast<std::size_t>(ds.true_labels[i])]
            [static_cast<std::size_t>(ds.observed_labels[i])];
  }
  return counts;
}

std::vector<ClientShard> partition_iid(const LabeledDataset& ds, int num_clients,
                                       std::uint64_t seed) {
  if (num_clients < 1) throw PartitionError("partition_iid: need at least one client");
  const auto n_clients = static_cast<std::size_t>(num_clients);
  if (ds.size() % n_clients != 0) {
    throw PartitionError("partition_iid: " + std::to_string(ds.size()) +
                         " samples do not split evenly over " + std::to_string(num_clients) +
                         " clients");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  RngStream rng(seed, {static_cast<std::uint64_t>(Purpose::kPartition), 0});
  std::shuffle(order.begin(), order.end(), rng);

  const std::size_t per = ds.size() / n_clients;
  std::vector<ClientShard> shards(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    shards[k].client_id = static_cast<int>(k);
    shards[k].indices.assign(order.begin() + static_cast<std::ptrdiff_t>(k * per),
                             order.begin() + static_cast<std::ptrdiff_t>((k + 1) * per));
  }
  return shards;
}

std::vector<ClientShard> partition_noniid(const LabeledDataset& ds, int num_clients,
                                          int classes_per_client, std::uint64_t seed) {
  const int m = ds.num_classes;
  if (num_clients < 1) throw PartitionError("partition_noniid: need at least one client");
  if (classes_per_client < 1 || classes_per_client > m) {
    throw PartitionError("partition_noniid: classes_per_client must lie in [1, " +
                         std::to_string(m) + "]");
  }
  const auto n_clients = static_cast<std::size_t>(num_clients);
  const auto cpc = static_cast<std::size_t>(classes_per_client);
  const auto n_classes = static_cast<std::size_t>(m);
  RngStream rng(seed, {static_cast<std::uint64_t>(Purpose::kPartition), 1});

  // Class slots: every class is used by floor(N*cpc/M) clients, and the
  // remainder slots go to randomly chosen classes.
  std::vector<std::size_t> slots(n_classes, n_clients * cpc / n_classes);
  {
    std::vector<std::size_t> cls(n_classes);
    std::iota(cls.begin(), cls.end(), std::size_t{0});
    std::shuffle(cls.begin(), cls.end(), rng);
    for (std::size_t r = 0; r < (n_clients * cpc) % n_classes; ++r) ++slots[cls[r]];
  }

  // Assign classes client by client. A class whose remaining slots equal the
  // number of remaining clients must be taken now; the rest are drawn with
  // probability proportional to remaining slots. This keeps every later
  // step feasible.
  std::vector<std::vector<std::size_t>> assigned(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    const std::size_t clients_left = n_clients - k;
    std::vector<std::size_t> picks;
    for (std::size_t c = 0; c < n_classes; ++c) {
      if (slots[c] == clients_left) picks.push_back(c);
    }
    while (picks.size() < cpc) {
      std::size_t total = 0;
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (std::find(picks.begin(), picks.end(), c) == picks.end()) total += slots[c];
      }
      if (total == 0) throw PartitionError("partition_noniid: class assignment is infeasible");
      std::size_t ticket = static_cast<std::size_t>(rng() % total);
      for (std::size_t c = 0; c < n_classes; ++c) {
        if (std::find(picks.begin(), picks.end(), c) != picks.end()) continue;
        if (ticket < slots[c]) {
          picks.push_back(c);
          break;
        }
        ticket -= slots[c];
      }
    }
    for (std::size_t c : picks) --slots[c];
    std::sort(picks.begin(), picks.end());
    assigned[k] = std::move(picks);
  }

  // Per-client, per-class quota: shard size split evenly across its classes.
  const std::size_t shard_size = ds.size() / n_clients;
  if (shard_size == 0) {
    throw PartitionError("partition_noniid: " + std::to_string(ds.size()) + " samples cannot fill " +
                         std::to_string(num_clients) + " non-empty shards");
  }
  std::vector<std::vector<std::size_t>> pool = indices_by_class(ds.true_labels, m);
  for (std::size_t c = 0; c < n_classes; ++c) {
    RngStream class_rng = rng.child(c);
    std::shuffle(pool[c].begin(), pool[c].end(), class_rng);
  }
  std::vector<std::size_t> demand(n_classes, 0);
  std::vector<std::vector<std::size_t>> quota(n_clients);
  for (std::size_t k = 0; k < n_clients; ++k) {
    quota[k].assign(cpc, shard_size / cpc);
    for (std::size_t j = 0; j < shard_size % cpc; ++j) ++quota[k][(k + j) % cpc];
    for (std::size_t j = 0; j < cpc; ++j) demand[assigned[k][j]] += quota[k][j];
  }
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (demand[c] > pool[c].size()) {
      throw PartitionError("partition_noniid: class " + std::to_string(c) + " needs " +
                           std::to_string(demand[c]) + " samples but has " +
                           std::to_string(pool[c].size()) +
                           " (shard size " + std::to_string(shard_size) + ", " +
                           std::to_string(classes_per_client) + " classes per client)");
    }
  }

  std::vector<std::size_t> cursor(n_classes, 0);
  std::vector<ClientShard> shards(n_clients);
  std::size_t used = 0;
  for (std::size_t k = 0; k < n_clients; ++k) {
    shards[k].client_id = static_cast<int>(k);
    for (std::size_t j = 0; j < cpc; ++j) {
      const std::size_t c = assigned[k][j];
      for (std::size_t q = 0; q < quota[k][j]; ++q) {
        shards[k].indices.push_back(pool[c][cursor[c]++]);
      }
    }
    used += shards[k].indices.size();
  }
  if (used < ds.size()) {
    spdlog::warn("partition_noniid: dropping {} of {} samples to keep shard sizes equal",
                 ds.size() - used, ds.size());
  }
  return shards;
}

std::pair<LabeledDataset, LabeledDataset> split_holdout(const LabeledDataset& ds,
                                                        std::size_t per_class) {
  std::vector<std::size_t> taken(static_cast<std::size_t>(ds.num_classes), 0);
  std::vector<std::size_t> keep;
  std::vector<std::size_t> hold;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    auto& t = taken[static_cast<std::size_t>(ds.true_labels[i])];
    if (t < per_class) {
      ++t;
      hold.push_back(i);
    } else {
      keep.push_back(i);
    }
  }
  return {ds.subset(keep), ds.subset(hold)};
}

}  // namespace fedlsr
