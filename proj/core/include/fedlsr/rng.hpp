// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>

namespace fedlsr {

/// Purpose tags used as the last element of an RngStream path, so that every
/// consumer of randomness draws from its own stream.
enum class Purpose : std::uint64_t {
  kInit = 1,
  kNoise = 2,
  kPartition = 3,
  kSelect = 4,
  kShuffle = 5,
  kMixWeight = 6,
  kAugment = 7,
  kSynthetic = 8,
  kPeerInit = 9,
  kLocalTrain = 10,
};

/// Counter-based random stream keyed on (master_seed, path).
///
/// The key is a SplitMix64 hash chain over the seed and path elements; the
/// n-th output is the SplitMix64 finalizer applied to key + n * golden_gamma.
/// Deriving a child never advances the parent, so streams can be handed to
/// parallel workers in any order and still replay bit-identically.
class RngStream {
 public:
  using result_type = std::uint64_t;

  explicit RngStream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path = {});

  /// Stream at path + {tag}.
  RngStream child(std::uint64_t tag) const;
  RngStream child(Purpose tag) const { return child(static_cast<std::uint64_t>(tag)); }

  result_type operator()();

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform();

  std::uint64_t key() const { return key_; }

 private:
  explicit RngStream(std::uint64_t key, bool) : key_(key) {}

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace fedlsr
