// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/rng.hpp"

namespace fedlsr {
namespace {

constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;

std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t extend_key(std::uint64_t key, std::uint64_t tag) {
  return mix64(key ^ mix64(tag + kGoldenGamma));
}

}  // namespace

RngStream::RngStream(std::uint64_t master_seed, std::initializer_list<std::uint64_t> path)
    : key_(mix64(master_seed + kGoldenGamma)) {
  for (std::uint64_t tag : path) key_ = extend_key(key_, tag);
}

RngStream RngStream::child(std::uint64_t tag) const { return RngStream(extend_key(key_, tag), true); }

RngStream::result_type RngStream::operator()() {
  ++counter_;
  return mix64(key_ + counter_ * kGoldenGamma);
}

double RngStream::uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

}  // namespace fedlsr
