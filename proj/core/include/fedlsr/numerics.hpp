// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <vector>

#include "fedlsr/rng.hpp"

namespace fedlsr {

/// Probability vector over M classes; entries in [0, 1] summing to 1.
using ProbVec = std::vector<double>;
/// Real-valued class scores.
using LogitVec = std::vector<double>;

/// Numerically stable softmax. Throws InvalidInput on non-finite logits.
ProbVec softmax(std::span<const double> logits);

/// softmax(logits / temperature). Throws InvalidParameter if temperature <= 0.
ProbVec tempered_softmax(std::span<const double> logits, double temperature);

/// log(sum(exp(logits))), stable.
double log_sum_exp(std::span<const double> logits);

/// p_i^(1/T) / sum_j p_j^(1/T). Throws InvalidParameter if T <= 0.
ProbVec sharpen(std::span<const double> p, double temperature);

/// Each entry floored at `lo` and capped at 1. No renormalization.
ProbVec clamp_probs(std::span<const double> p, double lo);

/// Shannon entropy in nats; 0 log 0 = 0.
double entropy(std::span<const double> p);

/// KL(p || q) in nats. Entries of q must be positive wherever p is.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Jensen-Shannon divergence 0.5 KL(p||U) + 0.5 KL(q||U), U = (p + q) / 2.
double js_divergence(std::span<const double> p, std::span<const double> q);

/// Draw from Beta(a, b) via the gamma-ratio construction.
double sample_beta(RngStream& rng, double a, double b);

/// Mixing weight for MixUp prediction, lambda ~ Beta(1, 1).
double sample_mix_weight(RngStream& rng);

/// Standard normal draw scaled by sigma.
double sample_normal(RngStream& rng, double mean, double sigma);

/// Index of the largest entry; ties go to the lowest index.
std::size_t argmax(std::span<const double> v);

}  // namespace fedlsr
