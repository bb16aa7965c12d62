// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "fedlsr/data.hpp"
#include "fedlsr/rng.hpp"

namespace fedlsr {

struct HorizontalFlip {
  double prob = 0.5;
};

struct Rotation {
  double max_degrees = 30.0;
};

struct FeatureJitter {
  double sigma = 0.05;
};

using AugmentOp = std::variant<HorizontalFlip, Rotation, FeatureJitter>;

/// Ordered list of stochastic ops producing the second view of a sample.
struct AugmentPolicy {
  std::vector<AugmentOp> ops;

  bool empty() const { return ops.empty(); }
  /// Throws InvalidParameter if any op parameter is out of range.
  void validate() const;
};

/// Rotates an HWC image by `degrees` (counter-clockwise) about its centre,
/// bilinear resampling, zero fill outside the source.
std::vector<double> rotate_image(std::span<const double> image, const ImageShape& shape,
                                 double degrees);

/// Rotation by an angle drawn uniformly from [-max_degrees, +max_degrees].
std::vector<double> random_rotation(std::span<const double> image,
                                    const std::optional<ImageShape>& shape, double max_degrees,
                                    RngStream& rng);

/// Mirrors columns (j -> W-1-j) with probability `prob`.
std::vector<double> horizontal_flip(std::span<const double> image,
                                    const std::optional<ImageShape>& shape, double prob,
                                    RngStream& rng);

/// x + N(0, sigma^2) per coordinate.
std::vector<double> feature_jitter(std::span<const double> x, double sigma, RngStream& rng);

/// Applies the policy's ops in order; op i draws from rng.child(i).
std::vector<double> apply(const AugmentPolicy& policy, std::span<const double> x,
                          const std::optional<ImageShape>& shape, const RngStream& rng);

}  // namespace fedlsr
