// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/augment.hpp"

#include <cmath>
#include <numbers>

#include "fedlsr/error.hpp"
#include "fedlsr/numerics.hpp"

namespace fedlsr {
namespace {

const ImageShape& require_image(const std::optional<ImageShape>& shape, std::size_t size,
                                const char* op) {
  if (!shape) {
    throw UnsupportedAugmentation(std::string(op) + " needs image features (no H, W metadata)");
  }
  if (shape->size() != size) throw InvalidInput(std::string(op) + ": image size mismatch");
  return *shape;
}

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

}  // namespace

void AugmentPolicy::validate() const {
  for (const auto& op : ops) {
    std::visit(Overloaded{
                   [](const HorizontalFlip& f) {
                     if (!(f.prob >= 0.0 && f.prob <= 1.0)) {
                       throw InvalidParameter("flip probability must lie in [0, 1]");
                     }
                   },
                   [](const Rotation& r) {
                     if (!(r.max_degrees >= 0.0 && r.max_degrees <= 180.0)) {
                       throw InvalidParameter("rotation max_degrees must lie in [0, 180]");
                     }
                   },
                   [](const FeatureJitter& j) {
                     if (!(j.sigma >= 0.0)) throw InvalidParameter("jitter sigma must be >= 0");
                   },
               },
               op);
  }
}

std::vector<double> rotate_image(std::span<const double> image, const ImageShape& shape,
                                 double degrees) {
  if (shape.size() != image.size()) throw InvalidInput("rotate_image: image size mismatch");
  const std::size_t h = shape.height;
  const std::size_t w = shape.width;
  const std::size_t ch = shape.channels;
  if (degrees == 0.0) return {image.begin(), image.end()};

  const double theta = degrees * std::numbers::pi / 180.0;
  const double cs = std::cos(theta);
  const double sn = std::sin(theta);
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  const double cx = (static_cast<double>(w) - 1.0) / 2.0;

  auto at = [&](std::ptrdiff_t r, std::ptrdiff_t c, std::size_t k) -> double {
    if (r < 0 || c < 0 || r >= static_cast<std::ptrdiff_t>(h) ||
        c >= static_cast<std::ptrdiff_t>(w)) {
      return 0.0;
    }
    return image[(static_cast<std::size_t>(r) * w + static_cast<std::size_t>(c)) * ch + k];
  };

  std::vector<double> out(image.size(), 0.0);
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t c = 0; c < w; ++c) {
      // Inverse map: output pixel -> source location (rows grow downward).
      const double dy = static_cast<double>(r) - cy;
      const double dx = static_cast<double>(c) - cx;
      const double sx = cs * dx - sn * dy + cx;
      const double sy = sn * dx + cs * dy + cy;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double ax = sx - fx;
      const double ay = sy - fy;
      const auto x0 = static_cast<std::ptrdiff_t>(fx);
      const auto y0 = static_cast<std::ptrdiff_t>(fy);
      for (std::size_t k = 0; k < ch; ++k) {
        const double top = (1.0 - ax) * at(y0, x0, k) + ax * at(y0, x0 + 1, k);
        const double bottom = (1.0 - ax) * at(y0 + 1, x0, k) + ax * at(y0 + 1, x0 + 1, k);
        out[(r * w + c) * ch + k] = (1.0 - ay) * top + ay * bottom;
      }
    }
  }
  return out;
}

std::vector<double> random_rotation(std::span<const double> image,
                                    const std::optional<ImageShape>& shape, double max_degrees,
                                    RngStream& rng) {
  const ImageShape& s = require_image(shape, image.size(), "rotation");
  if (max_degrees == 0.0) return {image.begin(), image.end()};
  const double angle = (2.0 * rng.uniform() - 1.0) * max_degrees;
  return rotate_image(image, s, angle);
}

std::vector<double> horizontal_flip(std::span<const double> image,
                                    const std::optional<ImageShape>& shape, double prob,
                                    RngStream& rng) {
  const ImageShape& s = require_image(shape, image.size(), "horizontal_flip");
  std::vector<double> out(image.begin(), image.end());
  if (!(rng.uniform() < prob)) return out;
  for (std::size_t r = 0; r < s.height; ++r) {
    for (std::size_t c = 0; c < s.width; ++c) {
      for (std::size_t k = 0; k < s.channels; ++k) {
        out[(r * s.width + c) * s.channels + k] =
            image[(r * s.width + (s.width - 1 - c)) * s.channels + k];
      }
    }
  }
  return out;
}

std::vector<double> feature_jitter(std::span<const double> x, double sigma, RngStream& rng) {
  if (!(sigma >= 0.0)) throw InvalidParameter("feature_jitter: sigma must be >= 0");
  std::vector<double> out(x.begin(), x.end());
  if (sigma == 0.0) return out;
  for (double& v : out) v += sample_normal(rng, 0.0, sigma);
  return out;
}

std::vector<double> apply(const AugmentPolicy& policy, std::span<const double> x,
                          const std::optional<ImageShape>& shape, const RngStream& rng) {
  std::vector<double> cur(x.begin(), x.end());
  for (std::size_t i = 0; i < policy.ops.size(); ++i) {
    RngStream sub = rng.child(i);
    cur = std::visit(
        Overloaded{
            [&](const HorizontalFlip& f) { return horizontal_flip(cur, shape, f.prob, sub); },
            [&](const Rotation& r) { return random_rotation(cur, shape, r.max_degrees, sub); },
            [&](const FeatureJitter& j) { return feature_jitter(cur, j.sigma, sub); },
        },
        policy.ops[i]);
  }
  return cur;
}

}  // namespace fedlsr
