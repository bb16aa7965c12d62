// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fedlsr/error.hpp"

namespace fedlsr {

double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("log_sum_exp: empty input");
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double v : logits) sum += std::exp(v - hi);
  return hi + std::log(sum);
}

ProbVec softmax(std::span<const double> logits) {
  if (logits.empty()) throw InvalidInput("softmax: empty input");
  for (double v : logits) {
    if (!std::isfinite(v)) throw InvalidInput("softmax: non-finite logit");
  }
  const double hi = *std::max_element(logits.begin(), logits.end());
  ProbVec out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - hi);
    sum += out[i];
  }
  for (double& v : out) v /= sum;
  return out;
}

ProbVec tempered_softmax(std::span<const double> logits, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameter("tempered_softmax: temperature must be > 0");
  std::vector<double> scaled(logits.begin(), logits.end());
  for (double& v : scaled) v /= temperature;
  return softmax(scaled);
}

ProbVec sharpen(std::span<const double> p, double temperature) {
  if (!(temperature > 0.0)) throw InvalidParameter("sharpen: temperature must be > 0");
  const double power = 1.0 / temperature;
  ProbVec out(p.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = std::pow(p[i], power);
    sum += out[i];
  }
  if (!(sum > 0.0)) throw InvalidInput("sharpen: all entries vanish");
  for (double& v : out) v /= sum;
  return out;
}

ProbVec clamp_probs(std::span<const double> p, double lo) {
  ProbVec out(p.size());
  std::transform(p.begin(), p.end(), out.begin(),
                 [lo](double v) { return std::min(std::max(v, lo), 1.0); });
  return out;
}

double entropy(std::span<const double> p) {
  double h = 0.0;
  for (double v : p) {
    if (v > 0.0) h -= v * std::log(v);
  }
  return h;
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInput("kl_divergence: size mismatch");
  double d = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) d += p[i] * std::log(p[i] / q[i]);
  }
  return d;
}

double js_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw InvalidInput("js_divergence: size mismatch");
  std::vector<double> mid(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * (kl_divergence(p, mid) + kl_divergence(q, mid));
}

double sample_beta(RngStream& rng, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidParameter("sample_beta: shape parameters must be > 0");
  std::gamma_distribution<double> ga(a, 1.0);
  std::gamma_distribution<double> gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

double sample_mix_weight(RngStream& rng) { return sample_beta(rng, 1.0, 1.0); }

double sample_normal(RngStream& rng, double mean, double sigma) {
  if (sigma == 0.0) return mean;
  std::normal_distribution<double> dist(mean, sigma);
  return dist(rng);
}

std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace fedlsr
