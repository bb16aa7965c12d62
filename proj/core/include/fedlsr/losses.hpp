// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedlsr/matrix.hpp"
#include "fedlsr/numerics.hpp"

namespace fedlsr {

/// Discrepancy measure between the tempered predictions of the two views.
enum class DistillKind { kJs, kL1, kL2, kCosine, kNone };

std::string to_string(DistillKind kind);
DistillKind parse_distill_kind(const std::string& name);

/// Hyperparameters of local self-regularization.
struct LsrHyperParams {
  double sharpen_temperature = 0.5;         ///< T
  double distill_temperature = 1.0 / 3.0;   ///< T_d
  double gamma = 0.2;                       ///< distillation weight after warm-up
  double entropy_weight = 0.0;              ///< lambda_e, LSR+ only
  DistillKind distill = DistillKind::kJs;
  double clamp_lo = 1e-6;
  /// When set, the MixUp weight is this constant instead of a Beta(1,1) draw.
  std::optional<double> fixed_mix_weight;

  /// Throws InvalidParameter on out-of-range values.
  void validate() const;
};

/// Weights of the Symmetric CE loss. `log_zero` stands in for log(0) in the
/// reverse term.
struct SymCeParams {
  double alpha = 0.1;
  double beta = 1.0;
  double log_zero = -4.0;

  void validate() const;
};

/// Batch-mean loss with its adjoints at both logit heads (batch x M each).
/// `adjoint_o2` is all-zero for single-head losses.
struct LossOutput {
  double value = 0.0;
  Matrix adjoint_o1;
  Matrix adjoint_o2;

  bool uses_second_head() const;
};

/// Mean of -log softmax(o)[y].
LossOutput ce_loss(const Matrix& logits, std::span<const int> labels);

/// Per-sample -log softmax(o)[y].
std::vector<double> per_sample_ce(const Matrix& logits, std::span<const int> labels);

/// Per-sample -log max(sharpen(softmax(o), T)[y], clamp_lo).
std::vector<double> per_sample_sharpened_ce(const Matrix& logits, std::span<const int> labels,
                                            double sharpen_temperature, double clamp_lo);

/// lambda * p1 + (1 - lambda) * p2.
ProbVec mixup_prediction(std::span<const double> p1, std::span<const double> p2, double lambda);

/// CE of the sharpened MixUp prediction, differentiated through sharpening,
/// mixing and both softmaxes.
LossOutput lsr_cls_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                        double lambda, const LsrHyperParams& hp);

/// Discrepancy between tempered, clamped predictions of the two heads.
LossOutput self_distill_loss(const Matrix& o1, const Matrix& o2, const LsrHyperParams& hp);

/// lsr_cls_loss + gamma_t * self_distill_loss.
LossOutput lsr_total_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                          double lambda, double gamma_t, const LsrHyperParams& hp);

/// lsr_total_loss + lambda_e * mean entropy of softmax(o1) and softmax(o2).
LossOutput lsr_plus_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                         double lambda, double gamma_t, const LsrHyperParams& hp);

/// alpha * CE + beta * RCE with RCE = -log_zero * (1 - p[y]).
LossOutput symmetric_ce_loss(const Matrix& logits, std::span<const int> labels,
                             const SymCeParams& sp);

/// Symmetric CE on the mixed logits lambda * o1 + (1 - lambda) * o2.
LossOutput mixed_symmetric_ce_loss(const Matrix& o1, const Matrix& o2,
                                   std::span<const int> labels, double lambda,
                                   const SymCeParams& sp);

/// Indices of the ceil(keep_ratio * n) smallest losses, ascending index
/// order; ties broken by lower index.
std::vector<std::size_t> small_loss_select(std::span<const double> losses, double keep_ratio);

/// Sum of two loss outputs, second scaled by `weight`.
LossOutput add_scaled(LossOutput base, const LossOutput& extra, double weight);

}  // namespace fedlsr
