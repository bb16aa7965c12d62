// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fedlsr/matrix.hpp"

namespace fedlsr {

/// One affine layer, y = W x + b with W of shape (out, in).
struct LayerShape {
  std::size_t in = 0;
  std::size_t out = 0;

  std::size_t param_count() const { return (in + 1) * out; }
  bool operator==(const LayerShape&) const = default;
};

/// MLP parameters as one flat vector. Layer l occupies W (out x in,
/// row-major) followed by b (out). Hidden layers use ReLU; the last layer
/// emits raw logits.
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-initialised parameters for the given layer chain.
  explicit ModelParams(std::vector<LayerShape> layers);
  ModelParams(std::vector<LayerShape> layers, std::vector<double> flat);

  const std::vector<LayerShape>& layers() const { return layers_; }
  std::vector<double>& flat() { return flat_; }
  const std::vector<double>& flat() const { return flat_; }
  std::size_t size() const { return flat_.size(); }
  std::size_t input_dim() const { return layers_.front().in; }
  std::size_t output_dim() const { return layers_.back().out; }

  std::span<double> weights(std::size_t layer);
  std::span<const double> weights(std::size_t layer) const;
  std::span<double> biases(std::size_t layer);
  std::span<const double> biases(std::size_t layer) const;

  bool same_shape(const ModelParams& other) const { return layers_ == other.layers_; }
  bool operator==(const ModelParams&) const = default;

 private:
  std::vector<LayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> flat_;
};

/// Gradient of a scalar loss, aligned with ModelParams::flat().
struct Gradients {
  std::vector<double> flat;
};

/// Glorot-uniform weights, zero biases. `layer_sizes` = {d, hidden..., M};
/// at least one hidden layer is required.
ModelParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed);

/// Pre-activation and post-activation values saved for backward().
struct ForwardCache {
  std::vector<Matrix> inputs;  ///< input to each layer (post-ReLU of the previous)
};

/// Logits for a batch (rows = samples). Fills `cache` when non-null.
Matrix forward(const ModelParams& params, const Matrix& batch, ForwardCache* cache = nullptr);

/// Logits for a single sample.
std::vector<double> forward(const ModelParams& params, std::span<const double> x);

/// Reverse-mode pass: adds d(loss)/d(params) to `grads` given the loss
/// adjoint at the logits (batch x M) of a forward pass that produced `cache`.
void backward(const ModelParams& params, const ForwardCache& cache, const Matrix& logit_adjoint,
              Gradients& grads);

/// Convenience: fresh Gradients from one head.
Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const Matrix& logit_adjoint);

/// flat <- flat - lr * grads.
ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr);

/// In-place variant of sgd_step.
void sgd_step_inplace(ModelParams& params, const Gradients& grads, double lr);

/// Checkpoint: 8-byte little-endian header length L, L bytes of JSON
/// {"format":"fedlsr-params","version":1,"layers":[[in,out],...],"count":P},
/// then P little-endian IEEE-754 doubles.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace fedlsr
