// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/model.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "fedlsr/error.hpp"
#include "fedlsr/rng.hpp"

namespace fedlsr {
namespace {

constexpr int kCheckpointVersion = 1;
constexpr const char* kCheckpointFormat = "fedlsr-params";

std::vector<std::size_t> layer_offsets(const std::vector<LayerShape>& layers) {
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& l : layers) {
    offsets.push_back(at);
    at += l.param_count();
  }
  offsets.push_back(at);
  return offsets;
}

void check_chain(const std::vector<LayerShape>& layers) {
  if (layers.empty()) throw InvalidInput("model needs at least one layer");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].in == 0 || layers[l].out == 0) throw InvalidInput("layer with zero width");
    if (l > 0 && layers[l].in != layers[l - 1].out) {
      throw InvalidInput("layer " + std::to_string(l) + " input does not match previous output");
    }
  }
}

void write_u64_le(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64_le(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw FormatError("checkpoint: truncated");
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t{b[i]} << (8 * i);
  return v;
}

}  // namespace

ModelParams::ModelParams(std::vector<LayerShape> layers)
    : layers_(std::move(layers)), offsets_(layer_offsets(layers_)), flat_(offsets_.back(), 0.0) {
  check_chain(layers_);
}

ModelParams::ModelParams(std::vector<LayerShape> layers, std::vector<double> flat)
    : layers_(std::move(layers)), offsets_(layer_offsets(layers_)), flat_(std::move(flat)) {
  check_chain(layers_);
  if (flat_.size() != offsets_.back()) {
    throw InvalidInput("parameter vector length " + std::to_string(flat_.size()) +
                       " does not match layer shapes (" + std::to_string(offsets_.back()) + ")");
  }
}

std::span<double> ModelParams::weights(std::size_t layer) {
  return {flat_.data() + offsets_[layer], layers_[layer].in * layers_[layer].out};
}
std::span<const double> ModelParams::weights(std::size_t layer) const {
  return {flat_.data() + offsets_[layer], layers_[layer].in * layers_[layer].out};
}
std::span<double> ModelParams::biases(std::size_t layer) {
  return {flat_.data() + offsets_[layer] + layers_[layer].in * layers_[layer].out,
          layers_[layer].out};
}
std::span<const double> ModelParams::biases(std::size_t layer) const {
  return {flat_.data() + offsets_[layer] + layers_[layer].in * layers_[layer].out,
          layers_[layer].out};
}

ModelParams init_params(std::span<const std::size_t> layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 3) {
    throw InvalidInput("init_params: need input, at least one hidden layer, and output sizes");
  }
  std::vector<LayerShape> layers;
  for (std::size_t i = 0; i + 1 < layer_sizes.size(); ++i) {
    layers.push_back({layer_sizes[i], layer_sizes[i + 1]});
  }
  ModelParams params(std::move(layers));
  RngStream rng(seed, {static_cast<std::uint64_t>(Purpose::kInit)});
  for (std::size_t l = 0; l < params.layers().size(); ++l) {
    const auto& shape = params.layers()[l];
    const double limit = std::sqrt(6.0 / static_cast<double>(shape.in + shape.out));
    for (double& w : params.weights(l)) w = (2.0 * rng.uniform() - 1.0) * limit;
  }
  return params;
}

Matrix forward(const ModelParams& params, const Matrix& batch, ForwardCache* cache) {
  if (batch.cols() != params.input_dim()) {
    throw InvalidInput("forward: input has " + std::to_string(batch.cols()) +
                       " features, model expects " + std::to_string(params.input_dim()));
  }
  if (cache) cache->inputs.clear();
  Matrix cur = batch;
  const std::size_t n_layers = params.layers().size();
  for (std::size_t l = 0; l < n_layers; ++l) {
    const auto& shape = params.layers()[l];
    const auto w = params.weights(l);
    const auto b = params.biases(l);
    Matrix next(cur.rows(), shape.out);
    for (std::size_t r = 0; r < cur.rows(); ++r) {
      const double* x = cur.row(r).data();
      double* y = next.row(r).data();
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double* wo = w.data() + o * shape.in;
        double acc = 0.0;
        for (std::size_t i = 0; i < shape.in; ++i) acc += wo[i] * x[i];
        acc += b[o];
        y[o] = (l + 1 < n_layers) ? std::max(acc, 0.0) : acc;
      }
    }
    if (cache) cache->inputs.push_back(std::move(cur));
    cur = std::move(next);
  }
  return cur;
}

std::vector<double> forward(const ModelParams& params, std::span<const double> x) {
  Matrix batch(1, x.size());
  std::copy(x.begin(), x.end(), batch.row(0).begin());
  return forward(params, batch).data();
}

void backward(const ModelParams& params, const ForwardCache& cache, const Matrix& logit_adjoint,
              Gradients& grads) {
  const std::size_t n_layers = params.layers().size();
  if (cache.inputs.size() != n_layers) throw InvalidInput("backward: cache from another model");
  const std::size_t batch = cache.inputs.front().rows();
  if (logit_adjoint.rows() != batch || logit_adjoint.cols() != params.output_dim()) {
    throw InvalidInput("backward: adjoint shape does not match logits");
  }
  if (grads.flat.empty()) grads.flat.assign(params.size(), 0.0);
  if (grads.flat.size() != params.size()) throw InvalidInput("backward: gradient size mismatch");

  Matrix delta = logit_adjoint;
  std::size_t offset = params.size();
  for (std::size_t l = n_layers; l-- > 0;) {
    const auto& shape = params.layers()[l];
    offset -= shape.param_count();
    double* gw = grads.flat.data() + offset;
    double* gb = gw + shape.in * shape.out;
    const Matrix& input = cache.inputs[l];
    const auto w = params.weights(l);

    for (std::size_t r = 0; r < batch; ++r) {
      const double* x = input.row(r).data();
      const double* d = delta.row(r).data();
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double g = d[o];
        if (g == 0.0) continue;
        double* gwo = gw + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) gwo[i] += g * x[i];
        gb[o] += g;
      }
    }
    if (l == 0) break;

    Matrix prev(batch, shape.in);
    for (std::size_t r = 0; r < batch; ++r) {
      const double* d = delta.row(r).data();
      double* p = prev.row(r).data();
      for (std::size_t o = 0; o < shape.out; ++o) {
        const double g = d[o];
        if (g == 0.0) continue;
        const double* wo = w.data() + o * shape.in;
        for (std::size_t i = 0; i < shape.in; ++i) p[i] += g * wo[i];
      }
      // ReLU mask: the cached input to layer l is the post-ReLU output of l-1.
      const double* a = input.row(r).data();
      for (std::size_t i = 0; i < shape.in; ++i) {
        if (a[i] <= 0.0) p[i] = 0.0;
      }
    }
    delta = std::move(prev);
  }
}

Gradients backward(const ModelParams& params, const ForwardCache& cache,
                   const Matrix& logit_adjoint) {
  Gradients g;
  g.flat.assign(params.size(), 0.0);
  backward(params, cache, logit_adjoint, g);
  return g;
}

ModelParams sgd_step(const ModelParams& params, const Gradients& grads, double lr) {
  ModelParams out = params;
  sgd_step_inplace(out, grads, lr);
  return out;
}

void sgd_step_inplace(ModelParams& params, const Gradients& grads, double lr) {
  if (grads.flat.size() != params.size()) throw InvalidInput("sgd_step: gradient size mismatch");
  auto& w = params.flat();
  for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr * grads.flat[i];
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  nlohmann::json header;
  header["format"] = kCheckpointFormat;
  header["version"] = kCheckpointVersion;
  header["layers"] = nlohmann::json::array();
  for (const auto& l : params.layers()) header["layers"].push_back({l.in, l.out});
  header["count"] = params.size();
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  write_u64_le(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (double v : params.flat()) write_u64_le(out, std::bit_cast<std::uint64_t>(v));
  if (!out) throw FormatError("write failed for " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  const std::uint64_t header_len = read_u64_le(in);
  if (header_len > (1u << 20)) throw FormatError("checkpoint: implausible header length");
  std::string text(header_len, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(header_len))) {
    throw FormatError("checkpoint: truncated header");
  }
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint: bad header JSON: ") + e.what());
  }
  if (header.value("format", "") != kCheckpointFormat) throw FormatError("checkpoint: wrong format tag");
  if (header.value("version", 0) != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version");
  }
  std::vector<LayerShape> layers;
  for (const auto& l : header.at("layers")) {
    layers.push_back({l.at(0).get<std::size_t>(), l.at(1).get<std::size_t>()});
  }
  const auto count = header.at("count").get<std::size_t>();
  std::vector<double> flat(count);
  for (double& v : flat) v = std::bit_cast<double>(read_u64_le(in));
  return ModelParams(std::move(layers), std::move(flat));
}

}  // namespace fedlsr
