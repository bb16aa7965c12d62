// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fedlsr/error.hpp"

namespace fedlsr {
namespace {

void check_batch(const Matrix& logits, std::span<const int> labels) {
  if (logits.rows() != labels.size()) throw InvalidInput("loss: logits and labels disagree on batch size");
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols()) {
      throw InvalidInput("loss: label out of range");
    }
  }
}

void check_pair(const Matrix& o1, const Matrix& o2) {
  if (o1.rows() != o2.rows() || o1.cols() != o2.cols()) {
    throw InvalidInput("loss: logit heads have different shapes");
  }
}

// adj_j = p_j (g_j - sum_k p_k g_k): vector-Jacobian product of softmax.
// `scale` multiplies the result (e.g. 1/T_d for tempered softmax).
void softmax_vjp(std::span<const double> p, std::span<const double> g, double scale,
                 std::span<double> out) {
  double dot = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) dot += p[j] * g[j];
  for (std::size_t j = 0; j < p.size(); ++j) out[j] += scale * p[j] * (g[j] - dot);
}

}  // namespace

std::string to_string(DistillKind kind) {
  switch (kind) {
    case DistillKind::kJs: return "js";
    case DistillKind::kL1: return "l1";
    case DistillKind::kL2: return "l2";
    case DistillKind::kCosine: return "cosine";
    case DistillKind::kNone: return "none";
  }
  return "none";
}

DistillKind parse_distill_kind(const std::string& name) {
  if (name == "js") return DistillKind::kJs;
  if (name == "l1") return DistillKind::kL1;
  if (name == "l2") return DistillKind::kL2;
  if (name == "cosine") return DistillKind::kCosine;
  if (name == "none") return DistillKind::kNone;
  throw InvalidParameter("unknown distillation kind '" + name + "'");
}

void LsrHyperParams::validate() const {
  if (!(sharpen_temperature > 0.0)) throw InvalidParameter("sharpen temperature T must be > 0");
  if (!(distill_temperature > 0.0)) throw InvalidParameter("distillation temperature T_d must be > 0");
  if (!(gamma >= 0.0)) throw InvalidParameter("gamma must be >= 0");
  if (!(entropy_weight >= 0.0)) throw InvalidParameter("entropy weight must be >= 0");
  if (!(clamp_lo > 0.0 && clamp_lo < 1.0)) throw InvalidParameter("clamp floor must lie in (0, 1)");
  if (fixed_mix_weight && !(*fixed_mix_weight >= 0.0 && *fixed_mix_weight <= 1.0)) {
    throw InvalidParameter("fixed MixUp weight must lie in [0, 1]");
  }
}

void SymCeParams::validate() const {
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw InvalidParameter("Symmetric CE weights must be >= 0");
  if (!(log_zero < 0.0)) throw InvalidParameter("Symmetric CE log-zero substitute must be < 0");
}

bool LossOutput::uses_second_head() const {
  return std::any_of(adjoint_o2.data().begin(), adjoint_o2.data().end(),
                     [](double v) { return v != 0.0; });
}

LossOutput ce_loss(const Matrix& logits, std::span<const int> labels) {
  check_batch(logits, labels);
  const std::size_t b = logits.rows();
  LossOutput out{0.0, Matrix(b, logits.cols()), Matrix(b, logits.cols())};
  if (b == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto o = logits.row(r);
    const auto y = static_cast<std::size_t>(labels[r]);
    const ProbVec p = softmax(o);
    out.value += log_sum_exp(o) - o[y];
    auto adj = out.adjoint_o1.row(r);
    for (std::size_t j = 0; j < p.size(); ++j) adj[j] = (p[j] - (j == y ? 1.0 : 0.0)) * inv_b;
  }
  out.value *= inv_b;
  return out;
}

std::vector<double> per_sample_ce(const Matrix& logits, std::span<const int> labels) {
  check_batch(logits, labels);
  std::vector<double> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto o = logits.row(r);
    out[r] = log_sum_exp(o) - o[static_cast<std::size_t>(labels[r])];
  }
  return out;
}

std::vector<double> per_sample_sharpened_ce(const Matrix& logits, std::span<const int> labels,
                                            double sharpen_temperature, double clamp_lo) {
  check_batch(logits, labels);
  std::vector<double> out(logits.rows());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const ProbVec ps = sharpen(softmax(logits.row(r)), sharpen_temperature);
    out[r] = -std::log(std::max(ps[static_cast<std::size_t>(labels[r])], clamp_lo));
  }
  return out;
}

ProbVec mixup_prediction(std::span<const double> p1, std::span<const double> p2, double lambda) {
  if (p1.size() != p2.size()) throw InvalidInput("mixup_prediction: size mismatch");
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("mixup_prediction: lambda outside [0, 1]");
  ProbVec p(p1.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = lambda * p1[i] + (1.0 - lambda) * p2[i];
  return p;
}

LossOutput lsr_cls_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                        double lambda, const LsrHyperParams& hp) {
  check_pair(o1, o2);
  check_batch(o1, labels);
  hp.validate();
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("lsr_cls_loss: lambda outside [0, 1]");

  // Sharpening and mixing both collapse: the loss is plain CE on head 1.
  if (hp.sharpen_temperature == 1.0 && lambda == 1.0) return ce_loss(o1, labels);

  const std::size_t b = o1.rows();
  const std::size_t m = o1.cols();
  LossOutput out{0.0, Matrix(b, m), Matrix(b, m)};
  if (b == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(b);
  const double power = 1.0 / hp.sharpen_temperature;

  std::vector<double> dp(m);
  std::vector<double> g(m);
  for (std::size_t r = 0; r < b; ++r) {
    const auto y = static_cast<std::size_t>(labels[r]);
    const ProbVec p1 = softmax(o1.row(r));
    const ProbVec p2 = softmax(o2.row(r));
    const ProbVec p = mixup_prediction(p1, p2, lambda);
    const ProbVec ps = sharpen(p, hp.sharpen_temperature);
    if (ps[y] <= hp.clamp_lo) {
      out.value -= std::log(hp.clamp_lo);  // floored: no gradient
      continue;
    }
    out.value -= std::log(ps[y]);

    // -log ps_y = -a log p_y + log sum_j p_j^a  =>  dL/dp_j = a (ps_j - [j==y]) / p_j.
    for (std::size_t j = 0; j < m; ++j) {
      const double num = ps[j] - (j == y ? 1.0 : 0.0);
      dp[j] = (p[j] > 0.0) ? power * num / p[j] : 0.0;
    }
    for (std::size_t j = 0; j < m; ++j) g[j] = lambda * dp[j];
    softmax_vjp(p1, g, inv_b, out.adjoint_o1.row(r));
    if (lambda < 1.0) {
      for (std::size_t j = 0; j < m; ++j) g[j] = (1.0 - lambda) * dp[j];
      softmax_vjp(p2, g, inv_b, out.adjoint_o2.row(r));
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput self_distill_loss(const Matrix& o1, const Matrix& o2, const LsrHyperParams& hp) {
  check_pair(o1, o2);
  hp.validate();
  if (hp.distill == DistillKind::kNone) throw InvalidParameter("self_distill_loss: distillation kind is none");

  const std::size_t b = o1.rows();
  const std::size_t m = o1.cols();
  LossOutput out{0.0, Matrix(b, m), Matrix(b, m)};
  if (b == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(b);
  const double td = hp.distill_temperature;

  std::vector<double> g1(m);
  std::vector<double> g2(m);
  for (std::size_t r = 0; r < b; ++r) {
    const ProbVec q1 = tempered_softmax(o1.row(r), td);
    const ProbVec q2 = tempered_softmax(o2.row(r), td);
    const ProbVec c1 = clamp_probs(q1, hp.clamp_lo);
    const ProbVec c2 = clamp_probs(q2, hp.clamp_lo);

    double value = 0.0;
    switch (hp.distill) {
      case DistillKind::kJs: {
        for (std::size_t j = 0; j < m; ++j) {
          const double u = 0.5 * (c1[j] + c2[j]);
          const double l1 = std::log(c1[j] / u);
          const double l2 = std::log(c2[j] / u);
          value += 0.5 * (c1[j] * l1 + c2[j] * l2);
          g1[j] = 0.5 * l1;
          g2[j] = 0.5 * l2;
        }
        break;
      }
      case DistillKind::kL1: {
        for (std::size_t j = 0; j < m; ++j) {
          const double d = c1[j] - c2[j];
          value += std::abs(d);
          const double s = (d > 0.0) ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
          g1[j] = s;
          g2[j] = -s;
        }
        break;
      }
      case DistillKind::kL2: {
        for (std::size_t j = 0; j < m; ++j) {
          const double d = c1[j] - c2[j];
          value += d * d;
          g1[j] = 2.0 * d;
          g2[j] = -2.0 * d;
        }
        break;
      }
      case DistillKind::kCosine: {
        // 0.5 [(1 - cos(c1, stop c2)) + (1 - cos(stop c1, c2))]: each head
        // only receives gradient through its own, unstopped, branch.
        double dot = 0.0;
        double n1 = 0.0;
        double n2 = 0.0;
        for (std::size_t j = 0; j < m; ++j) {
          dot += c1[j] * c2[j];
          n1 += c1[j] * c1[j];
          n2 += c2[j] * c2[j];
        }
        const double norm1 = std::sqrt(n1);
        const double norm2 = std::sqrt(n2);
        const double cosine = dot / (norm1 * norm2);
        value = 1.0 - cosine;
        for (std::size_t j = 0; j < m; ++j) {
          g1[j] = -0.5 * (c2[j] / (norm1 * norm2) - cosine * c1[j] / n1);
          g2[j] = -0.5 * (c1[j] / (norm1 * norm2) - cosine * c2[j] / n2);
        }
        break;
      }
      case DistillKind::kNone: break;
    }
    out.value += value;

    // The floor blocks gradient where it is active.
    for (std::size_t j = 0; j < m; ++j) {
      if (q1[j] < hp.clamp_lo) g1[j] = 0.0;
      if (q2[j] < hp.clamp_lo) g2[j] = 0.0;
    }
    softmax_vjp(q1, g1, inv_b / td, out.adjoint_o1.row(r));
    softmax_vjp(q2, g2, inv_b / td, out.adjoint_o2.row(r));
  }
  out.value *= inv_b;
  return out;
}

LossOutput add_scaled(LossOutput base, const LossOutput& extra, double weight) {
  base.value += weight * extra.value;
  auto& a1 = base.adjoint_o1.data();
  auto& a2 = base.adjoint_o2.data();
  for (std::size_t i = 0; i < a1.size(); ++i) a1[i] += weight * extra.adjoint_o1.data()[i];
  for (std::size_t i = 0; i < a2.size(); ++i) a2[i] += weight * extra.adjoint_o2.data()[i];
  return base;
}

LossOutput lsr_total_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                          double lambda, double gamma_t, const LsrHyperParams& hp) {
  if (!(gamma_t >= 0.0)) throw InvalidParameter("lsr_total_loss: gamma_t must be >= 0");
  LossOutput cls = lsr_cls_loss(o1, o2, labels, lambda, hp);
  if (gamma_t == 0.0 || hp.distill == DistillKind::kNone) return cls;
  return add_scaled(std::move(cls), self_distill_loss(o1, o2, hp), gamma_t);
}

LossOutput lsr_plus_loss(const Matrix& o1, const Matrix& o2, std::span<const int> labels,
                         double lambda, double gamma_t, const LsrHyperParams& hp) {
  LossOutput total = lsr_total_loss(o1, o2, labels, lambda, gamma_t, hp);
  if (hp.entropy_weight == 0.0) return total;

  const std::size_t b = o1.rows();
  if (b == 0) return total;
  const double scale = hp.entropy_weight * 0.5 / static_cast<double>(b);
  double value = 0.0;
  std::vector<double> logp(o1.cols());
  auto add_head = [&](std::span<const double> o, std::span<double> adj) {
    const double lse = log_sum_exp(o);
    double h = 0.0;
    for (std::size_t j = 0; j < o.size(); ++j) {
      logp[j] = o[j] - lse;
      h -= std::exp(logp[j]) * logp[j];
    }
    // dH/do_j = -p_j (log p_j + H)
    for (std::size_t j = 0; j < o.size(); ++j) {
      adj[j] -= scale * std::exp(logp[j]) * (logp[j] + h);
    }
    value += h;
  };
  for (std::size_t r = 0; r < b; ++r) {
    add_head(o1.row(r), total.adjoint_o1.row(r));
    add_head(o2.row(r), total.adjoint_o2.row(r));
  }
  total.value += scale * value;
  return total;
}

LossOutput symmetric_ce_loss(const Matrix& logits, std::span<const int> labels,
                             const SymCeParams& sp) {
  check_batch(logits, labels);
  sp.validate();
  const std::size_t b = logits.rows();
  LossOutput out{0.0, Matrix(b, logits.cols()), Matrix(b, logits.cols())};
  if (b == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(b);
  for (std::size_t r = 0; r < b; ++r) {
    const auto o = logits.row(r);
    const auto y = static_cast<std::size_t>(labels[r]);
    const ProbVec p = softmax(o);
    const double ce = log_sum_exp(o) - o[y];
    const double rce = -sp.log_zero * (1.0 - p[y]);
    out.value += sp.alpha * ce + sp.beta * rce;
    auto adj = out.adjoint_o1.row(r);
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double onehot = (j == y) ? 1.0 : 0.0;
      adj[j] = (sp.alpha * (p[j] - onehot) + sp.beta * sp.log_zero * p[y] * (onehot - p[j])) * inv_b;
    }
  }
  out.value *= inv_b;
  return out;
}

LossOutput mixed_symmetric_ce_loss(const Matrix& o1, const Matrix& o2,
                                   std::span<const int> labels, double lambda,
                                   const SymCeParams& sp) {
  check_pair(o1, o2);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw InvalidParameter("mixed_symmetric_ce_loss: lambda outside [0, 1]");
  Matrix mixed(o1.rows(), o1.cols());
  for (std::size_t i = 0; i < mixed.data().size(); ++i) {
    mixed.data()[i] = lambda * o1.data()[i] + (1.0 - lambda) * o2.data()[i];
  }
  LossOutput inner = symmetric_ce_loss(mixed, labels, sp);
  LossOutput out{inner.value, Matrix(o1.rows(), o1.cols()), Matrix(o1.rows(), o1.cols())};
  for (std::size_t i = 0; i < mixed.data().size(); ++i) {
    out.adjoint_o1.data()[i] = lambda * inner.adjoint_o1.data()[i];
    out.adjoint_o2.data()[i] = (1.0 - lambda) * inner.adjoint_o1.data()[i];
  }
  return out;
}

std::vector<std::size_t> small_loss_select(std::span<const double> losses, double keep_ratio) {
  if (!(keep_ratio > 0.0 && keep_ratio <= 1.0)) {
    throw InvalidParameter("small_loss_select: keep ratio must lie in (0, 1]");
  }
  std::vector<std::size_t> order(losses.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (losses.empty()) return order;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return losses[a] < losses[b]; });
  // Guard against ratio * n landing a hair above an integer.
  const double want = keep_ratio * static_cast<double>(losses.size());
  auto keep = static_cast<std::size_t>(std::ceil(want - 1e-9));
  keep = std::clamp<std::size_t>(keep, 1, losses.size());
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace fedlsr
