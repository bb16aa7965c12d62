// Copyright 2026 The fedlsr Authors
// SPDX-License-Identifier: Apache-2.0

#include "fedlsr/losses.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "fedlsr/error.hpp"
#include "support/gradcheck.hpp"

namespace fedlsr {
namespace {

Matrix row_matrix(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) {
    std::size_t c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

Matrix random_logits(std::mt19937_64& gen, std::size_t b, std::size_t m, double scale = 2.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix out(b, m);
  for (double& v : out.data()) v = n(gen);
  return out;
}

std::vector<int> random_labels(std::mt19937_64& gen, std::size_t b, std::size_t m) {
  std::uniform_int_distribution<int> d(0, static_cast<int>(m) - 1);
  std::vector<int> y(b);
  for (int& v : y) v = d(gen);
  return y;
}

// ---------------------------------------------------------------- analytic

TEST(CeLoss, UniformLogitsGiveLogM) {
  for (std::size_t m : {2u, 10u, 37u}) {
    const Matrix o(3, m, 0.25);
    EXPECT_NEAR(ce_loss(o, std::vector<int>{0, 1, 1}).value, std::log(static_cast<double>(m)), 1e-9);
  }
}

TEST(CeLoss, PeakedLogitsApproachZero) {
  const Matrix o = row_matrix({{60.0, 0.0, 0.0}});
  EXPECT_LT(ce_loss(o, std::vector<int>{0}).value, 1e-20);
}

TEST(CeLoss, AdjointIsSoftmaxMinusOneHotOverBatch) {
  const Matrix o = row_matrix({{0.0, 0.0}, {0.0, 0.0}});
  const LossOutput out = ce_loss(o, std::vector<int>{1, 0});
  EXPECT_DOUBLE_EQ(out.adjoint_o1(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(out.adjoint_o1(0, 1), -0.25);
  EXPECT_FALSE(out.uses_second_head());
}

TEST(CeLoss, RejectsBadLabels) {
  const Matrix o(2, 3);
  EXPECT_THROW(ce_loss(o, std::vector<int>{0, 3}), InvalidInput);
  EXPECT_THROW(ce_loss(o, std::vector<int>{0}), InvalidInput);
}

TEST(MixupPrediction, Endpoints) {
  const std::vector<double> p1{0.2, 0.8};
  const std::vector<double> p2{0.6, 0.4};
  EXPECT_EQ(mixup_prediction(p1, p2, 1.0), p1);
  EXPECT_EQ(mixup_prediction(p1, p2, 0.0), p2);
  const auto mid = mixup_prediction(std::vector<double>{1, 0}, std::vector<double>{0, 1}, 0.5);
  EXPECT_DOUBLE_EQ(mid[0], 0.5);
  EXPECT_DOUBLE_EQ(mid[1], 0.5);
  EXPECT_THROW(mixup_prediction(p1, p2, 1.5), InvalidParameter);
}

TEST(LsrClsLoss, ConfidentWrongExample) {
  // softmax(o) = [0.9, 0.1], noisy label 1, T = 0.5.
  const Matrix o = row_matrix({{std::log(0.9), std::log(0.1)}});
  const LossOutput out = lsr_cls_loss(o, o, std::vector<int>{1}, 0.37, LsrHyperParams{});
  EXPECT_NEAR(out.value, -std::log(0.01 / 0.82), 1e-9);
  EXPECT_NEAR(out.value, 4.407, 1e-3);
  EXPECT_GT(out.value, -std::log(0.1));
}

TEST(LsrClsLoss, CollapsesToCeAtUnitTemperatureAndLambda) {
  std::mt19937_64 gen(7);
  const Matrix o1 = random_logits(gen, 5, 4);
  const Matrix o2 = random_logits(gen, 5, 4);
  const auto y = random_labels(gen, 5, 4);
  LsrHyperParams hp;
  hp.sharpen_temperature = 1.0;
  const LossOutput lsr = lsr_cls_loss(o1, o2, y, 1.0, hp);
  const LossOutput ce = ce_loss(o1, y);
  EXPECT_EQ(lsr.value, ce.value);
  EXPECT_EQ(lsr.adjoint_o1, ce.adjoint_o1);
  EXPECT_FALSE(lsr.uses_second_head());
}

TEST(LsrClsLoss, RejectsLambdaOutsideUnitInterval) {
  const Matrix o(1, 3);
  EXPECT_THROW(lsr_cls_loss(o, o, std::vector<int>{0}, -0.1, LsrHyperParams{}), InvalidParameter);
  EXPECT_THROW(lsr_cls_loss(o, Matrix(2, 3), std::vector<int>{0}, 0.5, LsrHyperParams{}), InvalidInput);
}

TEST(SelfDistill, IdenticalHeadsGiveZero) {
  std::mt19937_64 gen(3);
  const Matrix o = random_logits(gen, 4, 6);
  for (DistillKind kind : {DistillKind::kJs, DistillKind::kL1, DistillKind::kL2, DistillKind::kCosine}) {
    LsrHyperParams hp;
    hp.distill = kind;
    EXPECT_NEAR(self_distill_loss(o, o, hp).value, 0.0, 1e-12) << to_string(kind);
  }
}

TEST(SelfDistill, DisjointSupportsGiveLn2) {
  const Matrix o1 = row_matrix({{200.0, 0.0}});
  const Matrix o2 = row_matrix({{0.0, 200.0}});
  LsrHyperParams hp;
  hp.distill = DistillKind::kJs;
  EXPECT_NEAR(self_distill_loss(o1, o2, hp).value, std::log(2.0), 1e-3);
}

TEST(SelfDistill, NoneKindIsRejected) {
  LsrHyperParams hp;
  hp.distill = DistillKind::kNone;
  EXPECT_THROW(self_distill_loss(Matrix(1, 2), Matrix(1, 2), hp), InvalidParameter);
  EXPECT_THROW(parse_distill_kind("kl"), InvalidParameter);
  EXPECT_EQ(parse_distill_kind("cosine"), DistillKind::kCosine);
}

TEST(LsrTotal, ZeroGammaEqualsClassification) {
  std::mt19937_64 gen(11);
  const Matrix o1 = random_logits(gen, 3, 5);
  const Matrix o2 = random_logits(gen, 3, 5);
  const auto y = random_labels(gen, 3, 5);
  const LsrHyperParams hp;
  const LossOutput total = lsr_total_loss(o1, o2, y, 0.6, 0.0, hp);
  const LossOutput cls = lsr_cls_loss(o1, o2, y, 0.6, hp);
  EXPECT_EQ(total.value, cls.value);
  EXPECT_EQ(total.adjoint_o1, cls.adjoint_o1);
  EXPECT_EQ(total.adjoint_o2, cls.adjoint_o2);
}

TEST(LsrTotal, IdenticalHeadsIgnoreGamma) {
  std::mt19937_64 gen(12);
  const Matrix o = random_logits(gen, 3, 5);
  const auto y = random_labels(gen, 3, 5);
  const LsrHyperParams hp;
  EXPECT_NEAR(lsr_total_loss(o, o, y, 0.3, 5.0, hp).value, lsr_cls_loss(o, o, y, 0.3, hp).value, 1e-12);
}

TEST(LsrTotal, AffineInGamma) {
  std::mt19937_64 gen(13);
  const Matrix o1 = random_logits(gen, 4, 3);
  const Matrix o2 = random_logits(gen, 4, 3);
  const auto y = random_labels(gen, 4, 3);
  const LsrHyperParams hp;
  const double l0 = lsr_total_loss(o1, o2, y, 0.5, 0.0, hp).value;
  const double l1 = lsr_total_loss(o1, o2, y, 0.5, 0.7, hp).value;
  const double l2 = lsr_total_loss(o1, o2, y, 0.5, 1.4, hp).value;
  EXPECT_NEAR(l2 - l0, 2.0 * (l1 - l0), 1e-12);
}

TEST(LsrPlus, ZeroEntropyWeightEqualsTotal) {
  std::mt19937_64 gen(14);
  const Matrix o1 = random_logits(gen, 3, 4);
  const Matrix o2 = random_logits(gen, 3, 4);
  const auto y = random_labels(gen, 3, 4);
  const LsrHyperParams hp;
  EXPECT_EQ(lsr_plus_loss(o1, o2, y, 0.4, 0.3, hp).value, lsr_total_loss(o1, o2, y, 0.4, 0.3, hp).value);
}

TEST(LsrPlus, EntropyTermBounds) {
  LsrHyperParams hp;
  hp.entropy_weight = 1.0;
  hp.sharpen_temperature = 1.0;
  const std::vector<int> y{0};
  // Uniform heads: entropy term is ln M on top of CE = ln M.
  const Matrix uniform(1, 10, 0.0);
  EXPECT_NEAR(lsr_plus_loss(uniform, uniform, y, 1.0, 0.0, hp).value, 2.0 * std::log(10.0), 1e-9);
  // One-hot heads: both terms vanish.
  Matrix peaked(1, 10, 0.0);
  peaked(0, 0) = 800.0;
  EXPECT_NEAR(lsr_plus_loss(peaked, peaked, y, 1.0, 0.0, hp).value, 0.0, 1e-12);
}

TEST(SymmetricCe, HalfProbabilityExample) {
  const Matrix o = row_matrix({{0.0, 0.0}});
  const LossOutput out = symmetric_ce_loss(o, std::vector<int>{0}, SymCeParams{});
  EXPECT_NEAR(out.value, 0.1 * std::log(2.0) + 4.0 * 0.5, 1e-12);
  EXPECT_NEAR(out.value, 2.0693, 1e-4);
}

TEST(SymmetricCe, CertainCorrectIsZero) {
  const Matrix o = row_matrix({{900.0, 0.0, 0.0}});
  EXPECT_NEAR(symmetric_ce_loss(o, std::vector<int>{0}, SymCeParams{}).value, 0.0, 1e-12);
}

TEST(SymmetricCe, ParamValidation) {
  SymCeParams sp;
  sp.log_zero = 0.0;
  EXPECT_THROW(sp.validate(), InvalidParameter);
  sp = SymCeParams{};
  sp.alpha = -1.0;
  EXPECT_THROW(sp.validate(), InvalidParameter);
}

TEST(SmallLossSelect, Examples) {
  EXPECT_EQ(small_loss_select(std::vector<double>{0.1, 2.0, 0.5, 3.0}, 0.5),
            (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(small_loss_select(std::vector<double>{3.0, 1.0, 2.0}, 1.0),
            (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(small_loss_select(std::vector<double>{1.0, 1.0, 1.0, 1.0}, 0.5),
            (std::vector<std::size_t>{0, 1}));
  EXPECT_TRUE(small_loss_select(std::vector<double>{}, 0.5).empty());
  // ceil(0.3 * 5) = 2
  EXPECT_EQ(small_loss_select(std::vector<double>{5, 4, 3, 2, 1}, 0.3).size(), 2u);
  EXPECT_THROW(small_loss_select(std::vector<double>{1.0}, 0.0), InvalidParameter);
}

TEST(HyperParams, Validation) {
  LsrHyperParams hp;
  hp.sharpen_temperature = 0.0;
  EXPECT_THROW(hp.validate(), InvalidParameter);
  hp = LsrHyperParams{};
  hp.fixed_mix_weight = 1.2;
  EXPECT_THROW(hp.validate(), InvalidParameter);
  hp = LsrHyperParams{};
  hp.clamp_lo = 1.0;
  EXPECT_THROW(hp.validate(), InvalidParameter);
}

// -------------------------------------------------------------- properties

class GradientOracle : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientOracle, AdjointsMatchCentralDifferences) {
  const auto suite = testing::gradient_suite(0.35, 0.8);
  const auto& named = suite[GetParam()];
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = testing::random_instance(1000 * GetParam() + seed);
    ASSERT_LE(inst.params.size(), 500u);
    EXPECT_LE(testing::check_two_view(inst, named.loss, named.scale), 1e-3)
        << named.name << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllLosses, GradientOracle,
                         ::testing::Range<std::size_t>(0, testing::gradient_suite(0.5, 0.5).size()),
                         [](const auto& info) {
                           return testing::gradient_suite(0.5, 0.5)[info.param].name;
                         });

TEST(LossProperties, SharpenedCeExceedsCeWhenConfidentlyWrong) {
  std::mt19937_64 gen(21);
  std::uniform_real_distribution<double> temp(0.1, 0.95);
  std::uniform_real_distribution<double> lam(0.0, 1.0);
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t m = 2 + trial % 8;
    Matrix o1 = random_logits(gen, 1, m, 1.0);
    Matrix o2 = random_logits(gen, 1, m, 1.0);
    // Both heads favour class c; the noisy label is any other class.
    const std::size_t c = static_cast<std::size_t>(trial) % m;
    o1(0, c) += 4.0;
    o2(0, c) += 4.0;
    const double lambda = lam(gen);
    const auto p = mixup_prediction(softmax(o1.row(0)), softmax(o2.row(0)), lambda);
    if (p[c] < 0.7) continue;
    const int y = static_cast<int>((c + 1 + static_cast<std::size_t>(trial) % (m - 1)) % m);
    LsrHyperParams hp;
    hp.sharpen_temperature = temp(gen);
    hp.clamp_lo = 1e-300;
    const double sharpened = lsr_cls_loss(o1, o2, std::vector<int>{y}, lambda, hp).value;
    EXPECT_GE(sharpened, -std::log(p[static_cast<std::size_t>(y)])) << trial;
    ++checked;
  }
  EXPECT_GT(checked, 300);
}

TEST(LossProperties, NonNegativeAndJsBounded) {
  std::mt19937_64 gen(22);
  for (int trial = 0; trial < 200; ++trial) {
    const Matrix o1 = random_logits(gen, 3, 5, 4.0);
    const Matrix o2 = random_logits(gen, 3, 5, 4.0);
    const auto y = random_labels(gen, 3, 5);
    EXPECT_GE(ce_loss(o1, y).value, 0.0);
    EXPECT_GE(lsr_cls_loss(o1, o2, y, 0.5, LsrHyperParams{}).value, 0.0);
    EXPECT_GE(symmetric_ce_loss(o1, y, SymCeParams{}).value, 0.0);
    for (DistillKind kind : {DistillKind::kJs, DistillKind::kL1, DistillKind::kL2, DistillKind::kCosine}) {
      LsrHyperParams hp;
      hp.distill = kind;
      const double v = self_distill_loss(o1, o2, hp).value;
      EXPECT_GE(v, -1e-12) << to_string(kind);
      if (kind == DistillKind::kJs) {
        EXPECT_LE(v, std::log(2.0) + 1e-12);
      }
    }
  }
}

TEST(LossProperties, DistillationSymmetricUnderSwap) {
  std::mt19937_64 gen(23);
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix o1 = random_logits(gen, 2, 4);
    const Matrix o2 = random_logits(gen, 2, 4);
    for (DistillKind kind : {DistillKind::kJs, DistillKind::kL1, DistillKind::kL2, DistillKind::kCosine}) {
      LsrHyperParams hp;
      hp.distill = kind;
      const LossOutput a = self_distill_loss(o1, o2, hp);
      const LossOutput b = self_distill_loss(o2, o1, hp);
      EXPECT_NEAR(a.value, b.value, 1e-12) << to_string(kind);
      for (std::size_t i = 0; i < a.adjoint_o1.data().size(); ++i) {
        EXPECT_NEAR(a.adjoint_o1.data()[i], b.adjoint_o2.data()[i], 1e-12);
      }
    }
  }
}

}  // namespace
}  // namespace fedlsr
